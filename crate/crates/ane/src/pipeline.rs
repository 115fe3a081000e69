//! End-to-end runs behind the `embed`, `eval` and `sweep` commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ane_core::embed::{train_with_features, Clock, EmbeddingMatrix, NoClock, Prior, TrainConfig, TrainingLog};
use ane_core::eval::{evaluate, AccuracyTable, EvalConfig, LabelSet};
use ane_core::proximity::ppmi_features;
use ane_core::seed::{rng, Stream};
use ane_core::walker::random_walks;
use ane_core::{Graph, SparseRows};

use crate::error::{Error, Result, Stage};
use crate::formats::{self, LogWriter};
use crate::manifest::{self, Artifacts, Dataset, RunConfig, RunManifest, Summary, Timing, MANIFEST_VERSION};
use crate::{checkpoint, DATA_DIR_ENV};

pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const LOG_FILE: &str = "training.log";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PPMI_FILE: &str = "ppmi.txt";
pub const CORPUS_FILE: &str = "corpus.txt";

/// Looks for `path` as given, then under `$ANE_DATA_DIR`. Unresolved paths
/// are returned unchanged so the read error names them.
pub fn resolve_input(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
        let candidate = Path::new(&root).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

#[derive(Debug, Clone)]
pub struct EmbedRequest {
    pub edges: PathBuf,
    pub weighted: bool,
    pub features: Option<PathBuf>,
    pub config: TrainConfig,
    pub out_dir: PathBuf,
    /// Record real elapsed milliseconds in the training log. Off by default
    /// so repeated runs produce identical logs.
    pub log_timing: bool,
    pub dump_ppmi: bool,
    pub save_corpus: bool,
}

impl EmbedRequest {
    pub fn new(edges: impl Into<PathBuf>, config: TrainConfig, out_dir: impl Into<PathBuf>) -> Self {
        EmbedRequest {
            edges: edges.into(),
            weighted: false,
            features: None,
            config,
            out_dir: out_dir.into(),
            log_timing: false,
            dump_ppmi: false,
            save_corpus: false,
        }
    }

    /// Rebuilds the request recorded in a manifest, writing to `out_dir`.
    pub fn from_manifest(m: &RunManifest, out_dir: impl Into<PathBuf>) -> Result<Self> {
        Ok(EmbedRequest {
            edges: m.dataset.edges.clone(),
            weighted: m.dataset.weighted,
            features: m.dataset.features.clone(),
            config: m.train_config()?,
            out_dir: out_dir.into(),
            log_timing: m.log_timing,
            dump_ppmi: m.artifacts.ppmi.is_some(),
            save_corpus: m.artifacts.corpus.is_some(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub embeddings: EmbeddingMatrix,
    pub log: TrainingLog,
    pub manifest: RunManifest,
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn elapsed_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

pub fn load_graph(path: &Path, weighted: bool) -> Result<Graph> {
    let g = formats::load_edge_list(path, weighted)?;
    g.preprocess().map_err(Error::core(Stage::Preprocess))
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Load → preprocess → features → train → export. Outputs land in
/// `req.out_dir`; the training log is kept even when training fails.
pub fn run_embed(req: &EmbedRequest) -> Result<EmbedOutcome> {
    let start = Instant::now();
    let edges = resolve_input(&req.edges);
    let cfg = &req.config;
    cfg.validate().map_err(Error::core(Stage::Train))?;
    let graph = load_graph(&edges, req.weighted)?;

    let features_path = req.features.as_deref().map(resolve_input);
    let features = match &features_path {
        Some(p) => SparseRows::from_dense(&formats::load_features(p, &graph)?),
        None => {
            let x = ppmi_features(&graph, &cfg.ppmi).map_err(Error::core(Stage::Proximity))?;
            if req.dump_ppmi {
                formats::write_atomic(&req.out_dir.join(PPMI_FILE), formats::format_ppmi(&x).as_bytes())?;
            }
            x.to_sparse()
        }
    };
    if req.save_corpus && cfg.model.uses_walks() {
        // the trainer draws the same walks from the same stream
        let corpus = random_walks(&graph, &cfg.walk, &mut rng(cfg.seed, Stream::Walks))
            .map_err(Error::core(Stage::Walk))?;
        formats::write_atomic(&req.out_dir.join(CORPUS_FILE), formats::format_corpus(&corpus).as_bytes())?;
    }

    let mut log_file = LogWriter::create(&req.out_dir.join(LOG_FILE))?;
    let mut write_error = None;
    let train_start = Instant::now();
    let wall = WallClock(train_start);
    let clock: &dyn Clock = if req.log_timing { &wall } else { &NoClock };
    let trained = train_with_features(&graph, &features, cfg, clock, &mut |r| {
        if write_error.is_none() {
            if let Err(e) = log_file.push(r) {
                write_error = Some(e);
            }
        }
    });
    let train_ms = train_start.elapsed().as_millis() as u64;
    log_file.finish()?;
    if let Some(e) = write_error {
        return Err(e);
    }
    let out = trained.map_err(Error::core(Stage::Train))?;

    formats::write_embeddings(&req.out_dir.join(EMBEDDINGS_FILE), &out.embeddings)?;
    checkpoint::save(&req.out_dir.join(CHECKPOINT_FILE), &out.networks)?;
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        command: "embed".to_owned(),
        dataset: Dataset {
            edges: absolute(&edges),
            weighted: req.weighted,
            features: features_path.as_deref().map(absolute),
        },
        config: RunConfig::from(cfg),
        log_timing: req.log_timing,
        artifacts: Artifacts {
            embeddings: EMBEDDINGS_FILE.to_owned(),
            log: LOG_FILE.to_owned(),
            checkpoint: CHECKPOINT_FILE.to_owned(),
            ppmi: (req.dump_ppmi && features_path.is_none()).then(|| PPMI_FILE.to_owned()),
            corpus: (req.save_corpus && cfg.model.uses_walks()).then(|| CORPUS_FILE.to_owned()),
        },
        summary: Summary {
            nodes: graph.num_nodes(),
            edges: graph.num_edges(),
            cycles: out.log.records.len(),
            initial_probe_loss: out.log.initial_probe_loss,
            final_probe_loss: out.log.final_probe_loss,
            config_digest: format!("{:016x}", cfg.digest()),
        },
        timing: Timing {
            total_ms: start.elapsed().as_millis() as u64,
            train_ms,
        },
    };
    manifest::save(&req.out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(EmbedOutcome {
        embeddings: out.embeddings,
        log: out.log,
        manifest,
    })
}

pub fn run_eval(embeddings: &Path, labels: &Path, cfg: &EvalConfig) -> Result<AccuracyTable> {
    let u = formats::load_embeddings(&resolve_input(embeddings))?;
    let pairs = formats::load_labels(&resolve_input(labels))?;
    eval_embeddings(&u, &pairs, cfg)
}

pub fn eval_embeddings(u: &EmbeddingMatrix, labels: &[(String, String)], cfg: &EvalConfig) -> Result<AccuracyTable> {
    let labels = LabelSet::align(&u.ids, labels).map_err(Error::core(Stage::Eval))?;
    evaluate(&u.values, &labels, cfg).map_err(Error::core(Stage::Eval))
}

/// `ratio  mean_acc  std_acc  n_reps`, accuracies in percent.
pub fn format_table(t: &AccuracyTable) -> String {
    let mut s = String::from("ratio\tmean_acc\tstd_acc\tn_reps\n");
    for r in &t.rows {
        let _ = writeln!(
            s,
            "{:.2}\t{:.2}\t{:.2}\t{}",
            r.ratio,
            100.0 * r.mean,
            100.0 * r.std,
            r.accuracies.len()
        );
    }
    s
}

/// Axes left as `None` keep the base configuration's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepGrid {
    pub dims: Option<Vec<usize>>,
    pub walk_lengths: Option<Vec<usize>>,
    pub contexts: Option<Vec<usize>>,
    pub priors: Option<Vec<Prior>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub dim: usize,
    pub walk_length: usize,
    pub context_size: usize,
    pub prior: Prior,
}

impl SweepGrid {
    /// Cartesian product of the swept axes. No swept axis, or any swept axis
    /// without values, gives no points.
    pub fn points(&self, base: &TrainConfig) -> Vec<SweepPoint> {
        if self.dims.is_none() && self.walk_lengths.is_none() && self.contexts.is_none() && self.priors.is_none() {
            return Vec::new();
        }
        let dims = self.dims.clone().unwrap_or_else(|| vec![base.dim]);
        let lens = self.walk_lengths.clone().unwrap_or_else(|| vec![base.walk.walk_length]);
        let ctxs = self.contexts.clone().unwrap_or_else(|| vec![base.walk.context_size]);
        let priors = self.priors.clone().unwrap_or_else(|| vec![base.prior]);
        let mut out = Vec::new();
        for &dim in &dims {
            for &walk_length in &lens {
                for &context_size in &ctxs {
                    for &prior in &priors {
                        out.push(SweepPoint {
                            dim,
                            walk_length,
                            context_size,
                            prior,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepRequest {
    pub edges: PathBuf,
    pub labels: PathBuf,
    pub weighted: bool,
    pub base: TrainConfig,
    pub grid: SweepGrid,
    pub eval: EvalConfig,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub point: SweepPoint,
    pub result: std::result::Result<AccuracyTable, String>,
}

/// One embed and eval per grid point. A failing point is recorded and the
/// sweep moves on.
pub fn run_sweep(req: &SweepRequest) -> Result<Vec<SweepRow>> {
    let points = req.grid.points(&req.base);
    if points.is_empty() {
        return Err(Error::Usage("no sweep points".into()));
    }
    let labels = formats::load_labels(&resolve_input(&req.labels))?;
    let mut rows = Vec::with_capacity(points.len());
    for (index, point) in points.into_iter().enumerate() {
        let mut cfg = req.base.clone();
        cfg.dim = point.dim;
        cfg.walk.walk_length = point.walk_length;
        cfg.walk.context_size = point.context_size;
        cfg.prior = point.prior;
        let mut embed = EmbedRequest::new(&req.edges, cfg, req.out_dir.join(format!("point-{index:03}")));
        embed.weighted = req.weighted;
        let result = run_embed(&embed)
            .and_then(|o| eval_embeddings(&o.embeddings, &labels, &req.eval))
            .map_err(|e| e.to_string());
        rows.push(SweepRow { index, point, result });
    }
    Ok(rows)
}

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut s = String::from("point\tdim\twalk_length\tcontext\tprior\tratio\tmean_acc\tstd_acc\tn_reps\tstatus\n");
    for r in rows {
        let p = &r.point;
        let head = format!("{}\t{}\t{}\t{}\t{}", r.index, p.dim, p.walk_length, p.context_size, p.prior.name());
        match &r.result {
            Ok(t) => {
                for row in &t.rows {
                    let _ = writeln!(
                        s,
                        "{head}\t{:.2}\t{:.2}\t{:.2}\t{}\tok",
                        row.ratio,
                        100.0 * row.mean,
                        100.0 * row.std,
                        row.accuracies.len()
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(s, "{head}\t-\t-\t-\t0\terror: {}", e.replace(['\t', '\n'], " "));
            }
        }
    }
    s
}
