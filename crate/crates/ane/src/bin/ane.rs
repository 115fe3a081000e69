use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ane::core::embed::{ModelKind, Prior, TrainConfig};
use ane::core::eval::{EvalConfig, FitConfig};
use ane::core::nn::NormOrder;
use ane::manifest;
use ane::pipeline::{self, EmbedRequest, SweepGrid, SweepRequest};
use ane::{Error, Result};

/// Adversarial network embedding: train node embeddings, evaluate them by
/// node classification and sweep hyperparameters.
#[derive(Parser, Debug)]
#[command(name = "ane", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train embeddings for an edge list.
    Embed(EmbedArgs),
    /// Score embeddings by one-vs-rest node classification.
    Eval(EvalArgs),
    /// Run embed + eval over a hyperparameter grid.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    /// idw, aidw, dae or adae
    #[arg(long, default_value = "aidw", value_parser = parse_model)]
    model: ModelKind,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    /// Walks started per node
    #[arg(long, default_value_t = 10)]
    walks: usize,
    #[arg(long, default_value_t = 80)]
    walk_length: usize,
    /// Context window size s
    #[arg(long, default_value_t = 10)]
    context: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    /// Transition steps t summed into the proximity matrix
    #[arg(long, default_value_t = 4)]
    ppmi_steps: usize,
    /// PPMI shift; defaults to 1/N
    #[arg(long)]
    ppmi_beta: Option<f64>,
    /// uniform or gaussian
    #[arg(long, default_value = "uniform", value_parser = parse_prior)]
    prior: Prior,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Stop after this many training cycles
    #[arg(long)]
    max_cycles: Option<usize>,
    /// Structure minibatch size
    #[arg(long, default_value_t = 256)]
    batch: usize,
    /// Samples per side of an adversarial minibatch
    #[arg(long, default_value_t = 128)]
    adv_batch: usize,
    /// Learning rate for every optimizer unless overridden
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long)]
    disc_lr: Option<f64>,
    #[arg(long)]
    gen_lr: Option<f64>,
    #[arg(long, default_value_t = 1)]
    structure_steps: usize,
    #[arg(long, default_value_t = 1)]
    disc_steps: usize,
    #[arg(long, default_value_t = 1)]
    gen_steps: usize,
    /// Masking fraction for the denoising models
    #[arg(long, default_value_t = 0.2)]
    corruption: f64,
    /// Put batch norm before the generator's activation
    #[arg(long)]
    bn_before_activation: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Treat the third column of the edge list as a weight
    #[arg(long)]
    weighted: bool,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        let mut c = TrainConfig {
            model: self.model,
            dim: self.dim,
            negatives: self.negatives,
            epochs: self.epochs,
            max_cycles: self.max_cycles,
            batch_size: self.batch,
            adversarial_batch: self.adv_batch,
            structure_steps: self.structure_steps,
            disc_steps: self.disc_steps,
            gen_steps: self.gen_steps,
            learning_rate: self.lr,
            disc_learning_rate: self.disc_lr.unwrap_or(self.lr),
            gen_learning_rate: self.gen_lr.unwrap_or(self.lr),
            prior: self.prior,
            corruption: self.corruption,
            norm_order: if self.bn_before_activation {
                NormOrder::BeforeActivation
            } else {
                NormOrder::AfterActivation
            },
            seed: self.seed,
            ..TrainConfig::default()
        };
        c.walk.walks_per_node = self.walks;
        c.walk.walk_length = self.walk_length;
        c.walk.context_size = self.context;
        c.ppmi.steps = self.ppmi_steps;
        c.ppmi.beta = self.ppmi_beta;
        c
    }
}

#[derive(Args, Debug)]
struct EmbedArgs {
    /// Edge list, resolved against $ANE_DATA_DIR when not found as given
    #[arg(required_unless_present = "manifest")]
    edges: Option<PathBuf>,
    #[command(flatten)]
    train: TrainArgs,
    /// Output directory
    #[arg(long, default_value = "ane-out")]
    out: PathBuf,
    /// Repeat the run recorded in a manifest (other training flags are ignored)
    #[arg(long, conflicts_with = "edges")]
    manifest: Option<PathBuf>,
    /// Precomputed feature matrix used instead of PPMI rows
    #[arg(long)]
    features: Option<PathBuf>,
    /// Write real elapsed times into the training log
    #[arg(long)]
    timing: bool,
    /// Also write the PPMI matrix
    #[arg(long)]
    dump_ppmi: bool,
    /// Also write the walk corpus
    #[arg(long)]
    save_corpus: bool,
}

#[derive(Args, Debug, Clone)]
struct ScoreArgs {
    /// Comma-separated train ratios
    #[arg(long, value_delimiter = ',', default_values_t = default_ratios())]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Seed for the train/test splits
    #[arg(long = "split-seed", default_value_t = 0)]
    split_seed: u64,
    /// Skip unit-length row normalization
    #[arg(long)]
    no_normalize: bool,
    /// Classifier L2 weight; defaults to 1/n_train
    #[arg(long)]
    l2: Option<f64>,
}

impl ScoreArgs {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            ratios: self.ratios.clone(),
            repetitions: self.reps,
            seed: self.split_seed,
            normalize: !self.no_normalize,
            fit: FitConfig {
                l2: self.l2,
                ..FitConfig::default()
            },
        }
    }
}

fn default_ratios() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

#[derive(Args, Debug)]
struct EvalArgs {
    embeddings: PathBuf,
    labels: PathBuf,
    #[command(flatten)]
    score: ScoreArgs,
    /// Also write the table here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    edges: PathBuf,
    labels: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    walk_lengths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    contexts: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 0.., value_parser = parse_prior)]
    priors: Option<Vec<Prior>>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value = "ane-sweep")]
    out: PathBuf,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: ane::core::Error| e.to_string())
}

fn parse_prior(s: &str) -> std::result::Result<Prior, String> {
    s.parse().map_err(|e: ane::core::Error| e.to_string())
}

fn embed(args: EmbedArgs) -> Result<()> {
    let req = match &args.manifest {
        Some(path) => {
            let m = manifest::load(&pipeline::resolve_input(path))?;
            EmbedRequest::from_manifest(&m, &args.out)?
        }
        None => EmbedRequest {
            edges: args.edges.clone().expect("clap requires edges without a manifest"),
            weighted: args.train.weighted,
            features: args.features.clone(),
            config: args.train.config(),
            out_dir: args.out.clone(),
            log_timing: args.timing,
            dump_ppmi: args.dump_ppmi,
            save_corpus: args.save_corpus,
        },
    };
    let out = pipeline::run_embed(&req)?;
    let s = &out.manifest.summary;
    eprintln!(
        "{} nodes, {} edges, {} cycles, probe loss {:.4} -> {:.4}",
        s.nodes, s.edges, s.cycles, s.initial_probe_loss, s.final_probe_loss
    );
    println!("{}", req.out_dir.join(pipeline::EMBEDDINGS_FILE).display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let table = pipeline::run_eval(&args.embeddings, &args.labels, &args.score.config())?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    let text = pipeline::format_table(&table);
    if let Some(out) = &args.out {
        ane::formats::write_atomic(out, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let score = ScoreArgs {
        ratios: args.ratios.clone(),
        reps: args.reps,
        split_seed: args.train.seed,
        no_normalize: false,
        l2: None,
    };
    let req = SweepRequest {
        edges: args.edges,
        labels: args.labels,
        weighted: args.train.weighted,
        base: args.train.config(),
        grid: SweepGrid {
            dims: args.dims,
            walk_lengths: args.walk_lengths,
            contexts: args.contexts,
            priors: args.priors,
        },
        eval: score.config(),
        out_dir: args.out.clone(),
    };
    let rows = pipeline::run_sweep(&req)?;
    let text = pipeline::format_sweep(&rows);
    ane::formats::write_atomic(&args.out.join("sweep.tsv"), text.as_bytes())?;
    print!("{text}");
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} of {} sweep points failed", rows.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Embed(a) => embed(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
