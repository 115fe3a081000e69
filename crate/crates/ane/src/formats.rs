//! Text formats: edge lists, labels, embeddings, PPMI dumps, walk corpora
//! and training logs.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ane_core::embed::{CycleRecord, EmbeddingMatrix};
use ane_core::walker::WalkCorpus;
use ane_core::{Graph, Matrix, PpmiMatrix};

use crate::error::{Error, Result, Stage};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a temporary sibling file and renames it into place, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let wrap = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(wrap)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(wrap)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn load_edge_list(path: &Path, weighted: bool) -> Result<Graph> {
    let text = read_text(path)?;
    Graph::parse_edge_list(&text, weighted).map_err(|e| match e {
        ane_core::Error::Parse { line, message } => Error::format(path, line, message),
        other => Error::Core {
            stage: Stage::Load,
            source: other,
        },
    })
}

/// `node_id label` per line.
pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (line, l) in content_lines(text) {
        let mut it = l.split_whitespace();
        match (it.next(), it.next(), it.next()) {
            (Some(id), Some(label), None) => out.push((id.to_owned(), label.to_owned())),
            _ => return Err(Error::format(path, line, "expected `node_id label`")),
        }
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<Vec<(String, String)>> {
    parse_labels(&read_text(path)?, path)
}

/// `{:.16e}` prints 17 significant digits, enough to round-trip any `f64`.
fn push_real(s: &mut String, v: f64) {
    let _ = write!(s, "{v:.16e}");
}

/// Header `N d`, then `id v1 … vd` per node.
pub fn format_embeddings(u: &EmbeddingMatrix) -> String {
    let mut s = String::with_capacity(u.len() * (u.dim() * 24 + 8) + 16);
    let _ = writeln!(s, "{} {}", u.len(), u.dim());
    for (i, id) in u.ids.iter().enumerate() {
        s.push_str(id);
        for &v in u.row(i) {
            s.push(' ');
            push_real(&mut s, v);
        }
        s.push('\n');
    }
    s
}

fn parse_header(path: &Path, line: Option<(usize, &str)>, fields: usize) -> Result<(usize, Vec<String>)> {
    let (no, l) = line.ok_or_else(|| Error::format(path, 1, "missing header"))?;
    let parts: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
    if parts.len() != fields {
        return Err(Error::format(path, no, format!("header needs {fields} fields")));
    }
    Ok((no, parts))
}

fn parse_count(path: &Path, line: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::format(path, line, format!("`{s}` is not a count")))
}

fn parse_real(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::format(path, line, format!("`{s}` is not a number")))
}

pub fn parse_embeddings(text: &str, path: &Path) -> Result<EmbeddingMatrix> {
    let mut lines = content_lines(text);
    let (hl, header) = parse_header(path, lines.next(), 2)?;
    let n = parse_count(path, hl, &header[0])?;
    let d = parse_count(path, hl, &header[1])?;
    let mut ids = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * d);
    for (line, l) in lines {
        let mut it = l.split_whitespace();
        let id = it.next().expect("content lines are non-empty");
        let before = values.len();
        for tok in it {
            values.push(parse_real(path, line, tok)?);
        }
        if values.len() - before != d {
            return Err(Error::format(
                path,
                line,
                format!("expected {d} values, found {}", values.len() - before),
            ));
        }
        ids.push(id.to_owned());
    }
    if ids.len() != n {
        return Err(Error::format(path, hl, format!("header promises {n} rows, found {}", ids.len())));
    }
    let m = Matrix::from_vec(n, d, values).map_err(Error::core(Stage::Load))?;
    EmbeddingMatrix::new(ids, m).map_err(Error::core(Stage::Load))
}

pub fn write_embeddings(path: &Path, u: &EmbeddingMatrix) -> Result<()> {
    write_atomic(path, format_embeddings(u).as_bytes())
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    parse_embeddings(&read_text(path)?, path)
}

/// Header `N t beta`, then one row of `X` per line.
pub fn format_ppmi(x: &PpmiMatrix) -> String {
    let n = x.size();
    let mut s = String::with_capacity(n * n * 24 + 64);
    let _ = write!(s, "{} {} ", n, x.steps);
    push_real(&mut s, x.beta);
    s.push('\n');
    for i in 0..n {
        for (j, &v) in x.values.row(i).iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            push_real(&mut s, v);
        }
        s.push('\n');
    }
    s
}

pub fn parse_ppmi(text: &str, path: &Path) -> Result<PpmiMatrix> {
    let mut lines = content_lines(text);
    let (hl, header) = parse_header(path, lines.next(), 3)?;
    let n = parse_count(path, hl, &header[0])?;
    let steps = parse_count(path, hl, &header[1])?;
    let beta = parse_real(path, hl, &header[2])?;
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (line, l) in lines {
        let before = values.len();
        for tok in l.split_whitespace() {
            values.push(parse_real(path, line, tok)?);
        }
        if values.len() - before != n {
            return Err(Error::format(path, line, format!("expected {n} values per row")));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::format(path, hl, format!("header promises {n} rows, found {rows}")));
    }
    let values = Matrix::from_vec(n, n, values).map_err(Error::core(Stage::Load))?;
    let zero_columns = ane_core::proximity::column_sums(&values)
        .iter()
        .filter(|&&c| c == 0.0)
        .count();
    Ok(PpmiMatrix {
        values,
        steps,
        beta,
        zero_columns,
    })
}

/// External feature matrix: header `N f`, then `id v1 … vf` per node, the
/// same layout as an embedding file.
pub fn load_features(path: &Path, graph: &Graph) -> Result<Matrix> {
    let raw = load_embeddings(path)?;
    let mut out = Matrix::zeros(graph.num_nodes(), raw.dim());
    let index: std::collections::HashMap<&str, usize> =
        raw.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut missing = Vec::new();
    for (i, id) in graph.ids().iter().enumerate() {
        match index.get(id.as_str()) {
            Some(&r) => out.row_mut(i).copy_from_slice(raw.row(r)),
            None => missing.push(id.as_str()),
        }
    }
    if !missing.is_empty() {
        let shown: Vec<_> = missing.iter().take(5).copied().collect();
        return Err(Error::Usage(format!(
            "{}: {} graph node(s) have no feature row, first: {}",
            path.display(),
            missing.len(),
            shown.join(", ")
        )));
    }
    Ok(out)
}

/// One walk per line, dense node indices separated by spaces.
pub fn format_corpus(corpus: &WalkCorpus) -> String {
    let mut s = String::new();
    for walk in corpus.walks() {
        for (k, v) in walk.iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_corpus(text: &str, path: &Path) -> Result<WalkCorpus> {
    let mut walks = Vec::new();
    for (line, l) in content_lines(text) {
        let walk = l
            .split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|_| Error::format(path, line, format!("`{t}` is not a node index"))))
            .collect::<Result<Vec<_>>>()?;
        walks.push(walk);
    }
    let len = walks.first().map_or(0, Vec::len);
    WalkCorpus::from_walks(len, &walks).map_err(Error::core(Stage::Load))
}

pub const LOG_HEADER: &str = "# cycle\tstructure_loss\tdisc_loss\tgen_loss\twall_ms\tdisc_accuracy\tbn_mean_dev\tbn_var_dev";

/// Tab-separated record; phases that did not run are written as `-`.
pub fn format_record(r: &CycleRecord) -> String {
    let mut s = String::new();
    let opt = |s: &mut String, v: Option<f64>| match v {
        Some(v) => push_real(s, v),
        None => s.push('-'),
    };
    let _ = write!(s, "{}\t", r.cycle);
    opt(&mut s, r.structure_loss);
    s.push('\t');
    opt(&mut s, r.disc_loss);
    s.push('\t');
    opt(&mut s, r.gen_loss);
    let _ = write!(s, "\t{}\t", r.wall_ms);
    opt(&mut s, r.disc_accuracy);
    s.push('\t');
    push_real(&mut s, r.bn_mean_dev);
    s.push('\t');
    push_real(&mut s, r.bn_var_dev);
    s
}

pub fn parse_record(line: &str) -> Option<CycleRecord> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 8 {
        return None;
    }
    let opt = |s: &str| -> Option<Option<f64>> {
        if s == "-" {
            Some(None)
        } else {
            s.parse().ok().map(Some)
        }
    };
    Some(CycleRecord {
        cycle: f[0].parse().ok()?,
        structure_loss: opt(f[1])?,
        disc_loss: opt(f[2])?,
        gen_loss: opt(f[3])?,
        wall_ms: f[4].parse().ok()?,
        disc_accuracy: opt(f[5])?,
        bn_mean_dev: f[6].parse().ok()?,
        bn_var_dev: f[7].parse().ok()?,
    })
}

pub fn load_log(path: &Path) -> Result<Vec<CycleRecord>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(line, l)| parse_record(l).ok_or_else(|| Error::format(path, line, "malformed log record")))
        .collect()
}

/// Appends log lines as training runs, then moves the file into place.
pub struct LogWriter {
    tmp: PathBuf,
    path: PathBuf,
    file: std::io::BufWriter<fs::File>,
}

impl LogWriter {
    pub fn create(path: &Path) -> Result<LogWriter> {
        let wrap = |source| Error::Write {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(wrap)?;
        }
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
        let mut file = std::io::BufWriter::new(fs::File::create(&tmp).map_err(wrap)?);
        writeln!(file, "{LOG_HEADER}").map_err(wrap)?;
        Ok(LogWriter {
            tmp,
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn push(&mut self, r: &CycleRecord) -> Result<()> {
        writeln!(self.file, "{}", format_record(r)).map_err(|source| Error::Write {
            path: self.path.clone(),
            source,
        })
    }

    /// Flushes and renames into place. Also used after a failed run, so the
    /// cycles up to the failure are kept.
    pub fn finish(self) -> Result<()> {
        let path = self.path.clone();
        let wrap = |source| Error::Write {
            path: path.clone(),
            source,
        };
        let file = self.file.into_inner().map_err(|e| wrap(e.into_error()))?;
        file.sync_all().map_err(wrap)?;
        fs::rename(&self.tmp, &self.path).map_err(wrap)
    }
}
