//! Node classification: random train/test splits, a one-vs-rest logistic
//! regression and accuracy tables over train ratios.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::seed::{rng_indexed, Stream};

/// Class assignments for a subset of embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    rows: Vec<usize>,
    classes: Vec<usize>,
    names: Vec<String>,
}

impl LabelSet {
    /// Builds a label set from `(row, class name)` pairs. Class indices follow
    /// the sorted order of class names.
    pub fn new<S: AsRef<str>>(assignments: &[(usize, S)]) -> Result<Self> {
        let mut names: Vec<String> = assignments.iter().map(|(_, s)| String::from(s.as_ref())).collect();
        names.sort();
        names.dedup();
        let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut seen = BTreeMap::new();
        let mut rows = Vec::with_capacity(assignments.len());
        let mut classes = Vec::with_capacity(assignments.len());
        for (row, name) in assignments {
            if seen.insert(*row, ()).is_some() {
                return Err(Error::Validation(format!("row {row} is labeled twice")));
            }
            rows.push(*row);
            classes.push(index[name.as_ref()]);
        }
        Ok(LabelSet { rows, classes, names })
    }

    /// Maps `(node id, class name)` pairs onto the rows of `ids`. Fails with
    /// the first five ids that have no row.
    pub fn align<S: AsRef<str>, T: AsRef<str>>(ids: &[S], labels: &[(T, T)]) -> Result<Self> {
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_ref(), i)).collect();
        let mut missing = Vec::new();
        let mut total_missing = 0;
        let mut pairs = Vec::with_capacity(labels.len());
        for (id, class) in labels {
            match index.get(id.as_ref()) {
                Some(&row) => pairs.push((row, class.as_ref())),
                None => {
                    total_missing += 1;
                    if missing.len() < 5 {
                        missing.push(id.as_ref());
                    }
                }
            }
        }
        if total_missing > 0 {
            return Err(Error::Validation(format!(
                "{total_missing} labeled node(s) have no embedding, first: {}",
                missing.join(", ")
            )));
        }
        LabelSet::new(&pairs)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_ratio: f64,
    pub repetitions: usize,
    pub seed: u64,
}

/// Positions into a [`LabelSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// False when some class is still missing from `train` after all redraws.
    pub all_classes_in_train: bool,
}

pub const MAX_REDRAWS: usize = 20;

/// Uniform random split with `round(ratio · n)` training items, redrawn up to
/// [`MAX_REDRAWS`] times while a class is absent from the training side.
pub fn split(labels: &LabelSet, spec: &SplitSpec, rep: usize) -> Result<Split> {
    let n = labels.len();
    if !(spec.train_ratio > 0.0 && spec.train_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train ratio must lie in (0, 1), got {}",
            spec.train_ratio
        )));
    }
    let n_train = libm::round(spec.train_ratio * n as f64) as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument(format!(
            "ratio {} leaves an empty side with {n} labeled nodes",
            spec.train_ratio
        )));
    }
    let mut rng = rng_indexed(spec.seed, Stream::Split, rep as u64);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut ok = false;
    for _ in 0..=MAX_REDRAWS {
        perm.shuffle(&mut rng);
        let mut present = vec![false; labels.num_classes()];
        for &p in &perm[..n_train] {
            present[labels.classes[p]] = true;
        }
        if present.iter().all(|&b| b) {
            ok = true;
            break;
        }
    }
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        test,
        all_classes_in_train: ok,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Coefficient of `½‖w‖²` added to the mean logistic loss. `None` uses
    /// `1/n_train`, the scaling of a unit-cost linear SVM.
    pub l2: Option<f64>,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            l2: None,
            max_iter: 3000,
            tolerance: 1e-5,
        }
    }
}

/// One binary logistic model per class; the intercept is not penalized.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOvr {
    /// `classes × dim`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub iterations: Vec<usize>,
}

impl LinearOvr {
    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        (0..self.weights.rows())
            .map(|c| dot(self.weights.row(c), x) + self.bias[c])
            .collect()
    }

    /// Highest-scoring class; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let s = self.decision(x);
        let mut best = 0;
        for (c, &v) in s.iter().enumerate() {
            if v > s[best] {
                best = c;
            }
        }
        best
    }
}

/// Regularized mean logistic loss of one binary problem with targets ±1.
pub fn logistic_objective(x: &Matrix, y: &[f64], w: &[f64], b: f64, l2: f64) -> f64 {
    let n = x.rows() as f64;
    let data: f64 = (0..x.rows())
        .map(|i| crate::nn::softplus(-y[i] * (dot(x.row(i), w) + b)))
        .sum();
    data / n + 0.5 * l2 * dot(w, w)
}

fn logistic_gradient(x: &Matrix, y: &[f64], w: &[f64], b: f64, l2: f64, gw: &mut [f64]) -> f64 {
    let n = x.rows() as f64;
    gw.iter_mut().zip(w).for_each(|(g, wi)| *g = l2 * wi);
    let mut gb = 0.0;
    for i in 0..x.rows() {
        let m = y[i] * (dot(x.row(i), w) + b);
        let coef = -y[i] * crate::nn::sigmoid(-m) / n;
        axpy(coef, x.row(i), gw);
        gb += coef;
    }
    gb
}

/// Fits one-vs-rest logistic regression by Nesterov-accelerated full-batch
/// gradient descent with adaptive restart.
pub fn fit_linear_ovr(x: &Matrix, y: &[usize], num_classes: usize, cfg: &FitConfig) -> Result<LinearOvr> {
    if x.rows() != y.len() {
        return Err(Error::shape(x.rows(), y.len()));
    }
    if x.rows() == 0 {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    let mut present = vec![false; num_classes];
    for &c in y {
        if c >= num_classes {
            return Err(Error::InvalidArgument(format!("class {c} out of range")));
        }
        present[c] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::InvalidArgument("need at least two classes to fit a classifier".into()));
    }
    let n = x.rows();
    let d = x.cols();
    let l2 = cfg.l2.unwrap_or(1.0 / n as f64);
    // σ′ ≤ ¼ and λ_max(X̃ᵀX̃/n) ≤ max ‖x̃ᵢ‖² with the intercept column
    let max_sq = (0..n).map(|i| dot(x.row(i), x.row(i)) + 1.0).fold(0.0, f64::max);
    let step = 1.0 / (0.25 * max_sq + l2);

    let mut weights = Matrix::zeros(num_classes, d);
    let mut bias = vec![0.0; num_classes];
    let mut iterations = vec![0; num_classes];
    let mut gw = vec![0.0; d];
    for c in 0..num_classes {
        if !present[c] {
            // never predicted: scores −∞ would break argmax ties, a large
            // negative intercept suffices
            bias[c] = -1e3;
            continue;
        }
        let t: Vec<f64> = y.iter().map(|&k| if k == c { 1.0 } else { -1.0 }).collect();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut w_prev = w.clone();
        let mut b_prev = b;
        let mut momentum = 0.0f64;
        let mut theta = 1.0f64;
        let mut f_prev = f64::INFINITY;
        let mut it = 0;
        while it < cfg.max_iter {
            it += 1;
            // lookahead point
            let yw: Vec<f64> = w.iter().zip(&w_prev).map(|(a, p)| a + momentum * (a - p)).collect();
            let yb = b + momentum * (b - b_prev);
            let gb = logistic_gradient(x, &t, &yw, yb, l2, &mut gw);
            let gnorm = libm::sqrt(dot(&gw, &gw) + gb * gb);
            if gnorm < cfg.tolerance {
                w = yw;
                b = yb;
                break;
            }
            w_prev.copy_from_slice(&w);
            b_prev = b;
            for j in 0..d {
                w[j] = yw[j] - step * gw[j];
            }
            b = yb - step * gb;
            let f = logistic_objective(x, &t, &w, b, l2);
            if f > f_prev {
                // restart momentum
                theta = 1.0;
                momentum = 0.0;
            } else {
                let next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * theta * theta));
                momentum = (theta - 1.0) / next;
                theta = next;
            }
            f_prev = f;
        }
        weights.row_mut(c).copy_from_slice(&w);
        bias[c] = b;
        iterations[c] = it;
    }
    Ok(LinearOvr {
        weights,
        bias,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub ratios: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
    /// Scale each embedding row to unit length before fitting.
    pub normalize: bool,
    pub fit: FitConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ratios: (1..=9).map(|k| k as f64 / 10.0).collect(),
            repetitions: 10,
            seed: 0,
            normalize: true,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub ratio: f64,
    pub mean: f64,
    /// Sample standard deviation; zero for a single repetition.
    pub std: f64,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
    pub warnings: Vec<String>,
}

pub fn l2_normalize_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let r = out.row_mut(i);
        let norm = libm::sqrt(dot(r, r));
        if norm > 0.0 {
            r.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Test accuracy of a classifier fitted on one split.
pub fn split_accuracy(x: &Matrix, labels: &LabelSet, split: &Split, fit: &FitConfig) -> Result<f64> {
    let rows = |pos: &[usize]| pos.iter().map(|&p| labels.rows[p]).collect::<Vec<_>>();
    let xtr = x.select_rows(&rows(&split.train));
    let ytr: Vec<usize> = split.train.iter().map(|&p| labels.classes[p]).collect();
    let model = fit_linear_ovr(&xtr, &ytr, labels.num_classes(), fit)?;
    let correct = split
        .test
        .iter()
        .filter(|&&p| model.predict(x.row(labels.rows[p])) == labels.classes[p])
        .count();
    Ok(correct as f64 / split.test.len() as f64)
}

/// Mean and spread of test accuracy over repeated random splits per ratio.
pub fn evaluate(embeddings: &Matrix, labels: &LabelSet, cfg: &EvalConfig) -> Result<AccuracyTable> {
    if labels.num_classes() < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if cfg.repetitions == 0 {
        return Err(Error::InvalidArgument("need at least one repetition".into()));
    }
    if let Some(&r) = labels.rows.iter().find(|&&r| r >= embeddings.rows()) {
        return Err(Error::Validation(format!("label row {r} exceeds embedding rows")));
    }
    let x = if cfg.normalize {
        l2_normalize_rows(embeddings)
    } else {
        embeddings.clone()
    };
    let mut table = AccuracyTable::default();
    for &ratio in &cfg.ratios {
        let spec = SplitSpec {
            train_ratio: ratio,
            repetitions: cfg.repetitions,
            seed: cfg.seed,
        };
        let mut accuracies = Vec::with_capacity(cfg.repetitions);
        for rep in 0..cfg.repetitions {
            let s = split(labels, &spec, rep)?;
            if !s.all_classes_in_train {
                table.warnings.push(format!(
                    "ratio {ratio}, repetition {rep}: a class is missing from the training split after {MAX_REDRAWS} redraws"
                ));
            }
            accuracies.push(split_accuracy(&x, labels, &s, &cfg.fit)?);
        }
        let (mean, std) = mean_std(&accuracies);
        table.rows.push(AccuracyRow {
            ratio,
            mean,
            std,
            accuracies,
        });
    }
    Ok(table)
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels_of(classes: &[usize]) -> LabelSet {
        let pairs: Vec<(usize, String)> = classes.iter().enumerate().map(|(i, c)| (i, c.to_string())).collect();
        LabelSet::new(&pairs).unwrap()
    }

    fn spec(ratio: f64) -> SplitSpec {
        SplitSpec {
            train_ratio: ratio,
            repetitions: 10,
            seed: 1,
        }
    }

    #[test]
    fn split_sizes_partition_and_determinism() {
        let l = labels_of(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let s = split(&l, &spec(0.5), 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (5, 5));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(s, split(&l, &spec(0.5), 0).unwrap());
        assert_ne!(s, split(&l, &spec(0.5), 1).unwrap());
        assert!(s.all_classes_in_train);
        assert!(split(&l, &spec(1.0), 0).is_err());
        assert!(split(&l, &spec(0.01), 0).is_err());
    }

    #[test]
    fn rare_class_triggers_redraws() {
        let mut classes = vec![0; 40];
        classes[7] = 1;
        let l = labels_of(&classes);
        let s = split(&l, &spec(0.5), 3).unwrap();
        assert!(s.all_classes_in_train);
        assert!(s.train.contains(&7));
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_fn(40, 2, |i, j| {
            let c = if i < 20 { 1.0 } else { -1.0 };
            c * (2.0 + j as f64) + 0.3 * (rng.random::<f64>() - 0.5)
        });
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let m = fit_linear_ovr(&x, &y, 2, &FitConfig::default()).unwrap();
        assert!((0..40).all(|i| m.predict(x.row(i)) == y[i]));
        assert!(fit_linear_ovr(&x, &vec![0; 40], 2, &FitConfig::default()).is_err());
    }

    #[test]
    fn optimization_never_worse_than_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_fn(30, 4, |_, _| rng.random::<f64>() - 0.5);
        let y: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
        let cfg = FitConfig::default();
        let m = fit_linear_ovr(&x, &y, 3, &cfg).unwrap();
        let l2 = 1.0 / 30.0;
        for c in 0..3 {
            let t: Vec<f64> = y.iter().map(|&k| if k == c { 1.0 } else { -1.0 }).collect();
            let fitted = logistic_objective(&x, &t, m.weights.row(c), m.bias[c], l2);
            let zero = logistic_objective(&x, &t, &[0.0; 4], 0.0, l2);
            assert!(fitted <= zero);
            // converged to the stationary point
            let mut g = vec![0.0; 4];
            let gb = logistic_gradient(&x, &t, m.weights.row(c), m.bias[c], l2, &mut g);
            assert!(libm::sqrt(dot(&g, &g) + gb * gb) < 1e-5);
        }
    }

    #[test]
    fn random_labels_score_near_majority_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200;
        let x = Matrix::from_fn(n, 8, |_, _| rng.random::<f64>() - 0.5);
        let classes: Vec<usize> = (0..n).map(|_| usize::from(rng.random::<f64>() < 0.35)).collect();
        let majority = classes.iter().filter(|&&c| c == 0).count() as f64 / n as f64;
        let table = evaluate(
            &x,
            &labels_of(&classes),
            &EvalConfig {
                ratios: vec![0.5],
                ..EvalConfig::default()
            },
        )
        .unwrap();
        assert!((table.rows[0].mean - majority).abs() < 0.1, "{} vs {majority}", table.rows[0].mean);
    }

    #[test]
    fn one_hot_embeddings_are_perfect() {
        let classes: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let x = Matrix::from_fn(300, 3, |i, j| if classes[i] == j { 1.0 } else { 0.0 });
        let table = evaluate(&x, &labels_of(&classes), &EvalConfig::default()).unwrap();
        assert_eq!(table.rows.len(), 9);
        for row in &table.rows {
            assert_eq!(row.mean, 1.0, "{row:?} {:?}", table.warnings);
            assert_eq!(row.std, 0.0);
            assert_eq!(row.accuracies.len(), 10);
        }
    }

    #[test]
    fn constant_embeddings_predict_the_training_majority() {
        let classes: Vec<usize> = (0..50).map(|i| usize::from(i % 5 == 0)).collect();
        let l = labels_of(&classes);
        let x = Matrix::from_fn(50, 3, |_, _| 0.5);
        let s = split(&l, &spec(0.5), 0).unwrap();
        let acc = split_accuracy(&x, &l, &s, &FitConfig::default()).unwrap();
        let share = s.test.iter().filter(|&&p| classes[p] == 0).count() as f64 / s.test.len() as f64;
        assert_eq!(acc, share);
    }

    #[test]
    fn column_permutation_keeps_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::from_fn(60, 5, |_, _| rng.random::<f64>() - 0.5);
        let classes: Vec<usize> = (0..60).map(|i| usize::from(x[(i, 0)] + x[(i, 3)] > 0.0)).collect();
        let perm = [3, 0, 4, 1, 2];
        let xp = Matrix::from_fn(60, 5, |i, j| x[(i, perm[j])]);
        let y = &classes[..40];
        let a = fit_linear_ovr(&x.select_rows(&(0..40).collect::<Vec<_>>()), y, 2, &FitConfig::default()).unwrap();
        let b = fit_linear_ovr(&xp.select_rows(&(0..40).collect::<Vec<_>>()), y, 2, &FitConfig::default()).unwrap();
        for i in 40..60 {
            assert_eq!(a.predict(x.row(i)), b.predict(xp.row(i)));
        }
    }

    #[test]
    fn alignment_reports_first_five_offenders() {
        let ids = ["a", "b"];
        let labels: Vec<(String, String)> = ["a", "x1", "x2", "x3", "x4", "x5", "x6"]
            .iter()
            .map(|s| (s.to_string(), "c".to_string()))
            .collect();
        let err = LabelSet::align(&ids, &labels).unwrap_err().to_string();
        assert!(err.contains("6 labeled"), "{err}");
        assert!(err.contains("x1, x2, x3, x4, x5") && !err.contains("x6"), "{err}");
        let ok = LabelSet::align(&ids, &labels[..1]).unwrap();
        assert_eq!(ok.rows(), &[0]);
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[1.0]), (1.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
