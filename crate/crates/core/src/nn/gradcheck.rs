//! Central-difference verification of analytic gradients.

use alloc::vec::Vec;

use super::mlp::{Grads, Mlp};

/// Relative errors below this magnitude of both gradients are measured
/// against the floor instead of the gradient itself. Batch-norm backward
/// passes through low-variance units leave rounding of order 1e-9 in
/// gradients that are exactly zero, so tiny gradients are compared in
/// absolute terms.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Number of parameters compared.
    pub checked: usize,
    /// Parameters skipped because every step crossed a leaky-ReLU kink.
    pub skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    libm::fabs(analytic - numeric) / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central differences are taken at `h · 10^(−k/2)` for `k < RUNGS`.
const RUNGS: i32 = 11;

/// Central difference at the plateau of a step ladder: the adjacent pair of
/// steps whose estimates agree best, past truncation error and before
/// roundoff. `central` returns `None` for steps that cross a kink; `None`
/// overall means no step was usable.
fn derivative<F>(mut central: F, h: f64) -> Option<f64>
where
    F: FnMut(f64) -> Option<f64>,
{
    let d: Vec<Option<f64>> = (0..RUNGS).map(|k| central(h * libm::pow(10.0, -0.5 * k as f64))).collect();
    let plateau = d
        .windows(2)
        .filter_map(|w| Some((w[0]?, w[1]?)))
        .min_by(|a, b| libm::fabs(a.0 - a.1).total_cmp(&libm::fabs(b.0 - b.1)));
    match plateau {
        Some((a, b)) => Some(0.5 * (a + b)),
        None => d.into_iter().flatten().next(),
    }
}

/// Compares `analytic` against central differences for every trainable
/// parameter of every network, with steps from `h` down to `h / 10⁵`.
///
/// `loss` returns the loss and a kink signature (see
/// [`Mlp::kink_signature`]); steps whose perturbation changes the signature
/// are not used, and parameters with no usable step are skipped.
pub fn gradient_check<F>(nets: &mut [Mlp], analytic: &[Grads], h: f64, mut loss: F) -> GradCheckReport
where
    F: FnMut(&[Mlp]) -> (f64, u64),
{
    assert_eq!(nets.len(), analytic.len(), "one gradient set per network");
    let (_, base_sig) = loss(nets);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for k in 0..nets.len() {
        let tensors = nets[k].params().len();
        for t in 0..tensors {
            let len = nets[k].params()[t].len();
            for i in 0..len {
                let orig = nets[k].params()[t][i];
                let central = |step: f64| {
                    nets[k].params_mut()[t][i] = orig + step;
                    let (up, sig_up) = loss(nets);
                    nets[k].params_mut()[t][i] = orig - step;
                    let (down, sig_down) = loss(nets);
                    (sig_up == base_sig && sig_down == base_sig).then(|| (up - down) / (2.0 * step))
                };
                let numeric = derivative(central, h);
                nets[k].params_mut()[t][i] = orig;
                let Some(numeric) = numeric else {
                    report.skipped += 1;
                    continue;
                };
                let err = relative_error(analytic[k].0[t][i], numeric);
                report.max_rel_error = report.max_rel_error.max(err);
                report.checked += 1;
            }
        }
    }
    report
}
