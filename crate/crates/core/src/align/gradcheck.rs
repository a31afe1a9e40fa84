//! Central finite-difference check of [`grad_adapter`].

use serde::Serialize;

use super::adapter::AdapterParams;
use super::loss::{grad_adapter, loss_combined, TrainTriplet};
use super::{AlignError, TrainConfig};
use crate::rng::gaussian_vec;

/// Denominator floor for the relative error, so exactly-zero components do
/// not divide by zero.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub n_params: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Index into `W` (row-major) followed by `b`.
    pub worst_param: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares every analytic component with `(L(p + h) - L(p - h)) / 2h`.
pub fn check_gradients(
    batch: &[TrainTriplet],
    adapter: &AdapterParams,
    cfg: &TrainConfig,
    h: f64,
) -> Result<GradCheckReport, AlignError> {
    let (_, grads) = grad_adapter(batch, adapter, cfg)?;
    let analytic: Vec<f64> = grads.iter().collect();
    let mut report = GradCheckReport {
        n_params: analytic.len(),
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_param: 0,
    };
    let mut probe = adapter.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let up = loss_combined(batch, &probe, cfg)?.total;
        *probe.param_mut(i) = orig - h;
        let down = loss_combined(batch, &probe, cfg)?.total;
        *probe.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = relative_error(a, numeric);
        report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_param = i;
        }
    }
    Ok(report)
}

/// Random Gaussian batch and a perturbed-identity adapter for case `case`.
pub fn random_case(
    seed: u64,
    case: usize,
    batch_size: usize,
    dim: usize,
) -> (Vec<TrainTriplet>, AdapterParams) {
    let c = (case as u64).to_le_bytes();
    let batch = (0..batch_size)
        .map(|i| {
            let i = (i as u64).to_le_bytes();
            let v = |tag: &str| gaussian_vec(seed, tag, &[&c, &i], dim);
            TrainTriplet {
                q_en: v("gc-q"),
                p_en: v("gc-pe"),
                p_tgt: v("gc-pt"),
            }
        })
        .collect();
    let mut w: Vec<f64> = gaussian_vec(seed, "gc-w", &[&c], dim * dim)
        .into_iter()
        .map(|x| 0.2 * x)
        .collect();
    for k in 0..dim {
        w[k * dim + k] += 1.0;
    }
    let b = gaussian_vec(seed, "gc-b", &[&c], dim)
        .into_iter()
        .map(|x| 0.1 * x)
        .collect();
    let adapter = AdapterParams::from_parts(dim, w, b).expect("valid shape");
    (batch, adapter)
}
