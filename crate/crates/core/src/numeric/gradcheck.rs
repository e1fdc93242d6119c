//! Central finite differences for checking analytic gradients.

use super::MlpParams;

/// Step used by all gradient checks in this crate.
pub const FD_STEP: f64 = 1e-5;

/// Gradients of magnitude below this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Central-difference gradient of `loss` with respect to every entry of `params`.
pub fn numeric_gradient(
    params: &MlpParams,
    h: f64,
    mut loss: impl FnMut(&MlpParams) -> f64,
) -> MlpParams {
    let mut probe = params.clone();
    let mut grad = params.zeros_like();
    let block_count = params.blocks().len();
    for b in 0..block_count {
        let len = params.blocks()[b].len();
        for k in 0..len {
            let orig = probe.blocks()[b][k];
            probe.blocks_mut()[b][k] = orig + h;
            let plus = loss(&probe);
            probe.blocks_mut()[b][k] = orig - h;
            let minus = loss(&probe);
            probe.blocks_mut()[b][k] = orig;
            grad.blocks_mut()[b][k] = (plus - minus) / (2.0 * h);
        }
    }
    grad
}

/// Central-difference gradient with respect to a flat vector.
pub fn numeric_gradient_vec(
    values: &[f64],
    h: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let mut probe = values.to_vec();
    (0..values.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + h;
            let plus = loss(&probe);
            probe[k] = orig - h;
            let minus = loss(&probe);
            probe[k] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

pub fn max_relative_error(analytic: &MlpParams, numeric: &MlpParams) -> f64 {
    analytic
        .blocks()
        .iter()
        .zip(numeric.blocks())
        .flat_map(|(a, n)| a.iter().zip(n.iter()).map(|(&a, &n)| relative_error(a, n)))
        .fold(0.0, f64::max)
}

pub fn max_relative_error_vec(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
