use super::mlp::{Example, Mlp};
use crate::transforms::SampleRng;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Coordinates compared per check.
pub const SAMPLE_COORDS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coords: Vec<CoordCheck>,
    /// Coordinates skipped because the +/- step flipped a ReLU.
    pub skipped_kinks: usize,
}

/// `|a - n| / max(|a|, |n|)`, with `0/0 = 0`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Compares the network's backward pass against central differences.
pub fn gradient_check(net: &Mlp, batch: &[Example<'_>], seed: u64) -> GradCheckReport {
    gradient_check_with(net, batch, seed, |n, b| n.loss_and_grad(b).1)
}

/// Like [`gradient_check`] with a caller-supplied analytic gradient.
pub fn gradient_check_with(
    net: &Mlp,
    batch: &[Example<'_>],
    seed: u64,
    analytic: impl Fn(&Mlp, &[Example<'_>]) -> Vec<f64>,
) -> GradCheckReport {
    assert!(!batch.is_empty(), "gradient check needs a non-empty batch");
    let grad = analytic(net, batch);
    let base_pattern = net.activation_pattern(batch);
    let mut rng = SampleRng::from_seed(seed);
    let mut probe = net.clone();
    let mut coords = Vec::with_capacity(SAMPLE_COORDS);
    let mut skipped = 0;
    let budget = SAMPLE_COORDS * 50;
    let mut attempts = 0;
    while coords.len() < SAMPLE_COORDS.min(net.params.len()) && attempts < budget {
        attempts += 1;
        let index = rng.below(net.params.len() as u32) as usize;
        let orig = net.params[index];
        probe.params[index] = orig + FD_STEP;
        let plus = probe.loss(batch);
        let plus_pattern = probe.activation_pattern(batch);
        probe.params[index] = orig - FD_STEP;
        let minus = probe.loss(batch);
        let minus_pattern = probe.activation_pattern(batch);
        probe.params[index] = orig;
        if plus_pattern != base_pattern || minus_pattern != base_pattern {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        coords.push(CoordCheck {
            index,
            analytic: grad[index],
            numeric,
            relative_error: relative_error(grad[index], numeric),
        });
    }
    let max_relative_error = coords.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    GradCheckReport {
        max_relative_error,
        coords,
        skipped_kinks: skipped,
    }
}
