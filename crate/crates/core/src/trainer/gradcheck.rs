//! Central finite-difference check of the analytic gradients.
//!
//! Entries whose `±step` perturbation changes any piecewise branch of the
//! model (a ReLU switching on or off, the log clamp engaging, the sigmoid
//! exponent clamp) are reported as kink crossings and left out of the
//! error statistics, since the loss is not differentiable across them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backprop::compute_gradients;
use crate::error::Result;
use crate::graph::BalancedNeighborhoods;
use crate::interchange::FeatureMatrix;
use crate::loss::{clamp_is_identity, total_loss, BatchTargets, LossConfig};
use crate::propagation::{forward_trace, init_hidden, masked_layers, ModelParams, MATRIX_SIGNS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    /// Number of unmasked entries to compare (all of them if fewer exist).
    pub samples: usize,
    pub step: f64,
    /// Denominator floor in `|a − n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    pub seed: u64,
    /// Test hook: negate the analytic gradient before comparing.
    #[serde(default)]
    pub corrupt_sign: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            samples: 100,
            step: 1e-4,
            floor: 1e-8,
            seed: 0,
            corrupt_sign: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Entries compared.
    pub checked: usize,
    /// Sampled entries skipped because a perturbation crossed a kink.
    pub kinks: usize,
    /// Entries outside every neighbourhood; never sampled.
    pub masked: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    /// Location `(layer, matrix, u, v)` of the worst entry.
    pub worst: Option<(usize, usize, usize, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error <= tolerance
    }
}

/// Loss value and the branch pattern that fixes the local smooth piece.
fn evaluate<T: Scalar>(
    batch: &FeatureMatrix<T>,
    targets: &BatchTargets<T>,
    params: &ModelParams<T>,
    nbhd: &BalancedNeighborhoods,
    config: &LossConfig<T>,
) -> Result<(T, Vec<bool>)> {
    let layers = masked_layers(params, nbhd)?;
    let trace = forward_trace(&init_hidden(batch), &layers)?;
    let (p, pb) = (trace.states.p(), trace.states.p_bar());
    let loss = total_loss(p.view(), pb.view(), config, targets);
    let mut pattern: Vec<bool> = trace
        .pre_activations
        .iter()
        .flat_map(|z| z.iter().flat_map(|m| m.iter().map(|&x| x > T::zero())))
        .collect();
    for (row, y) in &targets.annotations {
        for (l, &yl) in y.iter().enumerate() {
            let v = if yl { p[(*row, l)] } else { pb[(*row, l)] };
            pattern.push(clamp_is_identity(v));
        }
    }
    let lim = T::lit(500.0);
    pattern.extend(
        p.iter()
            .zip(pb.iter())
            .map(|(&a, &b)| (config.sharpness * (a - b)).abs() < lim),
    );
    Ok((loss.total, pattern))
}

pub fn grad_check<T: Scalar>(
    params: &ModelParams<T>,
    batch: &FeatureMatrix<T>,
    targets: &BatchTargets<T>,
    nbhd: &BalancedNeighborhoods,
    config: &LossConfig<T>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let layers = masked_layers(params, nbhd)?;
    let analytic = compute_gradients(batch, targets, &layers, config)?.grads;
    let (_, base_pattern) = evaluate(batch, targets, params, nbhd, config)?;

    let l = params.labels();
    let mut candidates = Vec::new();
    let mut masked = 0usize;
    for k in 0..params.depth() {
        for (mi, sign) in MATRIX_SIGNS.iter().enumerate() {
            let dep = nbhd.dependencies(k + 1, *sign);
            for u in 0..l {
                for v in 0..l {
                    if dep[(u, v)] > 0 {
                        candidates.push((k, mi, u, v));
                    } else {
                        masked += 1;
                    }
                }
            }
        }
    }

    let step = T::lit(opts.step);
    let mut work = params.clone();
    let mut errors = Vec::with_capacity(opts.samples);
    let mut worst = None;
    let mut worst_err = -1.0f64;
    let mut kinks = 0usize;
    // lazy Fisher–Yates: draw until `samples` entries are compared or none remain
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut i = 0;
    while errors.len() < opts.samples && i < candidates.len() {
        let j = i + (rng.next_u64() % (candidates.len() - i) as u64) as usize;
        candidates.swap(i, j);
        let (k, mi, u, v) = candidates[i];
        i += 1;
        let orig = work.get(k, mi, u, v);
        work.set(k, mi, u, v, orig + step);
        let (plus, pat_plus) = evaluate(batch, targets, &work, nbhd, config)?;
        work.set(k, mi, u, v, orig - step);
        let (minus, pat_minus) = evaluate(batch, targets, &work, nbhd, config)?;
        work.set(k, mi, u, v, orig);
        if pat_plus != base_pattern || pat_minus != base_pattern {
            kinks += 1;
            continue;
        }
        let numeric = ((plus - minus) / (step + step)).as_f64();
        let mut a = analytic.get(k, mi, u, v).as_f64();
        if opts.corrupt_sign {
            a = -a;
        }
        let denom = a.abs().max(numeric.abs()).max(opts.floor);
        let err = (a - numeric).abs() / denom;
        if err > worst_err {
            worst_err = err;
            worst = Some((k, mi, u, v));
        }
        errors.push(err);
    }
    let checked = errors.len();
    let max = errors.iter().copied().fold(0.0, f64::max);
    let mean = if checked > 0 {
        errors.iter().sum::<f64>() / checked as f64
    } else {
        0.0
    };
    Ok(GradCheckReport {
        checked,
        kinks,
        masked,
        max_rel_error: max,
        mean_rel_error: mean,
        worst,
    })
}
