//! Reverse-mode derivatives of the collective loss through the update layers.

use ndarray::{Array2, Zip};

use crate::error::Result;
use crate::interchange::FeatureMatrix;
use crate::loss::{total_loss_grad, BatchTargets, LossBreakdown, LossConfig};
use crate::propagation::{forward_trace, init_hidden, ForwardTrace, MaskedLayer, ModelParams};
use crate::scalar::Scalar;

/// Maps pre-activation slot (see [`ForwardTrace`]) to weight storage slot.
const PRE_TO_WEIGHT: [usize; 4] = [0, 3, 1, 2];

#[derive(Debug, Clone)]
pub struct GradientResult<T> {
    pub breakdown: LossBreakdown<T>,
    pub grads: ModelParams<T>,
    pub trace: ForwardTrace<T>,
}

/// Forward pass, loss and gradient for one batch.
///
/// `ReLU'(0) = 0`; entries outside a neighbourhood receive exactly zero.
pub fn compute_gradients<T: Scalar>(
    batch: &FeatureMatrix<T>,
    targets: &BatchTargets<T>,
    layers: &[MaskedLayer<T>],
    config: &LossConfig<T>,
) -> Result<GradientResult<T>> {
    let trace = forward_trace(&init_hidden(batch), layers)?;
    let lg = total_loss_grad(
        trace.states.p().view(),
        trace.states.p_bar().view(),
        config,
        targets,
    );
    lg.breakdown.check_finite()?;
    let grads = backward(&trace, layers, lg.d_p, lg.d_p_bar);
    Ok(GradientResult {
        breakdown: lg.breakdown,
        grads,
        trace,
    })
}

fn gate<T: Scalar>(upstream: &Array2<T>, z: &Array2<T>) -> Array2<T> {
    Zip::from(upstream)
        .and(z)
        .map_collect(|&g, &z| if z > T::zero() { g } else { T::zero() })
}

/// Backpropagates `∂L/∂P`, `∂L/∂P̄` to every weight matrix.
pub fn backward<T: Scalar>(
    trace: &ForwardTrace<T>,
    layers: &[MaskedLayer<T>],
    d_p: Array2<T>,
    d_p_bar: Array2<T>,
) -> ModelParams<T> {
    let labels = d_p.ncols();
    let mut grads = ModelParams::zeros(labels, layers.len());
    let mut g = d_p;
    let mut gb = d_p_bar;
    for k in (0..layers.len()).rev() {
        let h = &trace.states.entail[k];
        let hb = &trace.states.contra[k];
        let z = &trace.pre_activations[k];
        let w = &layers[k].weights;
        let masks = &layers[k].masks;

        // pre-activation slots: 0,1 feed entailment; 2,3 feed contradiction
        let dz = [
            gate(&g, &z[0]),
            gate(&g, &z[1]),
            gate(&gb, &z[2]),
            gate(&gb, &z[3]),
        ];
        let inputs = [h, hb, h, hb];

        let mut next_g = g.clone();
        let mut next_gb = gb.clone();
        let slots = grads.layers[k].matrices_mut();
        let mut slots: Vec<_> = slots.into_iter().collect();
        for (pre, d) in dz.iter().enumerate() {
            let wi = PRE_TO_WEIGHT[pre];
            *slots[wi] = inputs[pre].t().dot(d) * &masks[wi];
            let back = d.dot(&w[wi].t());
            if pre == 0 || pre == 2 {
                next_g += &back;
            } else {
                next_gb += &back;
            }
        }
        g = next_g;
        gb = next_gb;
    }
    grads
}
