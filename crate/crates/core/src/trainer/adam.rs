//! Adam with bias correction over [`ModelParams`]-shaped tensors.

use crate::propagation::ModelParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

/// First and second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(labels: usize, depth: usize) -> Self {
        AdamState {
            m: ModelParams::zeros(labels, depth),
            v: ModelParams::zeros(labels, depth),
            t: 0,
        }
    }
}

/// One update: `θ ← θ − lr · m̂ / (√v̂ + ε)`.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    config: &AdamConfig<T>,
    lr: T,
) {
    assert_eq!(params.depth(), grads.depth(), "gradient depth");
    assert_eq!(params.labels(), grads.labels(), "gradient labels");
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let (b1, b2) = (config.beta1, config.beta2);
    let bias1 = T::one() - b1.powi(t);
    let bias2 = T::one() - b2.powi(t);
    let one = T::one();
    let tensors = params
        .matrices_mut()
        .zip(grads.matrices())
        .zip(state.m.matrices_mut().zip(state.v.matrices_mut()));
    for ((w, g), (m, v)) in tensors {
        ndarray::Zip::from(w)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::init_params;

    fn cfg() -> AdamConfig<f64> {
        AdamConfig {
            beta1: 0.8,
            beta2: 0.9,
            epsilon: 1e-8,
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = init_params::<f64>(3, 2, 1);
        let before = p.clone();
        let mut st = AdamState::new(3, 2);
        adam_step(&mut p, &ModelParams::zeros(3, 2), &mut st, &cfg(), 1e-3);
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut p = ModelParams::<f64>::zeros(1, 1);
        let mut g = ModelParams::zeros(1, 1);
        g.layers[0].pos[(0, 0)] = 0.37;
        g.layers[0].neg[(0, 0)] = -2.5;
        let mut st = AdamState::new(1, 1);
        adam_step(&mut p, &g, &mut st, &cfg(), 1e-3);
        let expect = |g: f64| -1e-3 * g / (g.abs() + 1e-8);
        assert!((p.layers[0].pos[(0, 0)] - expect(0.37)).abs() < 1e-15);
        assert!((p.layers[0].neg[(0, 0)] - expect(-2.5)).abs() < 1e-15);
        assert!((p.layers[0].pos[(0, 0)] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn identical_runs_match_bitwise() {
        let run = || {
            let mut p = init_params::<f64>(4, 2, 3);
            let g = init_params::<f64>(4, 2, 4);
            let mut st = AdamState::new(4, 2);
            for _ in 0..5 {
                adam_step(&mut p, &g, &mut st, &cfg(), 1e-2);
            }
            (p, st)
        };
        assert_eq!(run(), run());
    }
}
