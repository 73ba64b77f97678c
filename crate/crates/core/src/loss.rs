//! Collective loss over final entailment (`P`) and contradiction (`P̄`)
//! states of a batch.
//!
//! * `L1` hesitancy: `Σ_i ‖p_i + p̄_i − 1‖₂`
//! * `L2` label frequency: `Σ_l (n·λ_l − Σ_i s_il)²`
//! * `L3` subset cardinality: `Σ_i (κ − Σ_l s_il)²`
//! * `L4` annotated cross-entropy: `−Σ_{i∈A} Σ_l [y log p + (1−y) log p̄]`
//!
//! where `s_il = σ(C·(p_il − p̄_il))` stands in for `1[p_il > p̄_il]`.
//! Every component has an analytic gradient with respect to `P` and `P̄`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower clamp applied to probabilities before taking logs in `L4`.
pub const LOG_EPSILON: f64 = 1e-7;

/// Bound on the sigmoid exponent argument.
const EXP_CLAMP: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig<T> {
    pub alpha2: T,
    pub alpha3: T,
    pub alpha4: T,
    /// Sigmoid sharpness `C`.
    pub sharpness: T,
    #[serde(default)]
    pub disable_l2: bool,
    #[serde(default)]
    pub disable_l3: bool,
}

impl<T: Scalar> Default for LossConfig<T> {
    fn default() -> Self {
        LossConfig {
            alpha2: T::lit(0.1),
            alpha3: T::lit(0.5),
            alpha4: T::lit(100.0),
            sharpness: T::lit(10.0),
            disable_l2: false,
            disable_l3: false,
        }
    }
}

impl<T: Scalar> LossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.sharpness.partial_cmp(&T::one()) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Config(format!(
                "sharpness C must exceed 1, got {}",
                self.sharpness
            )));
        }
        for (name, a) in [
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("alpha4", self.alpha4),
        ] {
            if !(a.is_finite() && a >= T::zero()) {
                return Err(Error::Config(format!(
                    "{name} must be finite and nonnegative, got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// Supervision targets resolved for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTargets<T> {
    pub kappa: T,
    pub lambdas: Vec<T>,
    /// Number of samples the frequency target is scaled by.
    pub population: usize,
    /// `(row within batch, binary labels)` for annotated samples.
    pub annotations: Vec<(usize, Vec<bool>)>,
}

/// Component values, weighted total and which components were active.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub l1: T,
    pub l2: T,
    pub l3: T,
    pub l4: T,
    pub total: T,
    /// Activity flags for `L1..L4`.
    pub active: [bool; 4],
}

impl<T: Scalar> LossBreakdown<T> {
    /// Componentwise sum; activity flags are or-ed.
    pub fn accumulate(&mut self, other: &Self) {
        self.l1 += other.l1;
        self.l2 += other.l2;
        self.l3 += other.l3;
        self.l4 += other.l4;
        self.total += other.total;
        for (a, b) in self.active.iter_mut().zip(other.active) {
            *a |= b;
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("L1", self.l1),
            ("L2", self.l2),
            ("L3", self.l3),
            ("L4", self.l4),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite { component: name });
            }
        }
        Ok(())
    }
}

/// Sharpened sigmoid `1 / (1 + exp(−C (p − p̄)))`, approximately `1[p > p̄]`.
pub fn surrogate_indicator<T: Scalar>(p: T, p_bar: T, c: T) -> T {
    let lim = T::lit(EXP_CLAMP);
    let x = (c * (p - p_bar)).max(-lim).min(lim);
    T::one() / (T::one() + (-x).exp())
}

fn check_shapes<T>(p: &ArrayView2<T>, p_bar: &ArrayView2<T>) {
    assert_eq!(p.dim(), p_bar.dim(), "P and P̄ shapes differ");
}

fn surrogates<T: Scalar>(p: &ArrayView2<T>, p_bar: &ArrayView2<T>, c: T) -> Array2<T> {
    ndarray::Zip::from(p)
        .and(p_bar)
        .map_collect(|&a, &b| surrogate_indicator(a, b, c))
}

pub fn loss_hesitancy<T: Scalar>(p: ArrayView2<T>, p_bar: ArrayView2<T>) -> T {
    check_shapes(&p, &p_bar);
    p.rows()
        .into_iter()
        .zip(p_bar.rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .map(|(&x, &y)| {
                    let r = x + y - T::one();
                    r * r
                })
                .sum::<T>()
                .sqrt()
        })
        .sum()
}

pub fn loss_label_frequency<T: Scalar>(
    p: ArrayView2<T>,
    p_bar: ArrayView2<T>,
    lambdas: &[T],
    c: T,
    population: usize,
) -> T {
    check_shapes(&p, &p_bar);
    let s = surrogates(&p, &p_bar, c);
    let n = T::from_usize_lossy(population);
    s.columns()
        .into_iter()
        .zip(lambdas)
        .map(|(col, &lam)| {
            let d = n * lam - col.sum();
            d * d
        })
        .sum()
}

pub fn loss_cardinality<T: Scalar>(p: ArrayView2<T>, p_bar: ArrayView2<T>, kappa: T, c: T) -> T {
    check_shapes(&p, &p_bar);
    surrogates(&p, &p_bar, c)
        .rows()
        .into_iter()
        .map(|row| {
            let d = kappa - row.sum();
            d * d
        })
        .sum()
}

fn clamp_prob<T: Scalar>(x: T) -> T {
    x.max(T::lit(LOG_EPSILON)).min(T::one())
}

/// Whether the clamp before the log is passing its input through.
pub fn clamp_is_identity<T: Scalar>(x: T) -> bool {
    x >= T::lit(LOG_EPSILON) && x <= T::one()
}

pub fn loss_annotated<T: Scalar>(
    p: ArrayView2<T>,
    p_bar: ArrayView2<T>,
    annotations: &[(usize, Vec<bool>)],
) -> T {
    check_shapes(&p, &p_bar);
    let mut total = T::zero();
    for (row, y) in annotations {
        for (l, &yl) in y.iter().enumerate() {
            let v = if yl { p[(*row, l)] } else { p_bar[(*row, l)] };
            total -= clamp_prob(v).ln();
        }
    }
    total
}

fn active_flags<T: Scalar>(config: &LossConfig<T>, targets: &BatchTargets<T>) -> [bool; 4] {
    [
        true,
        !config.disable_l2,
        !config.disable_l3,
        !targets.annotations.is_empty(),
    ]
}

fn weighted<T: Scalar>(config: &LossConfig<T>, c: [T; 4], active: [bool; 4]) -> LossBreakdown<T> {
    let pick = |i: usize| if active[i] { c[i] } else { T::zero() };
    let (l1, l2, l3, l4) = (pick(0), pick(1), pick(2), pick(3));
    LossBreakdown {
        l1,
        l2,
        l3,
        l4,
        total: l1 + config.alpha2 * l2 + config.alpha3 * l3 + config.alpha4 * l4,
        active,
    }
}

/// Weighted total `L1 + α2 L2 + α3 L3 + α4 L4`; inactive components are exactly 0.
pub fn total_loss<T: Scalar>(
    p: ArrayView2<T>,
    p_bar: ArrayView2<T>,
    config: &LossConfig<T>,
    targets: &BatchTargets<T>,
) -> LossBreakdown<T> {
    let active = active_flags(config, targets);
    let c = config.sharpness;
    let l1 = loss_hesitancy(p, p_bar);
    let l2 = if active[1] {
        loss_label_frequency(p, p_bar, &targets.lambdas, c, targets.population)
    } else {
        T::zero()
    };
    let l3 = if active[2] {
        loss_cardinality(p, p_bar, targets.kappa, c)
    } else {
        T::zero()
    };
    let l4 = if active[3] {
        loss_annotated(p, p_bar, &targets.annotations)
    } else {
        T::zero()
    };
    weighted(config, [l1, l2, l3, l4], active)
}

/// Loss value together with `∂L/∂P` and `∂L/∂P̄`.
#[derive(Debug, Clone)]
pub struct LossGradient<T> {
    pub breakdown: LossBreakdown<T>,
    pub d_p: Array2<T>,
    pub d_p_bar: Array2<T>,
}

/// Analytic gradient of [`total_loss`].
///
/// Subgradient conventions: the `L1` norm contributes 0 for a sample whose
/// residual is exactly zero, and the `L4` clamp passes gradient only on
/// `[ε, 1]`.
pub fn total_loss_grad<T: Scalar>(
    p: ArrayView2<T>,
    p_bar: ArrayView2<T>,
    config: &LossConfig<T>,
    targets: &BatchTargets<T>,
) -> LossGradient<T> {
    check_shapes(&p, &p_bar);
    let breakdown = total_loss(p, p_bar, config, targets);
    let active = breakdown.active;
    let (n, l) = p.dim();
    let mut d_p = Array2::zeros((n, l));
    let mut d_pb = Array2::zeros((n, l));

    // L1
    for i in 0..n {
        let norm = (0..l)
            .map(|j| {
                let r = p[(i, j)] + p_bar[(i, j)] - T::one();
                r * r
            })
            .sum::<T>()
            .sqrt();
        if norm > T::zero() {
            for j in 0..l {
                let g = (p[(i, j)] + p_bar[(i, j)] - T::one()) / norm;
                d_p[(i, j)] += g;
                d_pb[(i, j)] += g;
            }
        }
    }

    // L2 and L3 share ∂/∂s, chained through the sigmoid.
    if active[1] || active[2] {
        let c = config.sharpness;
        let s = surrogates(&p, &p_bar, c);
        let two = T::lit(2.0);
        let mut d_s = Array2::<T>::zeros((n, l));
        if active[1] {
            let pop = T::from_usize_lossy(targets.population);
            for (j, col) in s.columns().into_iter().enumerate() {
                let g = -two * (pop * targets.lambdas[j] - col.sum()) * config.alpha2;
                d_s.column_mut(j).mapv_inplace(|x| x + g);
            }
        }
        if active[2] {
            for (i, row) in s.rows().into_iter().enumerate() {
                let g = -two * (targets.kappa - row.sum()) * config.alpha3;
                d_s.row_mut(i).mapv_inplace(|x| x + g);
            }
        }
        let lim = T::lit(EXP_CLAMP);
        for ((i, j), &sv) in s.indexed_iter() {
            let x = c * (p[(i, j)] - p_bar[(i, j)]);
            // the exponent clamp is flat outside its range
            if x.abs() >= lim {
                continue;
            }
            let ds_dx = c * sv * (T::one() - sv);
            d_p[(i, j)] += d_s[(i, j)] * ds_dx;
            d_pb[(i, j)] -= d_s[(i, j)] * ds_dx;
        }
    }

    if active[3] {
        let a4 = config.alpha4;
        for (row, y) in &targets.annotations {
            for (j, &yl) in y.iter().enumerate() {
                let (v, slot) = if yl {
                    (p[(*row, j)], &mut d_p[(*row, j)])
                } else {
                    (p_bar[(*row, j)], &mut d_pb[(*row, j)])
                };
                if clamp_is_identity(v) {
                    *slot -= a4 / v;
                }
            }
        }
    }

    LossGradient {
        breakdown,
        d_p,
        d_p_bar: d_pb,
    }
}
