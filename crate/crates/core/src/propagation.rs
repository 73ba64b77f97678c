//! Forward model: residual message passing of entailment and contradiction
//! states over balanced neighbourhoods.
//!
//! For layer `k` and label `v`:
//!
//! ```text
//! h_v  += relu(Σ_{u∈N+} W+_uv h_u) + relu(Σ_{u∈N-} W̄-_uv h̄_u)
//! h̄_v  += relu(Σ_{u∈N-} W-_uv h_u) + relu(Σ_{u∈N+} W̄+_uv h̄_u)
//! ```
//!
//! With states stored as `batch × L` rows each sum is a matrix product
//! `H · (W ∘ M)` where `M` is the neighbourhood support.

use std::path::Path;

use ndarray::{Array2, Zip};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{BalancedNeighborhoods, Sign};
use crate::interchange::binary::{load_envelope, save_envelopes, Envelope};
use crate::interchange::FeatureMatrix;
use crate::scalar::Scalar;

/// Half-width of the uniform initialisation interval.
pub const INIT_SCALE: f64 = 0.01;

/// The four `L × L` weight matrices of one update layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    /// `W^(k,+)`: positive neighbours' entailment into entailment.
    pub pos: Array2<T>,
    /// `W^(k,-)`: negative neighbours' entailment into contradiction.
    pub neg: Array2<T>,
    /// `W̄^(k,+)`: positive neighbours' contradiction into contradiction.
    pub bar_pos: Array2<T>,
    /// `W̄^(k,-)`: negative neighbours' contradiction into entailment.
    pub bar_neg: Array2<T>,
}

impl<T: Scalar> LayerWeights<T> {
    fn zeros(labels: usize) -> Self {
        let z = Array2::zeros((labels, labels));
        LayerWeights {
            pos: z.clone(),
            neg: z.clone(),
            bar_pos: z.clone(),
            bar_neg: z,
        }
    }

    /// Matrices in storage order: `W+`, `W-`, `W̄+`, `W̄-`.
    pub fn matrices(&self) -> [&Array2<T>; 4] {
        [&self.pos, &self.neg, &self.bar_pos, &self.bar_neg]
    }

    pub fn matrices_mut(&mut self) -> [&mut Array2<T>; 4] {
        [
            &mut self.pos,
            &mut self.neg,
            &mut self.bar_pos,
            &mut self.bar_neg,
        ]
    }
}

/// Neighbourhood sign that masks each matrix in storage order.
pub const MATRIX_SIGNS: [Sign; 4] = [Sign::Pos, Sign::Neg, Sign::Pos, Sign::Neg];

/// Learnable weights for `K` layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub layers: Vec<LayerWeights<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(labels: usize, depth: usize) -> Self {
        ModelParams {
            layers: (0..depth).map(|_| LayerWeights::zeros(labels)).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn labels(&self) -> usize {
        self.layers.first().map_or(0, |l| l.pos.nrows())
    }

    pub fn matrices(&self) -> impl Iterator<Item = &Array2<T>> {
        self.layers.iter().flat_map(|l| l.matrices())
    }

    pub fn matrices_mut(&mut self) -> impl Iterator<Item = &mut Array2<T>> {
        self.layers.iter_mut().flat_map(|l| l.matrices_mut())
    }

    pub fn len(&self) -> usize {
        self.matrices().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// Flat index `(layer, matrix, u, v)` → value accessor used by gradient checks.
    pub fn get(&self, layer: usize, matrix: usize, u: usize, v: usize) -> T {
        self.layers[layer].matrices()[matrix][(u, v)]
    }

    pub fn set(&mut self, layer: usize, matrix: usize, u: usize, v: usize, value: T) {
        self.layers[layer].matrices_mut()[matrix][(u, v)] = value;
    }

    /// `4K·L × L` block envelope, layer-major in storage order.
    pub fn to_envelope(&self) -> Envelope {
        let l = self.labels();
        let data = self
            .matrices()
            .flat_map(|m| m.iter().map(|v| v.as_f32()))
            .collect();
        Envelope::new(4 * self.depth() * l, l, 1, data)
    }

    pub fn from_envelope(env: &Envelope) -> Result<Self> {
        let l = env.header.cols;
        if env.header.channels != 1 || l == 0 || !env.header.rows.is_multiple_of(4 * l) {
            return Err(Error::Dimension(format!(
                "parameter block {}x{}x{} is not 4K·L x L x 1",
                env.header.rows, env.header.cols, env.header.channels
            )));
        }
        let depth = env.header.rows / (4 * l);
        let mut params = Self::zeros(l, depth);
        let mut it = env.data.iter();
        for m in params.matrices_mut() {
            for x in m.iter_mut() {
                *x = T::from_f32(*it.next().expect("length checked")).unwrap_or(T::nan());
            }
        }
        if !params.is_finite() {
            return Err(Error::Dimension(
                "parameters contain non-finite values".into(),
            ));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_envelopes(path, &[self.to_envelope()])
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_envelope(&load_envelope(path)?)
    }
}

/// I.i.d. uniform entries on `[-0.01, 0.01]` from a ChaCha8 stream seeded
/// with `seed`, filled layer by layer in storage order, row-major.
pub fn init_params<T: Scalar>(labels: usize, depth: usize, seed: u64) -> ModelParams<T> {
    init_params_scaled(labels, depth, seed, INIT_SCALE)
}

pub fn init_params_scaled<T: Scalar>(
    labels: usize,
    depth: usize,
    seed: u64,
    scale: f64,
) -> ModelParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-scale, scale).expect("finite scale");
    let mut params = ModelParams::zeros(labels, depth);
    for m in params.matrices_mut() {
        for x in m.iter_mut() {
            *x = T::lit(dist.sample(&mut rng));
        }
    }
    params
}

/// Entailment and contradiction states for every layer `0..=K`, each `batch × L`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates<T> {
    pub entail: Vec<Array2<T>>,
    pub contra: Vec<Array2<T>>,
}

impl<T: Scalar> HiddenStates<T> {
    pub fn layers(&self) -> usize {
        self.entail.len()
    }

    /// Final entailment states `p = h^(K)`.
    pub fn p(&self) -> &Array2<T> {
        self.entail.last().expect("at least layer 0")
    }

    /// Final contradiction states `p̄ = h̄^(K)`.
    pub fn p_bar(&self) -> &Array2<T> {
        self.contra.last().expect("at least layer 0")
    }

    /// Display-only neutral mass `max(0, 1 - p - p̄)`.
    pub fn neutral(&self) -> Array2<T> {
        Zip::from(self.p())
            .and(self.p_bar())
            .map_collect(|&p, &pb| (T::one() - p - pb).max(T::zero()))
    }
}

/// `h^(0) = q`, `h̄^(0) = q̄`. The neutral channel is not propagated.
pub fn init_hidden<T: Scalar>(features: &FeatureMatrix<T>) -> HiddenStates<T> {
    HiddenStates {
        entail: vec![features.entail().clone()],
        contra: vec![features.contra().clone()],
    }
}

/// Weights with the neighbourhood mask applied, one per storage slot.
#[derive(Debug, Clone)]
pub struct MaskedLayer<T> {
    pub weights: [Array2<T>; 4],
    pub masks: [Array2<T>; 4],
}

pub fn masked_layers<T: Scalar>(
    params: &ModelParams<T>,
    nbhd: &BalancedNeighborhoods,
) -> Result<Vec<MaskedLayer<T>>> {
    check_model(params, nbhd)?;
    Ok(params
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let masks = MATRIX_SIGNS.map(|s| nbhd.mask::<T>(i + 1, s));
            let mats = layer.matrices();
            let weights = [0, 1, 2, 3].map(|j| mats[j] * &masks[j]);
            MaskedLayer { weights, masks }
        })
        .collect())
}

fn check_model<T: Scalar>(params: &ModelParams<T>, nbhd: &BalancedNeighborhoods) -> Result<()> {
    if params.depth() != nbhd.depth() {
        return Err(Error::Dimension(format!(
            "model has {} layers but neighbourhoods have depth {}",
            params.depth(),
            nbhd.depth()
        )));
    }
    if params.labels() != nbhd.labels() {
        return Err(Error::Dimension(format!(
            "model has {} labels but graph has {}",
            params.labels(),
            nbhd.labels()
        )));
    }
    Ok(())
}

/// Pre-activations of the four message terms of every layer, kept for backprop.
/// Order per layer: `H·W+`, `H̄·W̄-` (into entailment), `H·W-`, `H̄·W̄+` (into contradiction).
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub states: HiddenStates<T>,
    pub pre_activations: Vec<[Array2<T>; 4]>,
}

fn relu<T: Scalar>(z: &Array2<T>) -> Array2<T> {
    z.mapv(|x| x.max(T::zero()))
}

pub fn forward_trace<T: Scalar>(
    states0: &HiddenStates<T>,
    layers: &[MaskedLayer<T>],
) -> Result<ForwardTrace<T>> {
    let h0 = states0
        .entail
        .first()
        .ok_or_else(|| Error::Dimension("no initial state".into()))?;
    let hb0 = &states0.contra[0];
    if let Some(first) = layers.first() {
        if h0.ncols() != first.weights[0].nrows() || hb0.dim() != h0.dim() {
            return Err(Error::Dimension(format!(
                "state width {} vs model labels {}",
                h0.ncols(),
                first.weights[0].nrows()
            )));
        }
    }
    let mut entail = vec![h0.clone()];
    let mut contra = vec![hb0.clone()];
    let mut pre = Vec::with_capacity(layers.len());
    for layer in layers {
        let (h, hb) = (entail.last().unwrap(), contra.last().unwrap());
        let [w_pos, w_neg, wb_pos, wb_neg] = &layer.weights;
        let z = [h.dot(w_pos), hb.dot(wb_neg), h.dot(w_neg), hb.dot(wb_pos)];
        let next_h = h + &relu(&z[0]) + relu(&z[1]);
        let next_hb = hb + &relu(&z[2]) + relu(&z[3]);
        entail.push(next_h);
        contra.push(next_hb);
        pre.push(z);
    }
    Ok(ForwardTrace {
        states: HiddenStates { entail, contra },
        pre_activations: pre,
    })
}

/// Applies all `K` update layers to the layer-0 states.
pub fn forward<T: Scalar>(
    states0: &HiddenStates<T>,
    params: &ModelParams<T>,
    nbhd: &BalancedNeighborhoods,
) -> Result<HiddenStates<T>> {
    let layers = masked_layers(params, nbhd)?;
    Ok(forward_trace(states0, &layers)?.states)
}

/// Binary label decisions, one row per sample. Rows may be empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    pub labels: Array2<bool>,
}

impl PredictionSet {
    pub fn samples(&self) -> usize {
        self.labels.nrows()
    }

    /// Predicted label indices of sample `i`.
    pub fn subset(&self, i: usize) -> Vec<usize> {
        self.labels
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(l, _)| l)
            .collect()
    }
}

fn decide<T: Scalar>(p: &Array2<T>, p_bar: &Array2<T>) -> PredictionSet {
    PredictionSet {
        labels: Zip::from(p).and(p_bar).map_collect(|&a, &b| a > b),
    }
}

/// `ŷ_l = 1` iff `p_l > p̄_l`.
pub fn predict<T: Scalar>(states: &HiddenStates<T>) -> PredictionSet {
    decide(states.p(), states.p_bar())
}

/// Zero-shot baseline: compare raw entailment and contradiction probabilities.
pub fn baseline_0shot<T: Scalar>(features: &FeatureMatrix<T>) -> PredictionSet {
    decide(features.entail(), features.contra())
}
