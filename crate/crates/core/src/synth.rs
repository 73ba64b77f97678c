//! Synthetic datasets with planted signed label structure and NLI-like
//! noisy features, plus label-frequency quantization.
//!
//! Labels are split into contiguous clusters. Each sample picks a home
//! cluster, includes home labels with probability `p_in` and foreign labels
//! with the smaller `p_out`; both are scaled so the expected subset size is
//! `κ`. Label embeddings are a cluster centroid plus jitter, so cosine
//! similarity is high within a cluster and low across clusters.
//!
//! Features start from an entailment share `t` per sample and label:
//! `t = 1 − |ε| + β_l` for present labels and `t = |ε| + β_l` for absent
//! ones (clipped to `[0, 1]`), with entry noise `ε ~ N(0, σ²)` and a
//! per-label entailment inflation `β_l ~ U(0, s·σ)` with `s = label_skew`.
//! Then `q = (1 − ν) t`, `q̄ = (1 − ν)(1 − t)`, `q̃ = ν`, and a `σ` fraction of entries is mixed with the uniform point
//! `(1/3, 1/3, 1/3)` at a weight drawn from `U(0, 1)`. With `σ = 0` the
//! features rank every present label above every absent one.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::manifest::LabelEntry;
use crate::interchange::{
    save_embeddings, save_features, save_ground_truth, save_manifest, FeatureMatrix, GroundTruth,
    LabelEmbeddings, LabelSpace, ManifestDocument, Setting, SupervisionConfig,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub labels: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub clusters: usize,
    /// Relative inclusion weight of home-cluster labels.
    pub rho_pos: f64,
    /// Exclusion of foreign labels: their weight is `rho_pos · (1 − rho_neg)`.
    pub rho_neg: f64,
    /// Feature noise `σ`.
    pub noise: f64,
    /// Neutral mass `ν`.
    pub neutral: f64,
    /// Target mean subset size `κ`.
    pub kappa: f64,
    pub embedding_dim: usize,
    /// Per-coordinate jitter of label embeddings around their centroid.
    pub embedding_jitter: f64,
    /// Upper end of the per-label entailment inflation, as a multiple of `σ`.
    pub label_skew: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            labels: 24,
            n_train: 2000,
            n_test: 500,
            clusters: 4,
            rho_pos: 0.5,
            rho_neg: 0.9,
            noise: 0.3,
            neutral: 0.2,
            kappa: 2.0,
            embedding_dim: 16,
            embedding_jitter: 0.35,
            label_skew: 1.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.labels == 0 || self.clusters == 0 || self.clusters > self.labels {
            return bad(format!(
                "need 1 <= clusters ({}) <= labels ({})",
                self.clusters, self.labels
            ));
        }
        if !(self.kappa > 0.0 && self.kappa <= self.labels as f64) {
            return bad(format!("kappa {} must lie in (0, L]", self.kappa));
        }
        for (name, v) in [
            ("rho_pos", self.rho_pos),
            ("rho_neg", self.rho_neg),
            ("noise", self.noise),
            ("label_skew", self.label_skew),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.neutral) {
            return bad(format!("neutral {} must lie in [0, 1)", self.neutral));
        }
        if self.rho_pos == 0.0 {
            return bad("rho_pos must be positive".into());
        }
        if self.embedding_dim < self.clusters {
            return bad(format!(
                "embedding_dim {} must be at least the cluster count {}",
                self.embedding_dim, self.clusters
            ));
        }
        Ok(())
    }

    /// Cluster of each label: contiguous, sizes differing by at most one.
    pub fn cluster_of(&self) -> Vec<usize> {
        equal_groups(self.labels, self.clusters)
    }

    /// Home and foreign inclusion probabilities scaled to hit `κ`.
    pub fn inclusion_probabilities(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let clusters = self.cluster_of();
        let mut sizes = vec![0usize; self.clusters];
        for &c in &clusters {
            sizes[c] += 1;
        }
        let w_in = self.rho_pos;
        let w_out = self.rho_pos * (1.0 - self.rho_neg);
        // expected raw cardinality averaged over a uniformly drawn home cluster
        let raw = sizes
            .iter()
            .map(|&m| m as f64 * w_in + (self.labels - m) as f64 * w_out)
            .sum::<f64>()
            / self.clusters as f64;
        let scale = self.kappa / raw;
        let (p_in, p_out) = (w_in * scale, w_out * scale);
        if p_in > 1.0 || p_out > 1.0 {
            return Err(Error::Config(format!(
                "kappa {} is infeasible for this cluster structure (inclusion probability {:.3} > 1)",
                self.kappa,
                p_in.max(p_out)
            )));
        }
        Ok((p_in, p_out))
    }
}

/// Vertices of a regular simplex centred at the origin, scaled to norm
/// `√dim`, so every pair of distinct centroids has the same cosine
/// `−1 / (k − 1)`. A single cluster sits on the first axis.
fn simplex_centroids(k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mean = if k > 1 { 1.0 / k as f64 } else { 0.0 };
    let norm = ((1.0 - mean) * (1.0 - mean) + (k as f64 - 1.0) * mean * mean).sqrt();
    let scale = (dim as f64).sqrt() / norm;
    (0..k)
        .map(|c| {
            (0..dim)
                .map(|j| {
                    let e = if j == c { 1.0 } else { 0.0 };
                    let m = if j < k { mean } else { 0.0 };
                    (e - m) * scale
                })
                .collect()
        })
        .collect()
}

/// Assigns `n` items to `k` contiguous groups whose sizes differ by at most
/// one, larger groups first.
pub fn equal_groups(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    (0..k)
        .flat_map(|g| std::iter::repeat_n(g, base + usize::from(g < extra)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthDataset<T> {
    pub label_space: LabelSpace,
    pub clusters: Vec<usize>,
    pub train: FeatureMatrix<T>,
    pub train_truth: GroundTruth,
    pub test: FeatureMatrix<T>,
    pub test_truth: GroundTruth,
    pub embeddings: LabelEmbeddings<T>,
    /// Annotation-free supervision with exact training statistics.
    pub supervision: SupervisionConfig<T>,
}

struct Sampler<'a> {
    cfg: &'a SynthConfig,
    clusters: Vec<usize>,
    p_in: f64,
    p_out: f64,
    skew: Vec<f64>,
}

impl Sampler<'_> {
    fn labels(&self, rng: &mut ChaCha8Rng) -> Vec<bool> {
        let home = rng.random_range(0..self.cfg.clusters);
        let mut y: Vec<bool> = self
            .clusters
            .iter()
            .map(|&c| rng.random_bool(if c == home { self.p_in } else { self.p_out }))
            .collect();
        if !y.iter().any(|&b| b) {
            let members: Vec<usize> = (0..y.len()).filter(|&l| self.clusters[l] == home).collect();
            y[members[rng.random_range(0..members.len())]] = true;
        }
        y
    }

    fn features<T: Scalar>(
        &self,
        truth: &Array2<bool>,
        rng: &mut ChaCha8Rng,
    ) -> Result<FeatureMatrix<T>> {
        let (n, l) = truth.dim();
        let sigma = self.cfg.noise;
        let nu = self.cfg.neutral;
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let mut q = Array2::zeros((n, l));
        let mut qt = Array2::zeros((n, l));
        let mut qb = Array2::zeros((n, l));
        for ((i, j), &present) in truth.indexed_iter() {
            let eps: f64 = normal.sample(rng).abs();
            let t = if present {
                1.0 - eps + self.skew[j]
            } else {
                eps + self.skew[j]
            }
            .clamp(0.0, 1.0);
            let mut e = (1.0 - nu) * t;
            let mut c = (1.0 - nu) * (1.0 - t);
            let mut m = nu;
            if rng.random_bool(sigma) {
                let w: f64 = rng.random();
                let third = 1.0 / 3.0;
                e = (1.0 - w) * e + w * third;
                c = (1.0 - w) * c + w * third;
                m = (1.0 - w) * m + w * third;
            }
            // renormalise away rounding so rows sit on the simplex
            let s = e + c + m;
            q[(i, j)] = T::lit(e / s);
            qb[(i, j)] = T::lit(c / s);
            qt[(i, j)] = T::one() - q[(i, j)] - qb[(i, j)];
        }
        FeatureMatrix::new(q, qt, qb)
    }
}

/// Generates a full dataset deterministically from `cfg.seed`.
pub fn generate<T: Scalar>(cfg: &SynthConfig) -> Result<SynthDataset<T>> {
    let (p_in, p_out) = cfg.inclusion_probabilities()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clusters = cfg.cluster_of();
    let range = cfg.noise * cfg.label_skew;
    let skew_dist = Uniform::new_inclusive(0.0, range).expect("finite skew range");
    let skew: Vec<f64> = (0..cfg.labels)
        .map(|_| skew_dist.sample(&mut rng))
        .collect();
    let sampler = Sampler {
        cfg,
        clusters: clusters.clone(),
        p_in,
        p_out,
        skew,
    };

    let draw_truth = |n: usize, rng: &mut ChaCha8Rng| {
        let rows: Vec<bool> = (0..n).flat_map(|_| sampler.labels(rng)).collect();
        Array2::from_shape_vec((n, cfg.labels), rows).expect("row length L")
    };
    let train_y = draw_truth(cfg.n_train, &mut rng);
    let test_y = draw_truth(cfg.n_test, &mut rng);
    let train = sampler.features::<T>(&train_y, &mut rng)?;
    let test = sampler.features::<T>(&test_y, &mut rng)?;

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let centroids = simplex_centroids(cfg.clusters, cfg.embedding_dim);
    let emb = Array2::from_shape_fn((cfg.labels, cfg.embedding_dim), |(l, k)| {
        T::lit(centroids[clusters[l]][k] + cfg.embedding_jitter * std_normal.sample(&mut rng))
    });
    let embeddings = LabelEmbeddings::new(emb)?;

    let n = cfg.n_train.max(1) as f64;
    let kappa = train_y.iter().filter(|&&b| b).count() as f64 / n;
    let lambdas = train_y
        .columns()
        .into_iter()
        .map(|c| T::lit(c.iter().filter(|&&b| b).count() as f64 / n))
        .collect();

    let label_space = LabelSpace::new(
        (0..cfg.labels)
            .map(|l| format!("cluster{} topic{}", clusters[l], l))
            .collect(),
    )?;
    Ok(SynthDataset {
        label_space,
        clusters,
        train,
        train_truth: GroundTruth::new(train_y)?,
        test,
        test_truth: GroundTruth::new(test_y)?,
        embeddings,
        supervision: SupervisionConfig::annotation_free(T::lit(kappa), lambdas),
    })
}

impl<T: Scalar> SynthDataset<T> {
    /// Ground truth of `count` training samples drawn without replacement.
    pub fn annotate(&self, count: usize, seed: u64) -> BTreeMap<usize, Vec<bool>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.train.samples();
        sample(&mut rng, n, count.min(n))
            .into_iter()
            .map(|i| (i, self.train_truth.matrix().row(i).to_vec()))
            .collect()
    }

    /// Supervision for `setting`; annotated settings draw `count` samples.
    pub fn supervision_for(
        &self,
        setting: Setting,
        count: usize,
        seed: u64,
    ) -> SupervisionConfig<T> {
        match setting {
            Setting::AnnotationFree => self.supervision.clone(),
            Setting::ScarceAnnotation => SupervisionConfig {
                setting,
                kappa: None,
                lambdas: None,
                annotations: self.annotate(count, seed),
            },
            Setting::DomainSupervisor => SupervisionConfig {
                setting,
                annotations: self.annotate(count, seed),
                ..self.supervision.clone()
            },
        }
    }

    /// Writes interchange files and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path, supervision: &SupervisionConfig<T>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        save_features(&self.train, &dir.join("train_features.bin"))?;
        save_features(&self.test, &dir.join("test_features.bin"))?;
        save_ground_truth(&self.test_truth, &dir.join("test_labels.bin"))?;
        save_ground_truth(&self.train_truth, &dir.join("train_labels.bin"))?;
        save_embeddings(&self.embeddings, &dir.join("embeddings.bin"))?;
        let doc = ManifestDocument {
            labels: self
                .label_space
                .descriptions()
                .iter()
                .enumerate()
                .map(|(index, d)| LabelEntry {
                    index,
                    description: d.clone(),
                })
                .collect(),
            setting: supervision.setting,
            kappa: supervision.kappa.map(|k| k.as_f64()),
            lambdas: supervision
                .lambdas
                .as_ref()
                .map(|v| v.iter().map(|x| x.as_f64()).collect()),
            annotations: supervision
                .annotations
                .iter()
                .map(|(id, y)| (*id, y.iter().map(|&b| u8::from(b)).collect()))
                .collect(),
            train_features: "train_features.bin".into(),
            test_features: Some("test_features.bin".into()),
            test_labels: Some("test_labels.bin".into()),
            embeddings: Some("embeddings.bin".into()),
        };
        save_manifest(&doc, &dir.join("manifest.json"))
    }
}

/// Replaces each `λ_l` by the mean of its frequency group.
///
/// Labels are sorted by descending `λ` (ties by index) and split into `k`
/// contiguous groups whose sizes differ by at most one.
pub fn quantize_label_frequencies<T: Scalar>(lambdas: &[T], k: usize) -> Result<Vec<T>> {
    let l = lambdas.len();
    if k == 0 || k > l {
        return Err(Error::Config(format!(
            "group count {k} must lie in 1..={l}"
        )));
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| {
        lambdas[b]
            .partial_cmp(&lambdas[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let groups = equal_groups(l, k);
    let mut sums = vec![T::zero(); k];
    let mut counts = vec![0usize; k];
    for (rank, &label) in order.iter().enumerate() {
        sums[groups[rank]] += lambdas[label];
        counts[groups[rank]] += 1;
    }
    let mut out = vec![T::zero(); l];
    for (rank, &label) in order.iter().enumerate() {
        let g = groups[rank];
        out[label] = sums[g] / T::from_usize_lossy(counts[g]);
    }
    Ok(out)
}
