//! On-disk data model shared by the extraction tooling, the graph builder
//! and the trainer.
//!
//! Dense arrays use the envelope in [`binary`]; supervision signals and
//! label descriptions live in a JSON manifest ([`manifest`]).

pub mod binary;
pub mod manifest;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use binary::{load_envelope, save_envelopes, Envelope};

pub use manifest::{load_manifest, save_manifest, Manifest, ManifestDocument, ManifestFiles};

/// Tolerance on `q + q̃ + q̄ = 1` for every loaded feature row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

pub const FEATURE_CHANNELS: usize = 3;

/// Ordered label descriptions; label `l` is at position `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    descriptions: Vec<String>,
}

impl LabelSpace {
    pub fn new(descriptions: Vec<String>) -> Result<Self> {
        if descriptions.is_empty() {
            return Err(Error::Manifest("label space is empty".into()));
        }
        if let Some(i) = descriptions.iter().position(|d| d.trim().is_empty()) {
            return Err(Error::Manifest(format!(
                "label {i} has an empty description"
            )));
        }
        Ok(LabelSpace { descriptions })
    }

    /// Builds a label space from `(index, description)` pairs in any order.
    /// Indices must be exactly `0..L`.
    pub fn from_indexed(pairs: impl IntoIterator<Item = (usize, String)>) -> Result<Self> {
        let mut slots: BTreeMap<usize, String> = BTreeMap::new();
        for (idx, desc) in pairs {
            if slots.insert(idx, desc).is_some() {
                return Err(Error::Manifest(format!("duplicate label index {idx}")));
            }
        }
        for (expected, idx) in slots.keys().enumerate() {
            if *idx != expected {
                return Err(Error::Manifest(format!(
                    "label indices must be dense from 0; missing {expected}"
                )));
            }
        }
        Self::new(slots.into_values().collect())
    }

    pub fn len(&self) -> usize {
        self.descriptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptions.is_empty()
    }

    pub fn description(&self, label: usize) -> &str {
        &self.descriptions[label]
    }

    pub fn descriptions(&self) -> &[String] {
        &self.descriptions
    }
}

/// Per-sample entailment / neutral / contradiction probabilities, each `N × L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    entail: Array2<T>,
    neutral: Array2<T>,
    contra: Array2<T>,
}

impl<T: Scalar> FeatureMatrix<T> {
    /// Validates shapes, non-negativity and the simplex constraint.
    pub fn new(entail: Array2<T>, neutral: Array2<T>, contra: Array2<T>) -> Result<Self> {
        if entail.dim() != neutral.dim() || entail.dim() != contra.dim() {
            return Err(Error::Dimension(format!(
                "feature channels disagree: {:?} / {:?} / {:?}",
                entail.dim(),
                neutral.dim(),
                contra.dim()
            )));
        }
        let tol = T::lit(ROW_SUM_TOLERANCE);
        for ((i, l), &q) in entail.indexed_iter() {
            let (qt, qb) = (neutral[(i, l)], contra[(i, l)]);
            if !(q.is_finite() && qt.is_finite() && qb.is_finite()) {
                return Err(Error::RowSum {
                    sample: i,
                    label: l,
                    detail: "non-finite entry".into(),
                });
            }
            if q < T::zero() || qt < T::zero() || qb < T::zero() {
                return Err(Error::RowSum {
                    sample: i,
                    label: l,
                    detail: format!("negative entry in ({q}, {qt}, {qb})"),
                });
            }
            let sum = q + qt + qb;
            if (sum - T::one()).abs() > tol {
                return Err(Error::RowSum {
                    sample: i,
                    label: l,
                    detail: format!("sum {sum} differs from 1"),
                });
            }
        }
        Ok(FeatureMatrix {
            entail,
            neutral,
            contra,
        })
    }

    /// Builds features from entailment and contradiction only; neutral is
    /// the remainder `1 - q - q̄`.
    pub fn from_entail_contra(entail: Array2<T>, contra: Array2<T>) -> Result<Self> {
        if entail.dim() != contra.dim() {
            return Err(Error::Dimension(
                "entailment/contradiction shapes differ".into(),
            ));
        }
        let neutral = ndarray::Zip::from(&entail)
            .and(&contra)
            .map_collect(|&q, &qb| (T::one() - q - qb).max(T::zero()));
        Self::new(entail, neutral, contra)
    }

    pub fn empty(labels: usize) -> Self {
        let z = Array2::zeros((0, labels));
        FeatureMatrix {
            entail: z.clone(),
            neutral: z.clone(),
            contra: z,
        }
    }

    pub fn samples(&self) -> usize {
        self.entail.nrows()
    }

    pub fn labels(&self) -> usize {
        self.entail.ncols()
    }

    pub fn entail(&self) -> &Array2<T> {
        &self.entail
    }

    pub fn neutral(&self) -> &Array2<T> {
        &self.neutral
    }

    pub fn contra(&self) -> &Array2<T> {
        &self.contra
    }

    /// Rows `idx` in order, as a new matrix.
    pub fn select(&self, idx: &[usize]) -> Self {
        let pick = |m: &Array2<T>| m.select(ndarray::Axis(0), idx);
        FeatureMatrix {
            entail: pick(&self.entail),
            neutral: pick(&self.neutral),
            contra: pick(&self.contra),
        }
    }

    pub fn to_envelope(&self) -> Envelope {
        let (n, l) = self.entail.dim();
        let mut data = Vec::with_capacity(n * l * FEATURE_CHANNELS);
        for i in 0..n {
            for j in 0..l {
                data.push(self.entail[(i, j)].as_f32());
                data.push(self.neutral[(i, j)].as_f32());
                data.push(self.contra[(i, j)].as_f32());
            }
        }
        Envelope::new(n, l, FEATURE_CHANNELS, data)
    }

    pub fn from_envelope(env: &Envelope, path: &Path) -> Result<Self> {
        if env.header.channels != FEATURE_CHANNELS {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!(
                    "feature file must have {FEATURE_CHANNELS} channels, found {}",
                    env.header.channels
                ),
            });
        }
        let (n, l) = (env.header.rows, env.header.cols);
        let channel = |c: usize| {
            Array2::from_shape_fn((n, l), |(i, j)| {
                T::from_f32(env.data[(i * l + j) * FEATURE_CHANNELS + c]).unwrap_or(T::nan())
            })
        };
        Self::new(channel(0), channel(1), channel(2))
    }
}

pub fn load_features<T: Scalar>(path: &Path) -> Result<FeatureMatrix<T>> {
    FeatureMatrix::from_envelope(&load_envelope(path)?, path)
}

/// Loads features and checks the label dimension against an expected `L`.
pub fn load_features_with_labels<T: Scalar>(
    path: &Path,
    labels: usize,
) -> Result<FeatureMatrix<T>> {
    let env = load_envelope(path)?;
    if env.header.cols != labels {
        return Err(Error::Dimension(format!(
            "{} has {} labels, expected {labels}",
            path.display(),
            env.header.cols
        )));
    }
    FeatureMatrix::from_envelope(&env, path)
}

pub fn save_features<T: Scalar>(features: &FeatureMatrix<T>, path: &Path) -> Result<()> {
    save_envelopes(path, &[features.to_envelope()])
}

/// One averaged word vector per label, `L × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbeddings<T> {
    vectors: Array2<T>,
}

impl<T: Scalar> LabelEmbeddings<T> {
    pub fn new(vectors: Array2<T>) -> Result<Self> {
        if vectors.ncols() == 0 {
            return Err(Error::Dimension("embedding dimension is zero".into()));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension(
                "embedding contains non-finite values".into(),
            ));
        }
        for (l, row) in vectors.rows().into_iter().enumerate() {
            if row.iter().all(|v| v.is_zero()) {
                return Err(Error::ZeroNorm { index: l });
            }
        }
        Ok(LabelEmbeddings { vectors })
    }

    pub fn labels(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<T> {
        &self.vectors
    }

    pub fn to_envelope(&self) -> Envelope {
        let (l, d) = self.vectors.dim();
        Envelope::new(l, d, 1, self.vectors.iter().map(|v| v.as_f32()).collect())
    }
}

pub fn load_embeddings<T: Scalar>(path: &Path) -> Result<LabelEmbeddings<T>> {
    let env = load_envelope(path)?;
    if env.header.channels != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!(
                "embedding file must have 1 channel, found {}",
                env.header.channels
            ),
        });
    }
    let (l, d) = (env.header.rows, env.header.cols);
    let vectors = Array2::from_shape_vec(
        (l, d),
        env.data
            .iter()
            .map(|&v| T::from_f32(v).unwrap_or(T::nan()))
            .collect(),
    )
    .expect("payload length checked by reader");
    LabelEmbeddings::new(vectors)
}

pub fn save_embeddings<T: Scalar>(emb: &LabelEmbeddings<T>, path: &Path) -> Result<()> {
    save_envelopes(path, &[emb.to_envelope()])
}

/// Which supervision resources are available during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    /// Only `κ` and `λ` are known.
    AnnotationFree,
    /// A small annotated subset; `κ` and `λ` are estimated from it.
    ScarceAnnotation,
    /// Annotated subset plus known `κ` and `λ`.
    DomainSupervisor,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::AnnotationFree => "annotation-free",
            Setting::ScarceAnnotation => "scarce-annotation",
            Setting::DomainSupervisor => "domain-supervisor",
        })
    }
}

/// Supervision signals: average subset cardinality `κ`, per-label
/// observation probabilities `λ`, and optional annotated training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionConfig<T> {
    pub setting: Setting,
    pub kappa: Option<T>,
    pub lambdas: Option<Vec<T>>,
    /// Training sample id to binary label vector.
    pub annotations: BTreeMap<usize, Vec<bool>>,
}

impl<T: Scalar> SupervisionConfig<T> {
    pub fn annotation_free(kappa: T, lambdas: Vec<T>) -> Self {
        SupervisionConfig {
            setting: Setting::AnnotationFree,
            kappa: Some(kappa),
            lambdas: Some(lambdas),
            annotations: BTreeMap::new(),
        }
    }

    /// Checks the setting-dependent invariants against `L` labels and
    /// `n_train` training samples.
    pub fn validate(&self, labels: usize, n_train: usize) -> Result<()> {
        let err = |m: String| Err(Error::Manifest(m));
        match self.setting {
            Setting::AnnotationFree => {
                if !self.annotations.is_empty() {
                    return err("annotation-free setting must not carry annotations".into());
                }
                if self.kappa.is_none() {
                    return err("kappa required for annotation-free setting".into());
                }
                if self.lambdas.is_none() {
                    return err("lambdas required for annotation-free setting".into());
                }
            }
            Setting::ScarceAnnotation => {
                if self.annotations.is_empty() {
                    return err("scarce-annotation setting requires annotations".into());
                }
            }
            Setting::DomainSupervisor => {
                if self.annotations.is_empty() {
                    return err("domain-supervisor setting requires annotations".into());
                }
                if self.kappa.is_none() || self.lambdas.is_none() {
                    return err("kappa and lambdas required for domain-supervisor setting".into());
                }
            }
        }
        if let Some(k) = self.kappa {
            if !(k.is_finite() && k > T::zero()) {
                return err(format!("kappa must be positive, got {k}"));
            }
        }
        if let Some(lam) = &self.lambdas {
            if lam.len() != labels {
                return Err(Error::Dimension(format!(
                    "lambdas has {} entries, expected {labels}",
                    lam.len()
                )));
            }
            if let Some(bad) = lam.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
                return err(format!("lambda {bad} outside [0, 1]"));
            }
        }
        for (id, y) in &self.annotations {
            if *id >= n_train {
                return err(format!("annotated sample {id} out of range 0..{n_train}"));
            }
            if y.len() != labels {
                return Err(Error::Dimension(format!(
                    "annotation for sample {id} has {} entries, expected {labels}",
                    y.len()
                )));
            }
            if !y.iter().any(|&b| b) {
                return err(format!("annotation for sample {id} has no positive label"));
            }
        }
        Ok(())
    }
}

/// Binary `M × L` test labels; every row has at least one positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    labels: Array2<bool>,
}

impl GroundTruth {
    pub fn new(labels: Array2<bool>) -> Result<Self> {
        for (i, row) in labels.rows().into_iter().enumerate() {
            if !row.iter().any(|&b| b) {
                return Err(Error::Labels(format!("sample {i} has an empty label set")));
            }
        }
        Ok(GroundTruth { labels })
    }

    pub fn matrix(&self) -> &Array2<bool> {
        &self.labels
    }

    pub fn samples(&self) -> usize {
        self.labels.nrows()
    }

    pub fn to_envelope(&self) -> Envelope {
        let (n, l) = self.labels.dim();
        Envelope::new(
            n,
            l,
            1,
            self.labels
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    let env = load_envelope(path)?;
    if env.header.channels != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "label file must have 1 channel".into(),
        });
    }
    let mut bits = Vec::with_capacity(env.data.len());
    for &v in &env.data {
        bits.push(match v {
            0.0 => false,
            1.0 => true,
            other => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("label entry {other} is not 0 or 1"),
                })
            }
        });
    }
    let labels = Array2::from_shape_vec((env.header.rows, env.header.cols), bits)
        .expect("payload length checked by reader");
    GroundTruth::new(labels)
}

pub fn save_ground_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    save_envelopes(path, &[truth.to_envelope()])
}
