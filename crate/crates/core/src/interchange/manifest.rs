//! JSON manifest tying label descriptions, supervision signals and the
//! binary data files together.
//!
//! ```json
//! {
//!   "labels": [{"index": 0, "description": "interest rates"}, ...],
//!   "setting": "annotation-free" | "scarce-annotation" | "domain-supervisor",
//!   "kappa": 1.24,
//!   "lambdas": [0.01, ...],
//!   "annotations": {"17": [0, 1, 0, ...]},
//!   "train_features": "train.bin",
//!   "test_features": "test.bin",
//!   "test_labels": "test_labels.bin",
//!   "embeddings": "embeddings.bin"
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::binary::peek_header;
use super::{LabelSpace, Setting, SupervisionConfig, FEATURE_CHANNELS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub index: usize,
    pub description: String,
}

/// Raw manifest as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDocument {
    pub labels: Vec<LabelEntry>,
    pub setting: Setting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub annotations: BTreeMap<usize, Vec<u8>>,
    pub train_features: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_features: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
}

/// Resolved file references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestFiles {
    pub train_features: PathBuf,
    pub test_features: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Manifest<T> {
    pub label_space: LabelSpace,
    pub supervision: SupervisionConfig<T>,
    pub files: ManifestFiles,
    pub n_train: usize,
    pub n_test: Option<usize>,
}

impl<T> Manifest<T> {
    pub fn labels(&self) -> usize {
        self.label_space.len()
    }

    pub fn require_embeddings(&self) -> Result<&Path> {
        self.files
            .embeddings
            .as_deref()
            .ok_or_else(|| Error::Manifest("missing field \"embeddings\"".into()))
    }

    pub fn require_test(&self) -> Result<(&Path, &Path)> {
        match (&self.files.test_features, &self.files.test_labels) {
            (Some(f), Some(y)) => Ok((f, y)),
            (None, _) => Err(Error::Manifest("missing field \"test_features\"".into())),
            (_, None) => Err(Error::Manifest("missing field \"test_labels\"".into())),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ManifestDocument {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    fn supervision<T: Scalar>(&self) -> Result<SupervisionConfig<T>> {
        let mut annotations = BTreeMap::new();
        for (id, y) in &self.annotations {
            let bits = y
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    v => Err(Error::Manifest(format!(
                        "annotation for sample {id} contains {v}, expected 0 or 1"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            annotations.insert(*id, bits);
        }
        Ok(SupervisionConfig {
            setting: self.setting,
            kappa: self.kappa.map(T::lit),
            lambdas: self
                .lambdas
                .as_ref()
                .map(|v| v.iter().copied().map(T::lit).collect()),
            annotations,
        })
    }
}

/// Loads a manifest and cross-checks every referenced file header against it.
pub fn load_manifest<T: Scalar>(path: &Path) -> Result<Manifest<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc = ManifestDocument::parse(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    manifest_from_document(&doc, base)
}

pub fn manifest_from_document<T: Scalar>(
    doc: &ManifestDocument,
    base: &Path,
) -> Result<Manifest<T>> {
    let label_space =
        LabelSpace::from_indexed(doc.labels.iter().map(|e| (e.index, e.description.clone())))?;
    let l = label_space.len();
    let supervision = doc.supervision::<T>()?;
    let files = ManifestFiles {
        train_features: resolve(base, &doc.train_features),
        test_features: doc.test_features.as_deref().map(|p| resolve(base, p)),
        test_labels: doc.test_labels.as_deref().map(|p| resolve(base, p)),
        embeddings: doc.embeddings.as_deref().map(|p| resolve(base, p)),
    };

    let dim_err =
        |p: &Path, what: String| Err(Error::Dimension(format!("{}: {what}", p.display())));

    let train = peek_header(&files.train_features)?;
    if train.channels != FEATURE_CHANNELS {
        return dim_err(
            &files.train_features,
            format!("{} channels, expected 3", train.channels),
        );
    }
    if train.cols != l {
        return dim_err(
            &files.train_features,
            format!("{} labels but manifest declares L={l}", train.cols),
        );
    }

    let mut n_test = None;
    if let Some(p) = &files.test_features {
        let h = peek_header(p)?;
        if h.channels != FEATURE_CHANNELS || h.cols != l {
            return dim_err(
                p,
                format!("shape {}x{}x{} vs L={l}", h.rows, h.cols, h.channels),
            );
        }
        n_test = Some(h.rows);
    }
    if let Some(p) = &files.test_labels {
        let h = peek_header(p)?;
        if h.channels != 1 || h.cols != l {
            return dim_err(
                p,
                format!("shape {}x{}x{} vs L={l}", h.rows, h.cols, h.channels),
            );
        }
        if let Some(n) = n_test {
            if h.rows != n {
                return dim_err(p, format!("{} label rows but {n} test samples", h.rows));
            }
        }
    }
    if let Some(p) = &files.embeddings {
        let h = peek_header(p)?;
        if h.channels != 1 || h.rows != l {
            return dim_err(p, format!("{} embedding rows vs L={l}", h.rows));
        }
    }

    supervision.validate(l, train.rows)?;
    Ok(Manifest {
        label_space,
        supervision,
        files,
        n_train: train.rows,
        n_test,
    })
}

pub fn save_manifest(doc: &ManifestDocument, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| Error::Manifest(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
