//! Checkpoint file: four concatenated envelopes.
//!
//! 1. parameters (`4K·L × L × 1`)
//! 2. Adam first moments (same shape)
//! 3. Adam second moments (same shape)
//! 4. `1 × 2 × 1` metadata: completed epochs, optimizer step count
//!
//! Values are stored as `f32`, so resuming a 64-bit run continues from the
//! rounded state.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use super::adam::AdamState;
use crate::error::{Error, Result};
use crate::interchange::binary::{read_envelope, save_envelopes, Envelope};
use crate::propagation::ModelParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub optimizer: AdamState<T>,
    /// Number of completed epochs.
    pub epoch: usize,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn fresh(params: ModelParams<T>) -> Self {
        let optimizer = AdamState::new(params.labels(), params.depth());
        Checkpoint {
            params,
            optimizer,
            epoch: 0,
        }
    }

    pub fn envelopes(&self) -> [Envelope; 4] {
        [
            self.params.to_envelope(),
            self.optimizer.m.to_envelope(),
            self.optimizer.v.to_envelope(),
            Envelope::new(1, 2, 1, vec![self.epoch as f32, self.optimizer.t as f32]),
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_envelopes(path, &self.envelopes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let params = ModelParams::from_envelope(&read_envelope(&mut r, path)?)?;
        let m = ModelParams::from_envelope(&read_envelope(&mut r, path)?)?;
        let v = ModelParams::from_envelope(&read_envelope(&mut r, path)?)?;
        let meta = read_envelope(&mut r, path)?;
        let malformed = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        if m.depth() != params.depth()
            || v.depth() != params.depth()
            || m.labels() != params.labels()
            || v.labels() != params.labels()
        {
            return Err(malformed("optimizer state shape differs from parameters"));
        }
        if meta.data.len() != 2 || meta.data.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(malformed("bad metadata block"));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
            return Err(malformed("trailing bytes after checkpoint"));
        }
        Ok(Checkpoint {
            params,
            optimizer: AdamState {
                m,
                v,
                t: meta.data[1] as u64,
            },
            epoch: meta.data[0] as usize,
        })
    }
}
