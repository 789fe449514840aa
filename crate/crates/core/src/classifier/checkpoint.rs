use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Architecture, Layer, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// JSON checkpoint. Floats are written in shortest round-trip form and parsed with
/// correct rounding, so save/load is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub format_version: u32,
    pub architecture: Architecture,
    pub layers: Vec<Layer<T>>,
    pub momentum: Vec<Layer<T>>,
    pub epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<ChaCha8Rng>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: &Mlp<T>, epoch: usize, rng: Option<ChaCha8Rng>) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            architecture: model.architecture.clone(),
            layers: model.layers.clone(),
            momentum: model.momentum.clone(),
            epoch,
            rng,
            eta: None,
            psi: None,
        }
    }

    pub fn model(&self) -> Result<Mlp<T>> {
        Mlp::from_parts(
            self.architecture.clone(),
            self.layers.clone(),
            self.momentum.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(s)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint format version {}",
                ck.format_version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
