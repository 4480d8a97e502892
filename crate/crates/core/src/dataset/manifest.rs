use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::augment::AugmentationConfig;
use super::compose::{DatasetComposition, FrameLibrary, TrainingSet};
use crate::encoding::SourceTag;
use crate::error::Result;

/// Record of how a training set was built. Serialised as pretty JSON with
/// sorted maps, so identical inputs give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub composition: DatasetComposition,
    pub seed: u64,
    pub augmentation: AugmentationConfig,
    pub library_counts: BTreeMap<SourceTag, usize>,
    pub unique_frames: usize,
    pub total_samples: usize,
    pub sample_counts: BTreeMap<SourceTag, usize>,
    /// Occurrences of each frame id in the set.
    pub multiplicities: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn new(library: &FrameLibrary, set: &TrainingSet, augmentation: &AugmentationConfig) -> Self {
        Self {
            composition: set.composition.clone(),
            seed: set.seed,
            augmentation: augmentation.clone(),
            library_counts: library.counts(),
            unique_frames: set.n_unique(),
            total_samples: set.len(),
            sample_counts: set.sample_counts(),
            multiplicities: set.multiplicities(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Hex SHA-256 of [`to_json`](Self::to_json).
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
