//! Frame library construction: ingestion adapters, training-set composition
//! and augmentation.

mod augment;
mod ingest;

pub use augment::{augment, circular_shift, AugmentationConfig};
pub use ingest::{
    ingest_hosp_surveillance, ingest_ili, ingest_modeled, peak_intensities, read_csv_records,
    trajectory_sets, HospRecord, IliRecord, TrajectoryRecord, TrajectorySet, DEFAULT_PER_CELL_CAP,
};

mod compose;
pub mod fixture;
mod manifest;

pub use compose::{compose, DatasetComposition, FrameLibrary, TrainingSet};
pub use manifest::DatasetManifest;
