//! Dataset representation, ingestion, normalisation, regressor construction
//! and oracle-system generation.

mod csv_io;
mod hankel;
mod manifest;
mod normalize;
mod series;
pub mod synthetic;

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use hankel::{build_hankel, build_hankel_from, LagStructure, MAX_LAG};
pub use manifest::{
    BenchmarkDataset, BenchmarkId, DatasetEntry, DatasetManifest, FileEntry, FitData, TestAccess, TestEntry,
    TestSets, MANIFEST_VERSION,
};
pub use normalize::{Normalizer, NormalizerMode};
pub use series::{split_train_val, TimeSeries};
pub use synthetic::{generate_synthetic, NoisePlacement, SyntheticKind, SyntheticSystemSpec};
