//! File formats: JSON models and artifacts, CSV matrices, snapshot files.

mod model;
pub mod nonfinite;
mod snapshots;


pub use model::{
    load_model, read_json, save_model, write_json, MatrixData, ModelFile, QuadraticData,
};
pub use snapshots::{
    load_snapshots, matrix_from_csv, matrix_to_csv, read_snapshots_binary, save_snapshots,
    snapshots_from_csv, snapshots_to_csv, write_snapshots_binary, SNAPSHOT_MAGIC,
};
