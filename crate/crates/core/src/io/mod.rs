//! On-disk formats, configuration, model files and the synthetic scene
//! generator.

pub mod config;
pub mod grid;
mod model_file;
pub mod synth;
pub mod tables;

use std::path::Path;

pub use config::{parse_kriging_pair, PipelineConfig, SplitMode};
pub use grid::{read_qa, read_raster, round_sig6, write_qa, write_raster};
pub use model_file::{load_model, model_from_json, model_to_json, save_model, MODEL_SCHEMA_VERSION};
pub use synth::{generate_synthetic_scene, write_scene, SyntheticParams, SyntheticScene};
pub use tables::{read_samples, read_stations, write_samples, write_stations};

use crate::error::{Error, Result};

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
