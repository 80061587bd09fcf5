//! File formats and configuration for the scene-assembly pipeline.
//!
//! Formats: OBJ meshes, PLY point clouds (ASCII and binary little-endian,
//! optional per-point confidence), PNG masks/images, and the binary PMAP
//! organized point map. Configuration and result types serialize as JSON;
//! all writers go through an atomic temp-file-and-rename path.

pub mod config;
pub mod error;
pub mod obj;
pub mod ply;
pub mod pmap;
pub mod png;
pub mod schema;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use config::{
    CameraSource, ObjectConfig, ObjectResult, ObjectRunStatus, RunReport, SceneConfig,
    SceneResult, SceneStatus, ServiceBackend, ServiceEndpointConfig, ServicesConfig,
};
pub use error::IoError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, IoError>;

/// Write bytes atomically: temp file in the target directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| IoError::Io(e.error))?;
    Ok(())
}

/// Serialize a value as pretty JSON and write it atomically.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    atomic_write(path, body.as_bytes())
}

/// Read and deserialize a JSON file.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&body)?)
}

/// Per-iteration loss history as CSV.
pub fn write_loss_csv(path: &Path, history: &[scenefit_core::loss::LossBreakdown]) -> Result<()> {
    let mut out = String::from("iteration,silhouette,geometric,bbox,total\n");
    for (i, h) in history.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i, h.silhouette, h.geometric, h.bbox, h.total
        ));
    }
    atomic_write(path, out.as_bytes())
}
