//! Mesh loading from Wavefront OBJ files.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use umbra_core::scene::{parse_obj, Mesh, MeshError};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Mesh { path: PathBuf, source: MeshError },
}

/// Read and parse an OBJ file.
pub fn load_mesh(path: &Path) -> Result<Mesh, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_obj(&text).map_err(|source| LoadError::Mesh {
        path: path.to_path_buf(),
        source,
    })
}
