//! Atomic file output and input sniffing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sparse_sphere::harmonic::analyze;
use sparse_sphere::io::{read_coefficients, read_grid, read_sparse_field, GRID_MAGIC};
use sparse_sphere::{GridField, HarmonicCoefficients, SparseField};

use crate::error::{CliError, CliResult};

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::Io(format!("{}: {e}", path.display())));
    }
    Ok(())
}

/// `out/prefix.suffix`.
pub fn sibling(dir: &Path, prefix: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{prefix}.{suffix}"))
}

/// Config echo path for a single output file: `name.config.json`.
pub fn config_path_for(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

/// Any of the three field file kinds.
#[derive(Debug, Clone)]
pub enum FieldInput {
    Sparse(SparseField),
    Coefficients(HarmonicCoefficients),
    Grid(GridField),
}

impl FieldInput {
    pub fn read(path: &Path) -> CliResult<FieldInput> {
        let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let ctx = |e: sparse_sphere::Error| CliError::Io(format!("{}: {e}", path.display()));
        if bytes.starts_with(GRID_MAGIC) {
            return Ok(FieldInput::Grid(read_grid(&bytes[..]).map_err(ctx)?));
        }
        let doc: Value = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Io(format!("{}: not a field file ({e})", path.display())))?;
        if doc.get("coefficients").is_some() {
            Ok(FieldInput::Coefficients(read_coefficients(&bytes[..]).map_err(ctx)?))
        } else if doc.get("weights").is_some() {
            Ok(FieldInput::Sparse(read_sparse_field(&bytes[..]).map_err(ctx)?))
        } else {
            Err(CliError::Io(format!("{}: unrecognized document", path.display())))
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FieldInput::Sparse(_) => "sparse-field",
            FieldInput::Coefficients(_) => "coefficients",
            FieldInput::Grid(_) => "grid",
        }
    }

    /// Harmonic coefficients: exact for sparse fields, by quadrature for grids.
    pub fn coefficients(&self) -> HarmonicCoefficients {
        match self {
            FieldInput::Sparse(f) => f.harmonic_coeffs(),
            FieldInput::Coefficients(c) => c.clone(),
            FieldInput::Grid(g) => analyze(g),
        }
    }
}
