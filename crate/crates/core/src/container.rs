//! Flat-binary float container: matrices stored as 32-bit little-endian
//! floats next to a JSON sidecar describing the shape. Model checkpoints
//! and per-clip feature matrices share this format.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShapeSidecar {
    rows: usize,
    cols: usize,
}

/// Sidecar of a per-clip feature matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub clip_id: String,
    pub rows: usize,
    pub cols: usize,
}

/// Appends a dotted suffix to the file name (unlike `with_extension`, this
/// never replaces existing dots in the stem).
pub(crate) fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push('.');
    name.push_str(suffix);
    stem.with_file_name(name)
}

fn blob_path(stem: &Path) -> PathBuf {
    with_suffix(stem, "f32")
}

fn write_blob(
    path: &Path,
    rows: usize,
    cols: usize,
    values: impl Iterator<Item = f64>,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut count = 0usize;
    for v in values {
        out.write_all(&(v as f32).to_le_bytes())?;
        count += 1;
    }
    out.flush()?;
    if count != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            got: count,
        });
    }
    Ok(())
}

fn read_blob(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes.chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|_| Error::DimensionMismatch {
        expected: rows * cols,
        got: 0,
    })
}

/// Writes `stem.f32` plus `stem.shape.json`.
pub fn write_matrix(stem: &Path, m: &Array2<f64>) -> Result<()> {
    write_blob(&blob_path(stem), m.nrows(), m.ncols(), m.iter().copied())?;
    let sidecar = ShapeSidecar {
        rows: m.nrows(),
        cols: m.ncols(),
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(with_suffix(stem, "shape.json"), json)?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`].
pub fn read_matrix(stem: &Path) -> Result<Array2<f64>> {
    let sidecar: ShapeSidecar =
        serde_json::from_str(&std::fs::read_to_string(with_suffix(stem, "shape.json"))?)?;
    read_blob(&blob_path(stem), sidecar.rows, sidecar.cols)
}

/// Writes `dir/<clip_id>.f32` plus `dir/<clip_id>.json` for a per-clip
/// feature matrix (timesteps x features).
pub fn write_feature_matrix(dir: &Path, clip_id: &str, m: &Array2<f64>) -> Result<()> {
    let stem = dir.join(clip_id);
    write_blob(&blob_path(&stem), m.nrows(), m.ncols(), m.iter().copied())?;
    let sidecar = FeatureSidecar {
        clip_id: clip_id.to_string(),
        rows: m.nrows(),
        cols: m.ncols(),
    };
    std::fs::write(
        with_suffix(&stem, "json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Reads one feature matrix given its JSON sidecar path.
pub fn read_feature_matrix(sidecar_path: &Path) -> Result<(String, Array2<f64>)> {
    let sidecar: FeatureSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    let m = read_blob(
        &sidecar_path.with_file_name(format!("{}.f32", sidecar_path.file_stem().unwrap().to_string_lossy())),
        sidecar.rows,
        sidecar.cols,
    )?;
    Ok((sidecar.clip_id, m))
}

/// Reads every feature matrix in a directory, sorted by clip id.
pub fn read_feature_dir(dir: &Path) -> Result<Vec<(String, Array2<f64>)>> {
    let mut sidecars: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map_or(false, |e| e == "json"))
        .collect();
    sidecars.sort();
    let mut out = Vec::with_capacity(sidecars.len());
    for p in sidecars {
        out.push(read_feature_matrix(&p)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no feature matrices in {}",
            dir.display()
        )));
    }
    Ok(out)
}
