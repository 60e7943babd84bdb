//! Shape-model container: one JSON document with every float stored as a
//! hex float (`0x1.8p+1`), so a save/load round trip is bit-exact.
//!
//! Fields: `format`, `version`, `num_landmarks`, `num_modes`, `crop_size`,
//! `scaling`, `alignment`, `corpus`, `mean_shape` (2L), `eigenvalues`
//! (num_modes), `eigenvectors` (num_modes rows of 2L).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::align::Alignment;
use super::pca::{ModeScaling, ShapeModel};
use crate::error::{Error, Result};
use crate::serial::{hex_array, parse_hex_array, sha256_hex};

pub const SHAPE_MODEL_FORMAT: &str = "pdmnet-shape-model";
pub const SHAPE_MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    num_landmarks: usize,
    num_modes: usize,
    crop_size: u32,
    scaling: ModeScaling,
    alignment: Alignment,
    corpus: String,
    mean_shape: Vec<String>,
    eigenvalues: Vec<String>,
    eigenvectors: Vec<Vec<String>>,
}

/// Serializes the model to the container text.
pub fn to_container_string(model: &ShapeModel) -> String {
    let c = Container {
        format: SHAPE_MODEL_FORMAT.into(),
        version: SHAPE_MODEL_VERSION,
        num_landmarks: model.num_landmarks,
        num_modes: model.num_modes(),
        crop_size: model.crop_size,
        scaling: model.scaling,
        alignment: model.alignment.clone(),
        corpus: model.corpus_meta.clone(),
        mean_shape: hex_array(&model.mean_shape),
        eigenvalues: hex_array(&model.eigenvalues),
        eigenvectors: (0..model.num_modes()).map(|i| hex_array(model.mode(i))).collect(),
    };
    let mut s = serde_json::to_string_pretty(&c).expect("container serializes");
    s.push('\n');
    s
}

pub fn from_container_str(text: &str) -> Result<ShapeModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::parse(format!("line {}", e.line()), e.to_string()))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v as u32 != SHAPE_MODEL_VERSION => {
            return Err(Error::Version {
                kind: "shape model",
                found: v as u32,
                expected: SHAPE_MODEL_VERSION,
            })
        }
        None => return Err(Error::parse("version", "missing or not an integer")),
        _ => {}
    }
    let c: Container = serde_json::from_value(value).map_err(|e| Error::parse("container", e.to_string()))?;
    if c.format != SHAPE_MODEL_FORMAT {
        return Err(Error::parse("format", format!("expected {SHAPE_MODEL_FORMAT:?}, got {:?}", c.format)));
    }
    let d = 2 * c.num_landmarks;
    let mean_shape = parse_hex_array(&c.mean_shape, "mean_shape")?;
    if mean_shape.len() != d {
        return Err(Error::parse("mean_shape", format!("expected {d} values, got {}", mean_shape.len())));
    }
    let eigenvalues = parse_hex_array(&c.eigenvalues, "eigenvalues")?;
    if eigenvalues.len() != c.num_modes {
        return Err(Error::parse(
            "eigenvalues",
            format!("expected {} values, got {}", c.num_modes, eigenvalues.len()),
        ));
    }
    if c.eigenvectors.len() != c.num_modes {
        return Err(Error::parse(
            "eigenvectors",
            format!("expected {} rows, got {}", c.num_modes, c.eigenvectors.len()),
        ));
    }
    let mut eigenvectors = Vec::with_capacity(c.num_modes * d);
    for (i, row) in c.eigenvectors.iter().enumerate() {
        let field = format!("eigenvectors[{i}]");
        let row = parse_hex_array(row, &field)?;
        if row.len() != d {
            return Err(Error::parse(field, format!("expected {d} values, got {}", row.len())));
        }
        eigenvectors.extend(row);
    }
    Ok(ShapeModel {
        num_landmarks: c.num_landmarks,
        mean_shape,
        eigenvectors,
        eigenvalues,
        scaling: c.scaling,
        alignment: c.alignment,
        crop_size: c.crop_size,
        corpus_meta: c.corpus,
    })
}

/// Content hash of the serialized container.
pub fn fingerprint(model: &ShapeModel) -> String {
    sha256_hex(to_container_string(model).as_bytes())
}

pub fn save_model(model: &ShapeModel, path: &Path) -> Result<()> {
    crate::fsutil::write_atomic(path, to_container_string(model).as_bytes())
}

pub fn load_model(path: &Path) -> Result<ShapeModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_container_str(&text)
}
