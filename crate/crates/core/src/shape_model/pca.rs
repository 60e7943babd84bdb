use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::align::Alignment;
use super::landmarks::{Frame, LandmarkSet};
use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the leading one are zero modes.
pub const DEGENERATE_RATIO: f64 = 1e-12;

/// What the stored eigenvector rows currently hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeScaling {
    /// Orthonormal eigenvectors.
    Unit,
    /// Eigenvectors multiplied by `sqrt(eigenvalue)`: weight 1.0 is one
    /// standard deviation along the mode.
    SqrtEigenvalue,
}

/// Point-distribution model: mean shape plus linear deformation modes.
///
/// Immutable once built; share it behind an `Arc` for concurrent readers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeModel {
    pub num_landmarks: usize,
    /// Interleaved `[x0, y0, ...]`, canonical frame.
    pub mean_shape: Vec<f64>,
    /// Row-major `num_modes x 2L`.
    pub eigenvectors: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub scaling: ModeScaling,
    pub alignment: Alignment,
    /// Side length of the square crop the canonical frame is centered in.
    pub crop_size: u32,
    pub corpus_meta: String,
}

/// Modes whose eigenvalue had to be clamped from a negative value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalingReport {
    pub clamped: Vec<usize>,
}

impl ShapeModel {
    pub fn num_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.num_landmarks
    }

    pub fn mode(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.eigenvectors[i * d..(i + 1) * d]
    }

    pub fn mean_landmarks(&self) -> LandmarkSet {
        LandmarkSet::from_flat(&self.mean_shape, Frame::Canonical)
    }

    /// `mean + sum_i w_i * v_i` over the first `w.len()` modes, flattened.
    pub fn reconstruct_flat(&self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() > self.num_modes() {
            return Err(Error::Dimension {
                context: "shape weights",
                expected: self.num_modes(),
                got: weights.len(),
            });
        }
        let mut out = self.mean_shape.clone();
        for (i, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                for (o, v) in out.iter_mut().zip(self.mode(i)) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }

    pub fn reconstruct(&self, weights: &[f64]) -> Result<LandmarkSet> {
        Ok(LandmarkSet::from_flat(&self.reconstruct_flat(weights)?, Frame::Canonical))
    }

    /// Inverse of [`ShapeModel::reconstruct`] over all stored modes; zero
    /// modes get weight 0.
    pub fn project(&self, shape: &LandmarkSet) -> Result<Vec<f64>> {
        if shape.len() != self.num_landmarks {
            return Err(Error::Dimension {
                context: "landmarks to project",
                expected: self.num_landmarks,
                got: shape.len(),
            });
        }
        let delta: Vec<f64> = shape
            .to_flat()
            .iter()
            .zip(&self.mean_shape)
            .map(|(s, m)| s - m)
            .collect();
        Ok((0..self.num_modes())
            .map(|i| {
                let dot: f64 = delta.iter().zip(self.mode(i)).map(|(a, b)| a * b).sum();
                let lambda = self.eigenvalues[i];
                match self.scaling {
                    ModeScaling::Unit => dot,
                    ModeScaling::SqrtEigenvalue if lambda > 0.0 => dot / lambda,
                    ModeScaling::SqrtEigenvalue => 0.0,
                }
            })
            .collect())
    }

    /// Keeps only the leading `p` modes.
    pub fn truncated(&self, p: usize) -> Result<ShapeModel> {
        if p > self.num_modes() {
            return Err(Error::Dimension {
                context: "truncated mode count",
                expected: self.num_modes(),
                got: p,
            });
        }
        let mut m = self.clone();
        m.eigenvalues.truncate(p);
        m.eigenvectors.truncate(p * self.dim());
        Ok(m)
    }
}

/// Multiplies every unit eigenvector by `sqrt(lambda)`.
///
/// Negative eigenvalues are clamped to zero (and reported); eigenvalues
/// below [`DEGENERATE_RATIO`] times the largest one become zero modes.
pub fn apply_eigenvalue_scaling(mut model: ShapeModel) -> Result<(ShapeModel, ScalingReport)> {
    if model.scaling != ModeScaling::Unit {
        return Err(Error::Config("eigenvectors are already scaled".into()));
    }
    let mut report = ScalingReport::default();
    let top = model.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let d = model.dim();
    for i in 0..model.num_modes() {
        let lambda = &mut model.eigenvalues[i];
        if *lambda < 0.0 {
            log::warn!("mode {i}: negative eigenvalue {lambda:e} clamped to 0");
            report.clamped.push(i);
            *lambda = 0.0;
        }
        if *lambda <= DEGENERATE_RATIO * top {
            *lambda = 0.0;
        }
        let factor = lambda.sqrt();
        for v in &mut model.eigenvectors[i * d..(i + 1) * d] {
            *v *= factor;
        }
    }
    model.scaling = ModeScaling::SqrtEigenvalue;
    Ok((model, report))
}

/// Unscaled PCA: orthonormal eigenvectors of the sample covariance, sorted
/// by eigenvalue, largest first.
pub fn compute_pca_unit(
    corpus: &[LandmarkSet],
    num_modes: usize,
    alignment: Alignment,
    crop_size: u32,
) -> Result<ShapeModel> {
    let n = corpus.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 shapes, got {n}"
        )));
    }
    let num_landmarks = corpus[0].len();
    if num_landmarks < LandmarkSet::MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "shapes need at least {} landmarks, got {num_landmarks}",
            LandmarkSet::MIN_POINTS
        )));
    }
    if let Some((i, s)) = corpus.iter().enumerate().find(|(_, s)| s.len() != num_landmarks) {
        return Err(Error::CorpusConsistency(format!(
            "shape {i} has {} landmarks, shape 0 has {num_landmarks}",
            s.len()
        )));
    }
    let d = 2 * num_landmarks;
    let limit = d.min(n - 1);
    if num_modes > limit {
        return Err(Error::InsufficientData(format!(
            "{num_modes} modes requested but at most min(2L, N-1) = {limit} are available"
        )));
    }

    let data: Vec<Vec<f64>> = corpus.iter().map(LandmarkSet::to_flat).collect();
    let mut mean = vec![0.0; d];
    for row in &data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, d, |r, c| data[r][c] - mean[c]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvalues = Vec::with_capacity(num_modes);
    let mut eigenvectors = Vec::with_capacity(num_modes * d);
    for &k in order.iter().take(num_modes) {
        eigenvalues.push(eig.eigenvalues[k]);
        let col = eig.eigenvectors.column(k);
        // Sign convention: largest-magnitude component positive.
        let pivot = col.iter().cloned().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        eigenvectors.extend(col.iter().map(|v| v * sign));
    }

    Ok(ShapeModel {
        num_landmarks,
        mean_shape: mean,
        eigenvectors,
        eigenvalues,
        scaling: ModeScaling::Unit,
        alignment,
        crop_size,
        corpus_meta: format!("{n} shapes"),
    })
}

/// PCA of an aligned corpus with eigenvalue-scaled modes.
pub fn compute_pca(
    aligned: &[LandmarkSet],
    num_modes: usize,
    alignment: Alignment,
    crop_size: u32,
) -> Result<ShapeModel> {
    let unit = compute_pca_unit(aligned, num_modes, alignment, crop_size)?;
    Ok(apply_eigenvalue_scaling(unit)?.0)
}
