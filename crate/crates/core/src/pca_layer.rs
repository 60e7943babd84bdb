//! Differentiable shape layer: shape weights plus a global similarity
//! transform in, landmark coordinates out.
//!
//! ```text
//! local  = mean + sum_i w_i * v_i          (v_i eigenvalue-scaled, constant)
//! output = [[s cos t, -s sin t, tx], [s sin t, s cos t, ty]] * [x, y, 1]^T
//! ```
//!
//! The backward pass is analytic. The model is held behind an `Arc` and is
//! never written to, so no gradient reaches the mean or the modes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape_model::{Frame, LandmarkSet, Point, ShapeModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalTransform {
    pub scale: f64,
    /// Radians, applied literally to (x, y) pixel coordinates.
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl GlobalTransform {
    pub const IDENTITY: GlobalTransform = GlobalTransform {
        scale: 1.0,
        theta: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(scale: f64, theta: f64, tx: f64, ty: f64) -> Self {
        GlobalTransform { scale, theta, tx, ty }
    }

    pub fn matrix(&self) -> [[f64; 3]; 2] {
        build_transform_matrix(self)
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = self.matrix();
        Point::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2],
        )
    }

    pub fn apply_set(&self, set: &LandmarkSet, frame: Frame) -> LandmarkSet {
        set.map_points(frame, |p| self.apply(p))
    }
}

/// Homogeneous 2x3 similarity matrix: `p' = M [x, y, 1]^T`.
pub fn build_transform_matrix(t: &GlobalTransform) -> [[f64; 3]; 2] {
    let (sin, cos) = t.theta.sin_cos();
    let (a, b) = (t.scale * cos, t.scale * sin);
    [[a, -b, t.tx], [b, a, t.ty]]
}

/// Layer input: `p` shape weights (standard-deviation units) and the global
/// transform. Also used as the container for the matching gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub weights: Vec<f64>,
    pub transform: GlobalTransform,
}

impl ParamVector {
    pub const NUM_TRANSFORM: usize = 4;

    pub fn new(weights: Vec<f64>, transform: GlobalTransform) -> Self {
        ParamVector { weights, transform }
    }

    /// Splits a raw `p + 4` regression output: weights first, then
    /// `(s, theta, tx, ty)`.
    pub fn from_raw(raw: &[f64], p: usize) -> Result<Self> {
        if raw.len() != p + Self::NUM_TRANSFORM {
            return Err(Error::Dimension {
                context: "raw parameter vector",
                expected: p + Self::NUM_TRANSFORM,
                got: raw.len(),
            });
        }
        Ok(ParamVector {
            weights: raw[..p].to_vec(),
            transform: GlobalTransform::new(raw[p], raw[p + 1], raw[p + 2], raw[p + 3]),
        })
    }

    pub fn to_raw(&self) -> Vec<f64> {
        let t = &self.transform;
        let mut v = self.weights.clone();
        v.extend([t.scale, t.theta, t.tx, t.ty]);
        v
    }
}

#[derive(Debug, Clone)]
pub struct PcaLayer {
    model: Arc<ShapeModel>,
    num_params: usize,
}

impl PcaLayer {
    pub fn new(model: Arc<ShapeModel>, num_params: usize) -> Result<Self> {
        if num_params > model.num_modes() {
            return Err(Error::Dimension {
                context: "layer shape parameters exceed model modes",
                expected: model.num_modes(),
                got: num_params,
            });
        }
        Ok(PcaLayer { model, num_params })
    }

    pub fn model(&self) -> &ShapeModel {
        &self.model
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn num_landmarks(&self) -> usize {
        self.model.num_landmarks
    }

    fn check(&self, params: &ParamVector) -> Result<()> {
        if params.weights.len() != self.num_params {
            return Err(Error::Dimension {
                context: "layer shape weights",
                expected: self.num_params,
                got: params.weights.len(),
            });
        }
        Ok(())
    }

    /// Shape in canonical coordinates before the global transform.
    pub fn local_shape(&self, params: &ParamVector) -> Result<Vec<f64>> {
        self.check(params)?;
        self.model.reconstruct_flat(&params.weights)
    }

    pub fn forward_one(&self, params: &ParamVector) -> Result<LandmarkSet> {
        let local = self.local_shape(params)?;
        let m = params.transform.matrix();
        let points = local
            .chunks_exact(2)
            .map(|c| Point::new(m[0][0] * c[0] + m[0][1] * c[1] + m[0][2], m[1][0] * c[0] + m[1][1] * c[1] + m[1][2]))
            .collect();
        Ok(LandmarkSet {
            points,
            frame: Frame::Crop,
        })
    }

    pub fn forward(&self, params: &[ParamVector]) -> Result<Vec<LandmarkSet>> {
        params.iter().map(|p| self.forward_one(p)).collect()
    }

    /// Gradient of `sum_l <grad_l, out_l>` with respect to every input.
    pub fn backward_one(&self, params: &ParamVector, grad: &LandmarkSet) -> Result<ParamVector> {
        if grad.len() != self.num_landmarks() {
            return Err(Error::Dimension {
                context: "landmark gradient",
                expected: self.num_landmarks(),
                got: grad.len(),
            });
        }
        let local = self.local_shape(params)?;
        let t = &params.transform;
        let (sin, cos) = t.theta.sin_cos();
        let (mut d_scale, mut d_theta, mut d_tx, mut d_ty) = (0.0, 0.0, 0.0, 0.0);
        // s * R^T * g, the gradient with respect to the local coordinates.
        let mut d_local = Vec::with_capacity(local.len());
        for (c, g) in local.chunks_exact(2).zip(&grad.points) {
            let (x, y) = (c[0], c[1]);
            let (rx, ry) = (cos * x - sin * y, sin * x + cos * y);
            d_tx += g.x;
            d_ty += g.y;
            d_scale += g.x * rx + g.y * ry;
            // dR/dtheta * local = (-ry, rx)
            d_theta += t.scale * (-g.x * ry + g.y * rx);
            d_local.push(t.scale * (cos * g.x + sin * g.y));
            d_local.push(t.scale * (-sin * g.x + cos * g.y));
        }
        let d_weights = (0..self.num_params)
            .map(|i| d_local.iter().zip(self.model.mode(i)).map(|(a, b)| a * b).sum())
            .collect();
        Ok(ParamVector {
            weights: d_weights,
            transform: GlobalTransform::new(d_scale, d_theta, d_tx, d_ty),
        })
    }

    pub fn backward(&self, params: &[ParamVector], grads: &[LandmarkSet]) -> Result<Vec<ParamVector>> {
        if params.len() != grads.len() {
            return Err(Error::Dimension {
                context: "gradient batch size",
                expected: params.len(),
                got: grads.len(),
            });
        }
        params.iter().zip(grads).map(|(p, g)| self.backward_one(p, g)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape_model::{Alignment, ModeScaling};
    use std::f64::consts::FRAC_PI_2;

    fn toy_model() -> Arc<ShapeModel> {
        // L = 3, two orthogonal modes scaled by sqrt(4) and sqrt(1).
        Arc::new(ShapeModel {
            num_landmarks: 3,
            mean_shape: vec![-1.0, 0.0, 1.0, 0.0, 0.0, 2.0],
            eigenvectors: vec![
                2.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            ],
            eigenvalues: vec![4.0, 1.0],
            scaling: ModeScaling::SqrtEigenvalue,
            alignment: Alignment::None,
            crop_size: 224,
            corpus_meta: String::new(),
        })
    }

    #[test]
    fn transform_matrix_examples() {
        assert_eq!(build_transform_matrix(&GlobalTransform::IDENTITY), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let m = build_transform_matrix(&GlobalTransform::new(1.0, FRAC_PI_2, 0.0, 0.0));
        let expected = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0]];
        for r in 0..2 {
            for c in 0..3 {
                assert!((m[r][c] - expected[r][c]).abs() < 1e-15);
            }
        }
        assert_eq!(
            build_transform_matrix(&GlobalTransform::new(2.0, 0.0, 3.0, 4.0)),
            [[2.0, 0.0, 3.0], [0.0, 2.0, 4.0]]
        );
        let t = GlobalTransform::new(1.7, 0.4, -3.0, 2.0);
        let m = t.matrix();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        assert!((det - 1.7 * 1.7).abs() < 1e-12);
    }

    #[test]
    fn forward_identities() {
        let layer = PcaLayer::new(toy_model(), 2).unwrap();
        let zero = ParamVector::new(vec![0.0, 0.0], GlobalTransform::IDENTITY);
        assert_eq!(layer.forward_one(&zero).unwrap().to_flat(), layer.model().mean_shape);
        let doubled = ParamVector::new(vec![0.0, 0.0], GlobalTransform::new(2.0, 0.0, 0.0, 0.0));
        let out = layer.forward_one(&doubled).unwrap().to_flat();
        let expect: Vec<f64> = layer.model().mean_shape.iter().map(|v| 2.0 * v).collect();
        assert_eq!(out, expect);
        let w = ParamVector::new(vec![1.0, -2.0], GlobalTransform::IDENTITY);
        assert_eq!(layer.forward_one(&w).unwrap().to_flat(), vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dimension_errors() {
        assert!(PcaLayer::new(toy_model(), 3).is_err());
        let layer = PcaLayer::new(toy_model(), 1).unwrap();
        let bad = ParamVector::new(vec![0.0, 0.0], GlobalTransform::IDENTITY);
        assert!(layer.forward_one(&bad).is_err());
        let ok = ParamVector::new(vec![0.0], GlobalTransform::IDENTITY);
        let short = LandmarkSet::from_flat(&[0.0; 4], Frame::Crop);
        assert!(layer.backward_one(&ok, &short).is_err());
        assert!(ParamVector::from_raw(&[0.0; 4], 1).is_err());
    }

    #[test]
    fn backward_simple_cases() {
        let layer = PcaLayer::new(toy_model(), 2).unwrap();
        let p = ParamVector::new(vec![0.3, -0.2], GlobalTransform::new(1.3, 0.2, 5.0, 1.0));
        let zero = LandmarkSet::from_flat(&[0.0; 6], Frame::Crop);
        let g = layer.backward_one(&p, &zero).unwrap();
        assert!(g.to_raw().iter().all(|&v| v == 0.0));

        let p = ParamVector::new(vec![0.0, 0.0], GlobalTransform::IDENTITY);
        let unit_x = LandmarkSet::from_flat(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0], Frame::Crop);
        let g = layer.backward_one(&p, &unit_x).unwrap();
        assert_eq!(g.transform.tx, 1.0);
        assert_eq!(g.transform.ty, 0.0);
    }

    #[test]
    fn raw_round_trip() {
        let p = ParamVector::new(vec![0.5, 1.5], GlobalTransform::new(1.0, 0.1, 2.0, 3.0));
        assert_eq!(ParamVector::from_raw(&p.to_raw(), 2).unwrap(), p);
    }
}
