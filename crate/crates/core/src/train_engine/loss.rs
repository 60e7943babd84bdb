use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape_model::{LandmarkSet, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    L1,
    Mse,
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "mse" | "l2" => Ok(LossKind::Mse),
            other => Err(format!("unknown loss {other:?} (expected l1 or mse)")),
        }
    }
}

impl LossKind {
    fn value(self, d: f64) -> f64 {
        match self {
            LossKind::L1 => d.abs(),
            LossKind::Mse => d * d,
        }
    }

    fn derivative(self, d: f64) -> f64 {
        match self {
            // subgradient 0 at d = 0
            LossKind::L1 => {
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            LossKind::Mse => 2.0 * d,
        }
    }
}

fn check(pred: &[LandmarkSet], gt: &[LandmarkSet]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension {
            context: "loss batch size",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    for (p, g) in pred.iter().zip(gt) {
        if p.len() != g.len() {
            return Err(Error::Dimension {
                context: "loss landmark count",
                expected: g.len(),
                got: p.len(),
            });
        }
    }
    Ok(())
}

/// Sum of per-coordinate losses of one set (no averaging).
pub(crate) fn loss_sum(pred: &LandmarkSet, gt: &LandmarkSet, kind: LossKind) -> f64 {
    pred.points
        .iter()
        .zip(&gt.points)
        .map(|(p, g)| kind.value(p.x - g.x) + kind.value(p.y - g.y))
        .sum()
}

/// `d loss_sum / d pred`, multiplied by `scale`.
pub(crate) fn loss_sum_grad(pred: &LandmarkSet, gt: &LandmarkSet, kind: LossKind, scale: f64) -> LandmarkSet {
    LandmarkSet {
        points: pred
            .points
            .iter()
            .zip(&gt.points)
            .map(|(p, g)| Point::new(scale * kind.derivative(p.x - g.x), scale * kind.derivative(p.y - g.y)))
            .collect(),
        frame: pred.frame,
    }
}

/// Mean point loss over batch, landmarks and both coordinates.
pub fn point_loss(pred: &[LandmarkSet], gt: &[LandmarkSet], kind: LossKind) -> Result<f64> {
    check(pred, gt)?;
    let count: usize = gt.iter().map(|g| 2 * g.len()).sum();
    if count == 0 {
        return Ok(0.0);
    }
    let total: f64 = pred.iter().zip(gt).map(|(p, g)| loss_sum(p, g, kind)).sum();
    Ok(total / count as f64)
}

/// Loss and its gradient with respect to every predicted coordinate.
pub fn point_loss_with_grad(pred: &[LandmarkSet], gt: &[LandmarkSet], kind: LossKind) -> Result<(f64, Vec<LandmarkSet>)> {
    let loss = point_loss(pred, gt, kind)?;
    let count: usize = gt.iter().map(|g| 2 * g.len()).sum();
    let scale = 1.0 / count.max(1) as f64;
    let grads = pred.iter().zip(gt).map(|(p, g)| loss_sum_grad(p, g, kind, scale)).collect();
    Ok((loss, grads))
}
