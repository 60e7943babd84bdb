//! Rotation normalization of landmark corpora.
//!
//! Every shape is rotated about its own centroid; translation and scale are
//! left untouched.

use serde::{Deserialize, Serialize};

use super::landmarks::{centroid_of, Frame, LandmarkSet, Point};
use crate::error::{Error, Result};

/// How a corpus is rotation-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Alignment {
    /// Rotate each shape so the centroid of `second` lies horizontally to
    /// the right of the centroid of `first` (for faces: left eye group,
    /// right eye group).
    Anchors { first: Vec<usize>, second: Vec<usize> },
    /// Rotate each shape onto the iteratively refined corpus mean.
    Procrustes { max_iterations: usize },
    /// Leave the corpus as is.
    None,
}

impl Alignment {
    /// Eye-region groups of the 68-point iBUG scheme.
    pub fn ibug68_eyes() -> Self {
        Alignment::Anchors {
            first: (36..42).collect(),
            second: (42..48).collect(),
        }
    }

    pub fn procrustes() -> Self {
        Alignment::Procrustes { max_iterations: 20 }
    }
}

const ANCHOR_EPS: f64 = 1e-12;
const PROCRUSTES_TOL: f64 = 1e-12;

/// Rotation-normalizes `corpus` and tags the result as canonical.
pub fn align_corpus(corpus: &[LandmarkSet], alignment: &Alignment) -> Result<Vec<LandmarkSet>> {
    let n_points = check_corpus(corpus)?;
    match alignment {
        Alignment::Anchors { first, second } => {
            check_anchors(first, second, n_points)?;
            corpus
                .iter()
                .enumerate()
                .map(|(i, shape)| {
                    let a = centroid_of(first.iter().map(|&k| shape.points[k]));
                    let b = centroid_of(second.iter().map(|&k| shape.points[k]));
                    let (dx, dy) = (b.x - a.x, b.y - a.y);
                    if dx.hypot(dy) <= ANCHOR_EPS * (1.0 + a.x.abs().max(a.y.abs())) {
                        return Err(Error::DegenerateAnchor(format!(
                            "anchor centroids coincide in shape {i}"
                        )));
                    }
                    Ok(rotate_canonical(shape, -dy.atan2(dx)))
                })
                .collect()
        }
        Alignment::Procrustes { max_iterations } => Ok(procrustes(corpus, *max_iterations)),
        Alignment::None => Ok(corpus
            .iter()
            .map(|s| LandmarkSet {
                points: s.points.clone(),
                frame: Frame::Canonical,
            })
            .collect()),
    }
}

fn check_corpus(corpus: &[LandmarkSet]) -> Result<usize> {
    let Some(first) = corpus.first() else {
        return Err(Error::InsufficientData("empty corpus".into()));
    };
    let n = first.len();
    if n < LandmarkSet::MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "shapes need at least {} landmarks, got {n}",
            LandmarkSet::MIN_POINTS
        )));
    }
    if let Some((i, s)) = corpus.iter().enumerate().find(|(_, s)| s.len() != n) {
        return Err(Error::CorpusConsistency(format!(
            "shape {i} has {} landmarks, shape 0 has {n}",
            s.len()
        )));
    }
    Ok(n)
}

fn check_anchors(first: &[usize], second: &[usize], n_points: usize) -> Result<()> {
    if first.is_empty() || second.is_empty() {
        return Err(Error::DegenerateAnchor("anchor groups must be non-empty".into()));
    }
    if let Some(&k) = first.iter().chain(second).find(|&&k| k >= n_points) {
        return Err(Error::DegenerateAnchor(format!(
            "anchor index {k} out of range for {n_points} landmarks"
        )));
    }
    if first.iter().any(|k| second.contains(k)) {
        return Err(Error::DegenerateAnchor("anchor groups overlap".into()));
    }
    Ok(())
}

fn rotate_canonical(shape: &LandmarkSet, angle: f64) -> LandmarkSet {
    let mut out = shape.rotated_about(shape.centroid(), angle);
    out.frame = Frame::Canonical;
    out
}

/// Angle that best rotates `shape` (about its centroid) onto `reference`
/// (about its centroid) in the least-squares sense.
fn best_rotation(shape: &LandmarkSet, reference: &[Point]) -> f64 {
    let c = shape.centroid();
    let r = centroid_of(reference.iter().copied());
    let (mut num, mut den) = (0.0, 0.0);
    for (p, q) in shape.points.iter().zip(reference) {
        let (ax, ay) = (p.x - c.x, p.y - c.y);
        let (bx, by) = (q.x - r.x, q.y - r.y);
        num += ax * by - ay * bx;
        den += ax * bx + ay * by;
    }
    num.atan2(den)
}

fn procrustes(corpus: &[LandmarkSet], max_iterations: usize) -> Vec<LandmarkSet> {
    let n_points = corpus[0].len();
    let mut reference = corpus[0].points.clone();
    let mut aligned: Vec<LandmarkSet> = corpus.to_vec();
    for _ in 0..max_iterations.max(1) {
        aligned = corpus
            .iter()
            .map(|s| rotate_canonical(s, best_rotation(s, &reference)))
            .collect();
        let mean: Vec<Point> = (0..n_points)
            .map(|k| centroid_of(aligned.iter().map(|s| s.points[k])))
            .collect();
        // Pin the mean's orientation to the first shape's, so the iteration
        // does not drift.
        let mean_set = LandmarkSet {
            points: mean,
            frame: Frame::Canonical,
        };
        let pin = best_rotation(&mean_set, &corpus[0].points);
        let next = mean_set.rotated_about(mean_set.centroid(), pin).points;
        let change = next
            .iter()
            .zip(&reference)
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max);
        reference = next;
        if change < PROCRUSTES_TOL {
            break;
        }
    }
    aligned
}
