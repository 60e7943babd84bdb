//! Normalized point-to-point error, dataset evaluation, the shape-parameter
//! sweep and throughput measurement.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_pipeline::{Image, Sample};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::feature_net::Network;
use crate::shape_model::{LandmarkSet, ShapeModel};
use crate::train_engine::{train, Checkpoint, Predictor, TrainConfig};

/// Mean landmark distance divided by the mean of the ground-truth bounding
/// box width and height.
pub fn normalized_p2p_error(pred: &LandmarkSet, gt: &LandmarkSet) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension {
            context: "landmarks compared by the error metric",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if pred.frame != gt.frame {
        return Err(Error::Shape(format!(
            "prediction is in the {:?} frame, ground truth in the {:?} frame",
            pred.frame, gt.frame
        )));
    }
    let bb = gt.bounding_box();
    let extent = (bb.width + bb.height) / 2.0;
    if !(extent > 0.0) {
        return Err(Error::DegenerateExtent(format!(
            "ground-truth box is {} x {}",
            bb.width,
            bb.height
        )));
    }
    let total: f64 = pred.points.iter().zip(&gt.points).map(|(p, g)| p.dist(*g)).sum();
    Ok(total / gt.len() as f64 / extent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ids: Vec<String>,
    pub per_image_errors: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub num_images: usize,
    /// Whatever produced the predictions (checkpoint epoch, config, ...).
    pub config: serde_json::Value,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl EvalResult {
    pub fn from_errors(ids: Vec<String>, errors: Vec<f64>, config: serde_json::Value) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::EmptyDataset("nothing to evaluate".into()));
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let std = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(EvalResult {
            ids,
            median: median(&errors),
            mean,
            std,
            num_images: errors.len(),
            per_image_errors: errors,
            config,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("eval result serializes") + "\n"
    }

    /// `bin_start,bin_end,count` over `[0, max error]`.
    pub fn histogram_csv(&self, bins: usize) -> String {
        let bins = bins.max(1);
        let hi = self.per_image_errors.iter().cloned().fold(0.0, f64::max).max(1e-12);
        let width = hi / bins as f64;
        let mut counts = vec![0usize; bins];
        for e in &self.per_image_errors {
            counts[((e / width) as usize).min(bins - 1)] += 1;
        }
        let mut out = String::from("bin_start,bin_end,count\n");
        for (i, c) in counts.iter().enumerate() {
            out.push_str(&format!("{},{},{c}\n", i as f64 * width, (i + 1) as f64 * width));
        }
        out
    }

    /// `id,error` per image in evaluation order.
    pub fn per_image_csv(&self) -> String {
        let mut out = String::from("id,error\n");
        for (id, e) in self.ids.iter().zip(&self.per_image_errors) {
            out.push_str(&format!("{id},{e}\n"));
        }
        out
    }
}

/// Scores given crop-frame predictions against the samples' ground truth.
pub fn evaluate_predictions(preds: &[LandmarkSet], samples: &[Sample], config: serde_json::Value) -> Result<EvalResult> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no test samples".into()));
    }
    if preds.len() != samples.len() {
        return Err(Error::Dimension {
            context: "predictions per test sample",
            expected: samples.len(),
            got: preds.len(),
        });
    }
    let errors = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| normalized_p2p_error(p, &s.landmarks))
        .collect::<Result<Vec<_>>>()?;
    EvalResult::from_errors(samples.iter().map(|s| s.id.clone()).collect(), errors, config)
}

pub fn evaluate(predictor: &Predictor, samples: &[Sample], exec: Exec) -> Result<EvalResult> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no test samples".into()));
    }
    let images: Vec<&Image> = samples.iter().map(|s| &s.image).collect();
    let preds: Vec<LandmarkSet> = predictor.predict(&images, exec)?.into_iter().map(|(l, _)| l).collect();
    let config = serde_json::json!({
        "network": predictor.network().config(),
        "num_shape_params": predictor.layer().num_params(),
    });
    evaluate_predictions(&preds, samples, config)
}

/// Evaluates a checkpoint after checking it belongs to `model`.
pub fn evaluate_checkpoint(checkpoint: &Checkpoint, model: Arc<ShapeModel>, samples: &[Sample], exec: Exec) -> Result<EvalResult> {
    let predictor = Predictor::from_checkpoint(checkpoint, model)?;
    let mut result = evaluate(&predictor, samples, exec)?;
    result.config = serde_json::json!({
        "epoch": checkpoint.epoch,
        "validation_error": checkpoint.validation_error,
        "shape_model_fingerprint": checkpoint.shape_model_fingerprint,
        "train_config": checkpoint.train_config,
        "network": checkpoint.network.config(),
    });
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub num_params: usize,
    pub mean_error: Option<f64>,
    pub median_error: Option<f64>,
    /// `ok`, or the error that stopped this cell.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("num_params,mean_error,median_error,status\n");
        for r in &self.rows {
            let status = r.status.replace([',', '\n'], ";");
            out.push_str(&format!("{},{},{},{status}\n", r.num_params, f(r.mean_error), f(r.median_error)));
        }
        out
    }

    /// Plot data: successful cells only.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("num_params,mean_error\n");
        for r in &self.rows {
            if let Some(m) = r.mean_error {
                out.push_str(&format!("{},{m}\n", r.num_params));
            }
        }
        out
    }
}

/// Trains and evaluates one network per entry of `p_values` with the same
/// seed. A failing cell is recorded and the sweep moves on.
pub fn parameter_sweep(
    train_samples: &[Sample],
    test_samples: &[Sample],
    p_values: &[usize],
    config: &TrainConfig,
    model: Arc<ShapeModel>,
) -> Result<SweepTable> {
    if let Some(&p) = p_values.iter().max() {
        if p > model.num_modes() {
            return Err(Error::Config(format!(
                "sweep asks for {p} parameters but the shape model has {} modes",
                model.num_modes()
            )));
        }
    }
    let rows = p_values
        .iter()
        .map(|&p| {
            let cfg = TrainConfig {
                num_shape_params: p,
                ..config.clone()
            };
            let cell = train(train_samples, None, &cfg, model.clone(), None)
                .and_then(|out| evaluate_checkpoint(&out.best, model.clone(), test_samples, config.exec));
            match cell {
                Ok(r) => SweepRow {
                    num_params: p,
                    mean_error: Some(r.mean),
                    median_error: Some(r.median),
                    status: "ok".into(),
                },
                Err(e) => {
                    log::warn!("sweep cell p = {p} failed: {e}");
                    SweepRow {
                        num_params: p,
                        mean_error: None,
                        median_error: None,
                        status: e.to_string(),
                    }
                }
            }
        })
        .collect();
    Ok(SweepTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareInfo {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu_model: Option<String>,
}

impl HardwareInfo {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        });
        HardwareInfo {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub batch_size: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub num_shape_params: usize,
    pub num_parameters: usize,
    /// Median wall time of one batch (ms).
    pub latency_ms: f64,
    /// Images per second at the median batch time.
    pub fps: f64,
    pub batch_times_ms: Vec<f64>,
    pub hardware: HardwareInfo,
}

/// Times the full forward pass (network and shape layer) on random inputs,
/// one batch at a time on the calling thread.
pub fn benchmark_fps(predictor: &Predictor, batch_size: usize, iterations: usize, warmup: usize, seed: u64) -> Result<BenchmarkReport> {
    let net: &Network<f32> = predictor.network();
    let d = net.input_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images: Vec<Image> = (0..batch_size.max(1))
        .map(|_| Image {
            width: d.w,
            height: d.h,
            channels: d.c,
            data: (0..d.len()).map(|_| rng.random::<f32>()).collect(),
        })
        .collect();
    let refs: Vec<&Image> = images.iter().collect();
    let run = || -> Result<f64> {
        let t = Instant::now();
        let out = predictor.predict(&refs, Exec::Sequential)?;
        std::hint::black_box(out);
        Ok(t.elapsed().as_secs_f64() * 1e3)
    };
    for _ in 0..warmup {
        run()?;
    }
    let times = (0..iterations.max(1)).map(|_| run()).collect::<Result<Vec<_>>>()?;
    let latency_ms = median(&times);
    Ok(BenchmarkReport {
        batch_size: refs.len(),
        iterations: times.len(),
        warmup,
        num_shape_params: predictor.layer().num_params(),
        num_parameters: net.num_parameters(),
        latency_ms,
        fps: refs.len() as f64 * 1e3 / latency_ms,
        batch_times_ms: times,
        hardware: HardwareInfo::detect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape_model::{Frame, Point};

    fn set(points: &[(f64, f64)]) -> LandmarkSet {
        LandmarkSet {
            points: points.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            frame: Frame::Crop,
        }
    }

    #[test]
    fn closed_form_offset() {
        let gt = set(&[(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)]);
        let pred = gt.map_points(Frame::Crop, |p| Point::new(p.x + 3.0, p.y + 4.0));
        assert_eq!(normalized_p2p_error(&pred, &gt).unwrap(), 0.05);
        assert_eq!(normalized_p2p_error(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_and_mismatched_inputs() {
        let dot = set(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]);
        assert!(matches!(normalized_p2p_error(&dot, &dot), Err(Error::DegenerateExtent(_))));
        let a = set(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let b = set(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert!(normalized_p2p_error(&a, &b).is_err());
        let mut c = a.clone();
        c.frame = Frame::Original;
        assert!(normalized_p2p_error(&c, &a).is_err());
    }

    #[test]
    fn statistics_recompute_from_errors() {
        let r = EvalResult::from_errors(vec!["a".into(), "b".into(), "c".into(), "d".into()], vec![0.4, 0.1, 0.2, 0.3], serde_json::Value::Null).unwrap();
        assert!((r.mean - 0.25).abs() < 1e-15);
        assert!((r.median - 0.25).abs() < 1e-15);
        assert!((r.std - 0.0125f64.sqrt()).abs() < 1e-15);
        let again: EvalResult = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(again, r);
        assert_eq!(r.histogram_csv(4).lines().count(), 5);
        assert!(EvalResult::from_errors(vec![], vec![], serde_json::Value::Null).is_err());
    }

    #[test]
    fn sweep_csv_marks_failed_cells() {
        let t = SweepTable {
            rows: vec![
                SweepRow {
                    num_params: 5,
                    mean_error: Some(0.1),
                    median_error: Some(0.09),
                    status: "ok".into(),
                },
                SweepRow {
                    num_params: 15,
                    mean_error: None,
                    median_error: None,
                    status: "diverged, epoch 3".into(),
                },
            ],
        };
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("15,,,diverged; epoch 3"));
        assert_eq!(t.curve_csv().lines().count(), 2);
    }
}
