//! End-to-end training of the feature network through the fixed shape
//! layer, checkpoints and inference.

mod checkpoint;
mod loss;
mod optim;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use loss::{point_loss, point_loss_with_grad, LossKind};
pub use optim::{Adam, AdamConfig};

use crate::data_pipeline::{augment, AugmentConfig, Image, Sample};
use crate::error::{Error, Result};
use crate::eval_metrics::normalized_p2p_error;
use crate::exec::{derive_seed, Exec};
use crate::feature_net::{NetConfig, Network, ParamBuffers, COMPACT_CHANNELS, COMPACT_REPEATS, FULL_CHANNELS, FULL_REPEATS};
use crate::pca_layer::{ParamVector, PcaLayer};
use crate::shape_model::{fingerprint, LandmarkSet, ShapeModel};

/// Which channel/repeat plan the network uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetPlan {
    #[default]
    Full,
    Compact,
}

impl std::str::FromStr for NetPlan {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(NetPlan::Full),
            "compact" => Ok(NetPlan::Compact),
            other => Err(format!("unknown network plan {other:?} (expected full or compact)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub loss: LossKind,
    pub num_shape_params: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0: only the best one).
    pub checkpoint_every: usize,
    /// Share of the training samples held out for model selection when no
    /// validation set is given.
    pub validation_fraction: f64,
    pub augment: AugmentConfig,
    pub plan: NetPlan,
    pub separable_convs: bool,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            adam: AdamConfig::default(),
            batch_size: 16,
            loss: LossKind::L1,
            num_shape_params: 15,
            seed: 0,
            checkpoint_every: 0,
            validation_fraction: 0.1,
            augment: AugmentConfig::default(),
            plan: NetPlan::Full,
            separable_convs: false,
            exec: Exec::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.adam.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    /// Network plan for images with `in_channels` channels of side `input_size`.
    pub fn net_config(&self, in_channels: usize, input_size: usize) -> NetConfig {
        let (ch, rep): (&[usize], &[usize]) = match self.plan {
            NetPlan::Full => (&FULL_CHANNELS, &FULL_REPEATS),
            NetPlan::Compact => (&COMPACT_CHANNELS, &COMPACT_REPEATS),
        };
        let mut cfg = NetConfig::with_plan(in_channels, self.num_shape_params, input_size, ch, rep);
        cfg.separable_convs = self.separable_convs;
        cfg
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub normalized_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best epoch by validation error.
    pub best: Checkpoint,
    /// Weights after the last epoch.
    pub last: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Network plus shape layer: image in, crop-frame landmarks out.
#[derive(Debug, Clone)]
pub struct Predictor {
    network: Network<f32>,
    layer: PcaLayer,
}

impl Predictor {
    pub fn new(network: Network<f32>, model: Arc<ShapeModel>) -> Result<Self> {
        let layer = PcaLayer::new(model, network.config().num_shape_params)?;
        Ok(Predictor { network, layer })
    }

    /// Checks the checkpoint was trained against `model`.
    pub fn from_checkpoint(checkpoint: &Checkpoint, model: Arc<ShapeModel>) -> Result<Self> {
        let fp = fingerprint(&model);
        if fp != checkpoint.shape_model_fingerprint {
            return Err(Error::ModelMismatch {
                checkpoint: checkpoint.shape_model_fingerprint.clone(),
                model: fp,
            });
        }
        Self::new(checkpoint.network.clone(), model)
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn layer(&self) -> &PcaLayer {
        &self.layer
    }

    pub fn predict_one(&self, image: &Image) -> Result<(LandmarkSet, ParamVector)> {
        let raw = self.network.forward(&image.data)?;
        let params = self.network.to_params(&raw)?;
        Ok((self.layer.forward_one(&params)?, params))
    }

    pub fn predict(&self, images: &[&Image], exec: Exec) -> Result<Vec<(LandmarkSet, ParamVector)>> {
        exec.map(images.len(), |i| self.predict_one(images[i])).into_iter().collect()
    }
}

/// Landmarks (crop frame) and raw parameters for each image.
pub fn predict(checkpoint: &Checkpoint, model: Arc<ShapeModel>, images: &[&Image], exec: Exec) -> Result<Vec<(LandmarkSet, ParamVector)>> {
    Predictor::from_checkpoint(checkpoint, model)?.predict(images, exec)
}

struct SampleGrad {
    loss_sum: f64,
    error: f64,
    grads: ParamBuffers<f32>,
}

fn sample_gradient(net: &Network<f32>, layer: &PcaLayer, sample: &Sample, kind: LossKind, scale: f64) -> Result<SampleGrad> {
    let trace = net.forward_trace(&sample.image.data)?;
    let params = net.to_params(trace.output())?;
    let pred = layer.forward_one(&params)?;
    let gt = &sample.landmarks;
    let d_pred = loss::loss_sum_grad(&pred, gt, kind, scale);
    let d_params = layer.backward_one(&params, &d_pred)?;
    let d_raw: Vec<f32> = d_params.to_raw().into_iter().map(|v| v as f32).collect();
    let mut grads = net.zeros_like_params();
    net.backward(&trace, &d_raw, &mut grads, false)?;
    Ok(SampleGrad {
        loss_sum: loss::loss_sum(&pred, gt, kind),
        error: normalized_p2p_error(&pred, gt)?,
        grads,
    })
}

/// Mean loss and mean normalized error of `net` on `samples`.
fn score(predictor: &Predictor, samples: &[Sample], kind: LossKind, exec: Exec) -> Result<(f64, f64)> {
    let per: Vec<(f64, f64)> = exec
        .map(samples.len(), |i| {
            let (pred, _) = predictor.predict_one(&samples[i].image)?;
            let gt = &samples[i].landmarks;
            Ok((loss::loss_sum(&pred, gt, kind), normalized_p2p_error(&pred, gt)?))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let coords: usize = samples.iter().map(|s| 2 * s.landmarks.len()).sum();
    let loss = per.iter().map(|p| p.0).sum::<f64>() / coords.max(1) as f64;
    let err = per.iter().map(|p| p.1).sum::<f64>() / per.len().max(1) as f64;
    Ok((loss, err))
}

fn check_samples(samples: &[Sample], model: &ShapeModel) -> Result<(usize, usize)> {
    let Some(first) = samples.first() else {
        return Err(Error::EmptyDataset("no training samples".into()));
    };
    let (c, w, h) = (first.image.channels, first.image.width, first.image.height);
    if w != h {
        return Err(Error::Shape(format!("training images must be square, got {w}x{h}")));
    }
    for s in samples {
        if (s.image.channels, s.image.width, s.image.height) != (c, w, h) {
            return Err(Error::Shape(format!(
                "sample {} is {}x{}x{}, expected {c}x{w}x{h}",
                s.id, s.image.channels, s.image.width, s.image.height
            )));
        }
        if s.landmarks.len() != model.num_landmarks {
            return Err(Error::Dimension {
                context: "landmarks per training sample",
                expected: model.num_landmarks,
                got: s.landmarks.len(),
            });
        }
    }
    Ok((c, w))
}

/// Seeded shuffle split of `samples` into training and validation parts.
/// Falls back to validating on the training set when the held-out part
/// would be empty.
pub fn split_validation(samples: &[Sample], fraction: f64, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let n = samples.len();
    let n_val = ((n as f64) * fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return (samples.to_vec(), samples.to_vec());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX)));
    let (val, train) = idx.split_at(n_val);
    let mut train = train.to_vec();
    let mut val = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (
        train.into_iter().map(|i| samples[i].clone()).collect(),
        val.into_iter().map(|i| samples[i].clone()).collect(),
    )
}

/// Trains a fresh network on `samples` against the fixed `model`.
///
/// With `out_dir`, the per-epoch log goes to `train_log.jsonl` and periodic
/// checkpoints to `checkpoint_epochNNNN.json`; the caller saves the
/// returned best checkpoint.
pub fn train(
    samples: &[Sample],
    validation: Option<&[Sample]>,
    config: &TrainConfig,
    model: Arc<ShapeModel>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let (channels, size) = check_samples(samples, &model)?;
    let (train_set, val_set) = match validation {
        Some(v) => {
            check_samples(v, &model)?;
            (samples.to_vec(), v.to_vec())
        }
        None => split_validation(samples, config.validation_fraction, config.seed),
    };
    let layer = PcaLayer::new(model.clone(), config.num_shape_params)?;
    let model_fp = fingerprint(&model);
    let mut net = Network::<f32>::build(&config.net_config(channels, size), config.seed)?;
    let mut adam = Adam::new(config.adam, &net);
    let exec = config.exec;

    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("train_log.jsonl");
            Some((std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?, path))
        }
        None => None,
    };
    let mut history = Vec::new();
    let mut record = |r: EpochRecord, history: &mut Vec<EpochRecord>| -> Result<()> {
        if let Some((file, path)) = log.as_mut() {
            let line = serde_json::to_string(&r).expect("record serializes");
            writeln!(file, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
        }
        history.push(r);
        Ok(())
    };

    let checkpoint = |net: &Network<f32>, epoch: usize, val: Option<f64>| Checkpoint {
        network: net.clone(),
        train_config: config.clone(),
        shape_model_fingerprint: model_fp.clone(),
        epoch,
        validation_error: val,
    };
    let mut best = checkpoint(&net, 0, None);
    let mut last_finite = None;
    let coords_per_sample = 2 * model.num_landmarks;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        let epoch_seed = derive_seed(config.seed, epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let (mut loss_total, mut err_total) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / (batch.len() * coords_per_sample) as f64;
            let parts = exec.map(batch.len(), |k| {
                let i = batch[k];
                let base = &train_set[i];
                let aug_seed = derive_seed(epoch_seed, i as u64);
                let sample = match augment(base, &config.augment, aug_seed) {
                    Ok(s) => s,
                    Err(Error::AugmentRejected(_)) => base.clone(),
                    Err(e) => return Err(e),
                };
                sample_gradient(&net, &layer, &sample, config.loss, scale)
            });
            let mut grads = net.zeros_like_params();
            let mut batch_loss = 0.0;
            for part in parts {
                let part = part?;
                grads.add_assign(&part.grads);
                batch_loss += part.loss_sum;
                err_total += part.error;
            }
            let finite_grads = grads.tensors.iter().flatten().all(|g| g.is_finite());
            if !batch_loss.is_finite() || !finite_grads {
                return Err(Error::Divergence { epoch, last_finite });
            }
            loss_total += batch_loss;
            adam.step(&mut net, &grads);
        }
        let n = train_set.len() as f64;
        let train_loss = loss_total / (n * coords_per_sample as f64);
        record(
            EpochRecord {
                epoch,
                split: "train".into(),
                loss: train_loss,
                normalized_error: err_total / n,
            },
            &mut history,
        )?;

        let predictor = Predictor {
            network: net,
            layer: layer.clone(),
        };
        let (val_loss, val_err) = score(&predictor, &val_set, config.loss, exec)?;
        net = predictor.network;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, last_finite });
        }
        last_finite = Some(epoch);
        record(
            EpochRecord {
                epoch,
                split: "validation".into(),
                loss: val_loss,
                normalized_error: val_err,
            },
            &mut history,
        )?;
        if best.validation_error.is_none_or(|b| val_err < b) {
            best = checkpoint(&net, epoch, Some(val_err));
        }
        if let (Some(dir), true) = (out_dir, config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
            checkpoint(&net, epoch, Some(val_err)).save(&dir.join(format!("checkpoint_epoch{epoch:04}.json")))?;
        }
        log::debug!("epoch {epoch}: train loss {train_loss:.4}, validation error {val_err:.4}");
    }
    let last = checkpoint(&net, config.epochs, history.last().map(|r| r.normalized_error));
    Ok(TrainOutcome { best, last, history })
}
