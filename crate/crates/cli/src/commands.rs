//! Subcommand bodies. Each one writes into a staging directory that is
//! published into the run directory only when the whole command succeeds.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use pdmnet_core::data_pipeline::{
    crop_and_resize, landmarks_to_original, load_image, load_manifest, load_samples, write_csv_landmarks, CropOptions, CropRecord,
    CsvSchema, Image, Sample, Split,
};
use pdmnet_core::eval_metrics::{benchmark_fps, evaluate_checkpoint, parameter_sweep};
use pdmnet_core::feature_net::Network;
use pdmnet_core::shape_model::{build_shape_model, fingerprint, load_model, save_model, Alignment, Frame, LandmarkSet, Point, ShapeModel};
use pdmnet_core::synth_data::generate_dataset;
use pdmnet_core::train_engine::{train, Checkpoint, Predictor};
use pdmnet_core::{write_atomic, Error};
use serde::Serialize;

use crate::config::RunConfig;
use crate::staging::Staging;
use crate::{CliError, Command};

pub fn run(command: &Command, cfg: &RunConfig, config_file: Option<&Path>) -> Result<(), CliError> {
    let staging = Staging::new(&cfg.out).map_err(|e| io_error(&cfg.out, e))?;
    let dir = staging.path().to_path_buf();
    let snapshot = serde_json::json!({
        "subcommand": command.name(),
        "config_file": config_file,
        "seed": cfg.seed(),
        "out": cfg.out,
        "config": cfg,
    });
    write_json(&dir.join(format!("{}.run.json", command.name())), &snapshot)?;
    match command {
        Command::Synth(_) => synth(cfg, &dir)?,
        Command::BuildShapes(_) => build_shapes(cfg, &dir)?,
        Command::Train(_) => train_cmd(cfg, &dir)?,
        Command::Evaluate(_) => evaluate_cmd(cfg, &dir)?,
        Command::Predict(a) => predict_cmd(cfg, &a.images, &dir)?,
        Command::Sweep(_) => sweep_cmd(cfg, &dir)?,
        Command::Benchmark(_) => benchmark_cmd(cfg, &dir)?,
    }
    for path in staging.publish().map_err(|e| io_error(&cfg.out, e))? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json value") + "\n";
    Ok(write_atomic(path, text.as_bytes())?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn load_split(cfg: &RunConfig, split: Split, crop_size: usize) -> Result<Vec<Sample>, CliError> {
    let path = cfg.manifest_path();
    let manifest = load_manifest(&path)?;
    let opts = CropOptions {
        out_size: crop_size,
        ..cfg.crop.clone()
    };
    let samples = load_samples(&manifest, split, cfg.channels, &opts, cfg.exec)?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no {} entries", path.display(), split.as_str())).into());
    }
    Ok(samples)
}

fn load_shape_model(cfg: &RunConfig) -> Result<Arc<ShapeModel>, CliError> {
    Ok(Arc::new(load_model(&cfg.shape_model_path())?))
}

fn load_predictor(cfg: &RunConfig, model: Arc<ShapeModel>) -> Result<Predictor, CliError> {
    let checkpoint = Checkpoint::load(&cfg.checkpoint_path())?;
    Ok(Predictor::from_checkpoint(&checkpoint, model)?)
}

fn synth(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let fraction = cfg.synth.test_fraction;
    if !(0.0..1.0).contains(&fraction) {
        return Err(CliError::Usage(format!("test fraction must lie in [0, 1), got {fraction}")));
    }
    let dataset = generate_dataset(&cfg.synth.spec, cfg.exec)?;
    dataset.write(dir, fraction)?;
    save_model(&dataset.true_model(), &dir.join("true_shape_model.json"))?;
    Ok(())
}

/// Alignment used when none is configured.
fn auto_alignment(manifest: &Path, num_landmarks: usize) -> Alignment {
    let generator = manifest.parent().unwrap_or(Path::new(".")).join("generator.json");
    let anchors = std::fs::read_to_string(&generator)
        .ok()
        .and_then(|text| serde_json::from_str::<serde_json::Value>(&text).ok())
        .and_then(|v| serde_json::from_value::<Alignment>(v.get("anchors")?.clone()).ok());
    match anchors {
        Some(a) => a,
        None if num_landmarks == 68 => Alignment::ibug68_eyes(),
        None => Alignment::procrustes(),
    }
}

fn build_shapes(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let crop_size = cfg.crop.out_size;
    let samples = load_split(cfg, Split::Train, crop_size)?;
    let corpus: Vec<LandmarkSet> = samples.into_iter().map(|s| s.landmarks).collect();
    let l = corpus[0].len();
    let alignment = match &cfg.shapes.alignment {
        Some(a) => a.clone(),
        None => auto_alignment(&cfg.manifest_path(), l),
    };
    let num_modes = cfg.shapes.num_modes.unwrap_or_else(|| (2 * l).min(corpus.len().saturating_sub(1)));
    log::info!("fitting {num_modes} modes to {} shapes with {alignment:?}", corpus.len());
    let model = build_shape_model(&corpus, alignment, num_modes, crop_size as u32)?;
    save_model(&model, &dir.join("shape_model.json"))?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    best_epoch: usize,
    best_validation_error: Option<f64>,
    last_epoch: usize,
    num_train_samples: usize,
    num_shape_params: usize,
    shape_model_fingerprint: &'a str,
}

fn train_cmd(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let model = load_shape_model(cfg)?;
    let samples = load_split(cfg, Split::Train, model.crop_size as usize)?;
    log::info!("training on {} samples for {} epochs", samples.len(), cfg.train.epochs);
    let outcome = train(&samples, None, &cfg.train, model.clone(), Some(dir))?;
    outcome.best.save(&dir.join("best.json"))?;
    outcome.last.save(&dir.join("last.json"))?;
    let summary = TrainSummary {
        best_epoch: outcome.best.epoch,
        best_validation_error: outcome.best.validation_error,
        last_epoch: outcome.last.epoch,
        num_train_samples: samples.len(),
        num_shape_params: cfg.train.num_shape_params,
        shape_model_fingerprint: &fingerprint(&model),
    };
    write_json(&dir.join("train_summary.json"), &summary)
}

fn evaluate_cmd(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let model = load_shape_model(cfg)?;
    let checkpoint = Checkpoint::load(&cfg.checkpoint_path())?;
    Predictor::from_checkpoint(&checkpoint, model.clone())?;
    let samples = load_split(cfg, cfg.evaluate.split, model.crop_size as usize)?;
    let result = evaluate_checkpoint(&checkpoint, model, &samples, cfg.exec)?;
    log::info!("mean error {:.5}, median {:.5} over {} images", result.mean, result.median, result.num_images);
    write_text(&dir.join("eval.json"), &result.to_json())?;
    write_text(&dir.join("per_image.csv"), &result.per_image_csv())?;
    write_text(&dir.join("error_histogram.csv"), &result.histogram_csv(cfg.evaluate.histogram_bins))
}

/// Loads an unannotated image and resamples all of it into the crop.
fn whole_image(path: &Path, channels: usize, crop_size: usize) -> Result<(String, Image, CropRecord), CliError> {
    let image = load_image(path, channels)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let (w, h) = (image.width as f64, image.height as f64);
    let corners = LandmarkSet::new(vec![Point::new(0.0, 0.0), Point::new(w, h), Point::new(0.0, h)], Frame::Original)?;
    let opts = CropOptions {
        margin: 0.0,
        out_size: crop_size,
        allow_outside: true,
    };
    let (crop_image, _, crop) = crop_and_resize(&id, &image, &corners, &opts)?;
    Ok((id, crop_image, crop))
}

fn predict_cmd(cfg: &RunConfig, images: &[PathBuf], dir: &Path) -> Result<(), CliError> {
    let model = load_shape_model(cfg)?;
    let predictor = load_predictor(cfg, model.clone())?;
    let crop_size = model.crop_size as usize;
    let inputs: Vec<(String, Image, CropRecord)> = if images.is_empty() {
        load_split(cfg, cfg.evaluate.split, crop_size)?.into_iter().map(|s| (s.id, s.image, s.crop)).collect()
    } else {
        images.iter().map(|p| whole_image(p, cfg.channels, crop_size)).collect::<Result<_, _>>()?
    };
    let refs: Vec<&Image> = inputs.iter().map(|(_, img, _)| img).collect();
    let predictions = predictor.predict(&refs, cfg.exec)?;

    let mut crop_rows = Vec::with_capacity(inputs.len());
    let mut original_rows = Vec::with_capacity(inputs.len());
    let p = predictor.layer().num_params();
    let mut params = String::from("id");
    for i in 0..p {
        params.push_str(&format!(",w{i}"));
    }
    params.push_str(",scale,theta,tx,ty\n");
    for ((id, _, crop), (landmarks, pv)) in inputs.iter().zip(&predictions) {
        original_rows.push((id.clone(), landmarks_to_original(crop, landmarks)));
        crop_rows.push((id.clone(), landmarks.clone()));
        let values: Vec<String> = pv.to_raw().iter().map(|v| v.to_string()).collect();
        params.push_str(&format!("{id},{}\n", values.join(",")));
    }
    let schema = CsvSchema::default();
    write_text(&dir.join("predictions.csv"), &write_csv_landmarks(&crop_rows, &schema)?)?;
    write_text(&dir.join("predictions_original.csv"), &write_csv_landmarks(&original_rows, &schema)?)?;
    write_text(&dir.join("parameters.csv"), &params)
}

fn sweep_cmd(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    if cfg.sweep.params.is_empty() {
        return Err(CliError::Usage("the sweep needs at least one parameter count".into()));
    }
    let model = load_shape_model(cfg)?;
    let crop_size = model.crop_size as usize;
    let train_set = load_split(cfg, Split::Train, crop_size)?;
    let test_set = load_split(cfg, Split::Test, crop_size)?;
    let table = parameter_sweep(&train_set, &test_set, &cfg.sweep.params, &cfg.train, model)?;
    write_text(&dir.join("sweep.csv"), &table.to_csv())?;
    write_text(&dir.join("sweep_curve.csv"), &table.curve_csv())
}

fn benchmark_cmd(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let model = load_shape_model(cfg)?;
    let predictor = match &cfg.checkpoint {
        Some(_) => load_predictor(cfg, model)?,
        None => {
            let net_config = cfg.train.net_config(cfg.channels, model.crop_size as usize);
            Predictor::new(Network::<f32>::build(&net_config, cfg.seed())?, model)?
        }
    };
    let b = &cfg.benchmark;
    let report = benchmark_fps(&predictor, b.batch_size, b.iterations, b.warmup, cfg.seed())?;
    log::info!("{:.1} images/s at batch size {} ({:.2} ms per batch)", report.fps, report.batch_size, report.latency_ms);
    write_json(&dir.join("benchmark.json"), &report)
}
