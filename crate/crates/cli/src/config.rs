//! Run configuration: defaults, an optional TOML or JSON file, then flags.

use std::path::{Path, PathBuf};

use pdmnet_core::data_pipeline::{CropOptions, Split};
use pdmnet_core::shape_model::Alignment;
use pdmnet_core::synth_data::SynthSpec;
use pdmnet_core::train_engine::TrainConfig;
use pdmnet_core::Exec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the seed of every section when set.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub manifest: Option<PathBuf>,
    pub shape_model: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Image channels fed to the network (1 or 3).
    pub channels: usize,
    pub exec: Exec,
    pub synth: SynthSection,
    pub crop: CropOptions,
    pub shapes: ShapesSection,
    pub train: TrainConfig,
    pub evaluate: EvaluateSection,
    pub sweep: SweepSection,
    pub benchmark: BenchmarkSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out: PathBuf::from("pdmnet-run"),
            manifest: None,
            shape_model: None,
            checkpoint: None,
            channels: 1,
            exec: Exec::Parallel,
            synth: SynthSection::default(),
            crop: CropOptions::default(),
            shapes: ShapesSection::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateSection::default(),
            sweep: SweepSection::default(),
            benchmark: BenchmarkSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    #[serde(flatten)]
    pub spec: SynthSpec,
    /// Trailing share of the samples assigned to the test split.
    pub test_fraction: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            spec: SynthSpec::default(),
            test_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapesSection {
    /// `None` picks one from the corpus: generator anchors when a
    /// `generator.json` sits next to the manifest, the eye groups for 68
    /// landmarks, Procrustes otherwise.
    pub alignment: Option<Alignment>,
    /// `None` keeps `min(2L, N - 1)` modes.
    pub num_modes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSection {
    pub histogram_bins: usize,
    pub split: Split,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            histogram_bins: 20,
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub params: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            params: vec![5, 15, 25, 50, 75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSection {
    pub batch_size: usize,
    pub iterations: usize,
    pub warmup: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection {
            batch_size: 1,
            iterations: 50,
            warmup: 5,
        }
    }
}

impl RunConfig {
    /// Reads a config file; `.json` files are JSON, everything else TOML.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Pushes the global seed and execution policy into every section.
    pub fn propagate(&mut self) {
        if let Some(seed) = self.seed {
            self.synth.spec.seed = seed;
            self.train.seed = seed;
        }
        self.train.exec = self.exec;
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.out.join("manifest.txt"))
    }

    pub fn shape_model_path(&self) -> PathBuf {
        self.shape_model.clone().unwrap_or_else(|| self.out.join("shape_model.json"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("best.json"))
    }
}

/// Parses `auto`, `none`, `procrustes`, `ibug68` or `anchors:1,2/5,6`.
pub fn parse_alignment(text: &str) -> Result<Option<Alignment>, String> {
    let indices = |s: &str| -> Result<Vec<usize>, String> {
        s.split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|_| format!("bad landmark index {v:?}")))
            .collect()
    };
    match text {
        "auto" => Ok(None),
        "none" => Ok(Some(Alignment::None)),
        "procrustes" => Ok(Some(Alignment::procrustes())),
        "ibug68" => Ok(Some(Alignment::ibug68_eyes())),
        other => {
            let groups = other
                .strip_prefix("anchors:")
                .and_then(|g| g.split_once('/'))
                .ok_or_else(|| format!("unknown alignment {other:?} (expected auto, none, procrustes, ibug68 or anchors:a,b/c,d)"))?;
            Ok(Some(Alignment::Anchors {
                first: indices(groups.0)?,
                second: indices(groups.1)?,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_spellings() {
        assert_eq!(parse_alignment("auto").unwrap(), None);
        assert_eq!(parse_alignment("ibug68").unwrap(), Some(Alignment::ibug68_eyes()));
        assert_eq!(
            parse_alignment("anchors:0,1/4,5").unwrap(),
            Some(Alignment::Anchors {
                first: vec![0, 1],
                second: vec![4, 5]
            })
        );
        assert!(parse_alignment("anchors:0,1").is_err());
        assert!(parse_alignment("rigid").is_err());
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 4\n[train]\nepochs = 2\n[synth]\nnum_samples = 10\n").unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.synth.spec.num_samples, 10);
        assert_eq!(cfg.synth.test_fraction, 0.1);
        assert!(toml::from_str::<RunConfig>("sede = 4\n").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.shapes.alignment = Some(Alignment::procrustes());
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
