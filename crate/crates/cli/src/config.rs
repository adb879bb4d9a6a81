//! Run configuration: one TOML file, overridden by command-line flags and
//! resolved before a command starts. The resolved form is written next to
//! every command's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use effort_core::diff::checkpoint::sha256_hex;
use effort_core::generator::{SamplingMode, DEFAULT_LAMBDA};
use effort_core::labels::ClassNames;
use effort_core::model::ModelConfig;
use effort_core::motion::{BarycenterMode, SplitFractions, SynthConfig};
use effort_core::trainer::TrainConfig;
use effort_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Clip file or directory. Ignored when `synthetic` is set.
    pub source: Option<PathBuf>,
    pub synthetic: bool,
    /// `csv`, `json` or `binary`; inferred from the extension when absent.
    pub format: Option<String>,
    /// Frame rate assumed for CSV clips.
    pub fps: f64,
    pub barycenter: BarycenterMode,
    pub seq_len: usize,
    pub stride: usize,
    pub class_names: Vec<String>,
    /// Parameters of the synthetic generator; `seq_len`, `stride`, `classes`
    /// and `seed` are taken from the run.
    pub synth: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: None,
            synthetic: false,
            format: None,
            fps: 35.0,
            barycenter: BarycenterMode::FixedXy,
            seq_len: 20,
            stride: 1,
            class_names: ClassNames::default_for(3).0,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    /// Label CSV merged into the run's store at ingest.
    pub import: Option<PathBuf>,
    /// Synthetic data only: fraction of windows labeled by a simulated
    /// annotator at ingest.
    pub simulate_fraction: Option<f64>,
    /// Back-to-back windows per simulated labeling session.
    pub simulate_run: usize,
    pub between: bool,
    /// Dilation radius in frames; 0 disables dilation.
    pub radius: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            import: None,
            simulate_fraction: None,
            simulate_run: 4,
            between: true,
            radius: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub label: Option<String>,
    pub count: usize,
    pub sampling: SamplingMode,
    /// Ridge added to each class covariance of the latent atlas.
    pub lambda: f64,
    /// `json`, `csv` or `binary`.
    pub format: String,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            label: None,
            count: 5,
            sampling: SamplingMode::Gaussian,
            lambda: DEFAULT_LAMBDA,
            format: "json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Generated sequences per class for danceability and recovery.
    pub samples_per_class: usize,
    /// Percentile of training windows that sets each danceability threshold.
    pub calibration_quantile: f64,
    pub box_margin: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples_per_class: 100,
            calibration_quantile: 0.99,
            box_margin: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub max_generate: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8787,
            max_generate: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Fit a per-coordinate standardization of encoder inputs on the
    /// training pools.
    pub standardize_inputs: bool,
    pub data: DataConfig,
    pub labels: LabelConfig,
    pub split: SplitFractions,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub generate: GenerateConfig,
    pub serve: ServeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/default"),
            standardize_inputs: true,
            data: DataConfig::default(),
            labels: LabelConfig::default(),
            split: SplitFractions::default(),
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            generate: GenerateConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Propagates the run-level seed, window grid and class count into the
    /// nested configurations and validates the result.
    pub fn resolve(mut self) -> Result<Self> {
        let k = self.data.class_names.len();
        if k < 2 {
            return Err(Error::Config("data.class_names needs at least two classes".into()));
        }
        if self.data.seq_len < 2 || self.data.stride == 0 {
            return Err(Error::Config("data.seq_len must be ≥ 2 and data.stride ≥ 1".into()));
        }
        if !(self.data.fps > 0.0 && self.data.fps.is_finite()) {
            return Err(Error::Config("data.fps must be positive".into()));
        }
        if let Some(f) = self.labels.simulate_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config("labels.simulate_fraction must be in (0, 1]".into()));
            }
        }
        if !(self.eval.calibration_quantile > 0.0 && self.eval.calibration_quantile <= 1.0) {
            return Err(Error::Config("eval.calibration_quantile must be in (0, 1]".into()));
        }
        let synth = &mut self.data.synth;
        synth.seed = self.seed;
        synth.seq_len = self.data.seq_len;
        synth.stride = self.data.stride;
        synth.classes = k;
        synth.fps = self.data.fps;
        self.train.seed = self.seed;
        self.model.seq_len = self.data.seq_len;
        self.model.classes = k;
        if self.data.synthetic {
            self.model.joints = self.data.synth.joints;
        }
        // fitted from data at train time, never taken from a file
        self.model.input_norm = None;
        self.train.validate()?;
        Ok(self)
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml()?.as_bytes()))
    }

    pub fn class_names(&self) -> ClassNames {
        ClassNames(self.data.class_names.clone())
    }

    pub fn paths(&self) -> RunPaths {
        RunPaths::new(&self.out)
    }

    /// Writes the resolved configuration as `configs/<command>.toml`.
    pub fn record(&self, command: &str) -> Result<PathBuf> {
        let dir = self.out.join("configs");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("{command}.toml"));
        fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
    pub dataset: PathBuf,
    pub labels: PathBuf,
    pub augmented: PathBuf,
    pub augment_report: PathBuf,
    pub split: PathBuf,
    pub checkpoints: PathBuf,
    pub final_checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub train_report: PathBuf,
    pub atlas: PathBuf,
    pub eval: PathBuf,
    pub generated: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path) -> Self {
        let checkpoints = root.join("checkpoints");
        Self {
            root: root.to_path_buf(),
            dataset: root.join("dataset"),
            labels: root.join("labels.csv"),
            augmented: root.join("labels_augmented.csv"),
            augment_report: root.join("augment_report.json"),
            split: root.join("split.json"),
            final_checkpoint: checkpoints.join("final.json"),
            checkpoints,
            train_log: root.join("train_log.jsonl"),
            train_report: root.join("train_report.json"),
            atlas: root.join("atlas.json"),
            eval: root.join("eval"),
            generated: root.join("generated"),
        }
    }
}
