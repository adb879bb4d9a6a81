use serde::{Deserialize, Serialize};

use crate::diff::Mat;
use crate::error::{Error, Result};

/// Where the one-hot label enters the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelInjection {
    /// Concatenated to the final hidden state before the Gaussian heads.
    #[default]
    Head,
    /// Concatenated to every input frame of the recurrent stack.
    PerFrame,
}

/// Fixed per-coordinate standardization of pose frames.
///
/// Encoder and classifier inputs are mapped to `(x − mean) / scale`, and
/// decoder outputs back to `mean + scale · out`, so the likelihood and all
/// metrics stay in data units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    /// One entry per frame coordinate (`3J`).
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputNorm {
    /// Smallest scale kept when fitting, so constant coordinates stay finite.
    pub const MIN_SCALE: f64 = 1e-3;

    /// Fits mean and standard deviation of every frame coordinate over the
    /// rows of a `B × (T·d)` batch.
    pub fn fit(x: &Mat, frame_dim: usize) -> Result<Self> {
        if frame_dim == 0 || x.ncols() % frame_dim != 0 || x.nrows() == 0 {
            return Err(Error::Precondition(format!(
                "cannot fit a {frame_dim}-wide normalization to a {}×{} batch",
                x.nrows(),
                x.ncols()
            )));
        }
        let frames = x.ncols() / frame_dim;
        let n = (x.nrows() * frames) as f64;
        let mut mean = vec![0.0; frame_dim];
        let mut sq = vec![0.0; frame_dim];
        for row in x.rows() {
            for (i, v) in row.iter().enumerate() {
                mean[i % frame_dim] += v;
                sq[i % frame_dim] += v * v;
            }
        }
        let scale = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= n;
                (s / n - *m * *m).max(0.0).sqrt().max(Self::MIN_SCALE)
            })
            .collect();
        Ok(Self { mean, scale })
    }

    /// Standardizes a flattened batch in place of a copy.
    pub fn apply(&self, x: &Mat) -> Mat {
        let d = self.mean.len();
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[i % d]) / self.scale[i % d];
            }
        }
        out
    }

    /// `mean` and `scale` tiled over `frames` frames, as `1 × (frames·d)` rows.
    pub fn tiled(&self, frames: usize) -> (Mat, Mat) {
        let tile = |v: &[f64]| {
            Mat::from_shape_fn((1, frames * v.len()), |(_, i)| v[i % v.len()])
        };
        (tile(&self.mean), tile(&self.scale))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Frames per sequence (`T`).
    pub seq_len: usize,
    /// Joints per pose (`J`).
    pub joints: usize,
    /// Label classes (`k`).
    pub classes: usize,
    pub latent_dim: usize,
    pub encoder_layers: usize,
    pub encoder_width: usize,
    pub decoder_layers: usize,
    pub decoder_width: usize,
    /// Width of the dense map from `(z, y)` to the decoder's per-step input.
    pub decoder_input_width: usize,
    pub classifier_hidden: Vec<usize>,
    /// Fixed variance of the Gaussian decoder likelihood.
    pub output_variance: f64,
    pub label_injection: LabelInjection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_norm: Option<InputNorm>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small configuration for tests and desk-scale experiments.
    pub fn desk() -> Self {
        Self {
            seq_len: 20,
            joints: 5,
            classes: 3,
            latent_dim: 8,
            encoder_layers: 1,
            encoder_width: 32,
            decoder_layers: 1,
            decoder_width: 32,
            decoder_input_width: 32,
            classifier_hidden: vec![32, 32],
            output_variance: 1.0,
            label_injection: LabelInjection::Head,
            input_norm: None,
        }
    }

    /// Full-size architecture: 5 LSTM layers of 100 units, 256-d latent,
    /// two 100-unit ReLU classifier layers, 40 × 53 joint sequences.
    pub fn full() -> Self {
        Self {
            seq_len: 40,
            joints: 53,
            classes: 3,
            latent_dim: 256,
            encoder_layers: 5,
            encoder_width: 100,
            decoder_layers: 5,
            decoder_width: 100,
            decoder_input_width: 100,
            classifier_hidden: vec![100, 100],
            output_variance: 1.0,
            label_injection: LabelInjection::Head,
            input_norm: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        3 * self.joints
    }

    /// Flattened sequence length `T · 3J`.
    pub fn sequence_dim(&self) -> usize {
        self.seq_len * self.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("seq_len", self.seq_len),
            ("joints", self.joints),
            ("latent_dim", self.latent_dim),
            ("encoder_layers", self.encoder_layers),
            ("encoder_width", self.encoder_width),
            ("decoder_layers", self.decoder_layers),
            ("decoder_width", self.decoder_width),
            ("decoder_input_width", self.decoder_input_width),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.classes < 2 {
            return Err(Error::Config("classes must be at least 2".into()));
        }
        if self.classifier_hidden.contains(&0) {
            return Err(Error::Config("classifier widths must be positive".into()));
        }
        if !(self.output_variance > 0.0 && self.output_variance.is_finite()) {
            return Err(Error::Config("output_variance must be positive".into()));
        }
        if let Some(norm) = &self.input_norm {
            let d = self.input_dim();
            if norm.mean.len() != d || norm.scale.len() != d {
                return Err(Error::Config(format!("input_norm needs {d} entries per field")));
            }
            if norm.mean.iter().any(|v| !v.is_finite()) || norm.scale.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config("input_norm must be finite with positive scales".into()));
            }
        }
        Ok(())
    }
}
