//! Conditional recurrent VAE.
//!
//! - Encoder: stacked LSTM over the `T` frames; the last hidden state,
//!   concatenated with the one-hot label, feeds dense heads for the posterior
//!   mean and (clamped) log-variance.
//! - Classifier: dense ReLU stack over the flattened sequence, softmax over
//!   `k` logits.
//! - Decoder: a dense map of `(z, y)` gives `h_dec`, which is fed as the
//!   input at each of the `T` steps of a stacked LSTM; a per-step dense head
//!   emits `3J` coordinates.
//!
//! Batches are `B × (T·3J)` matrices, one flattened sequence per row.

mod config;

pub use config::{InputNorm, LabelInjection, ModelConfig};

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::diff::{Graph, Mat, ParamSet, RngStream, Var};
use crate::error::{Error, Result};
use crate::labels::EffortLabel;
use crate::motion::Sequence;

/// Log-variance outputs are clamped to this range.
pub const LOG_VARIANCE_BOUNDS: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl GaussianPosterior {
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_variance: vec![0.0; dim],
        }
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_variance.iter().map(|lv| lv.exp()).collect()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPosterior {
    pub probabilities: Vec<f64>,
}

impl ClassPosterior {
    pub fn argmax(&self) -> usize {
        self.probabilities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// `−Σ q log q`, in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probabilities
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSample {
    pub z: Vec<f64>,
    pub posterior: GaussianPosterior,
    pub noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub sequence: Sequence,
    pub posterior: GaussianPosterior,
    pub sample: LatentSample,
}

/// `z = μ + exp(½ log σ²) ⊙ ε`, `ε ~ N(0, I)` from `rng`.
pub fn reparameterize(posterior: &GaussianPosterior, rng: &mut RngStream) -> LatentSample {
    let noise = rng.normals(posterior.dim());
    reparameterize_with(posterior, noise)
}

pub fn reparameterize_with(posterior: &GaussianPosterior, noise: Vec<f64>) -> LatentSample {
    assert_eq!(noise.len(), posterior.dim());
    let z = posterior
        .mean
        .iter()
        .zip(&posterior.log_variance)
        .zip(&noise)
        .map(|((m, lv), e)| {
            let sd = (0.5 * lv).exp();
            if sd == 0.0 {
                *m
            } else {
                m + sd * e
            }
        })
        .collect();
    LatentSample {
        z,
        posterior: posterior.clone(),
        noise,
    }
}

/// `B × k` one-hot matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Mat {
    let mut m = Array2::zeros((labels.len(), classes));
    for (i, &y) in labels.iter().enumerate() {
        m[[i, y]] = 1.0;
    }
    m
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Lstm {
    w: usize,
    b: usize,
    width: usize,
}

/// Parameter layout of a configuration. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    encoder: Vec<Lstm>,
    mean_head: Dense,
    logvar_head: Dense,
    classifier: Vec<Dense>,
    decoder_input: Dense,
    decoder: Vec<Lstm>,
    output_head: Dense,
    shapes: Vec<(String, (usize, usize))>,
}

/// Batch encoder output.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorVars {
    pub mean: Var,
    pub log_variance: Var,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut shapes: Vec<(String, (usize, usize))> = Vec::new();
        let mut add = |name: String, shape: (usize, usize)| {
            shapes.push((name, shape));
            shapes.len() - 1
        };
        fn dense(add: &mut impl FnMut(String, (usize, usize)) -> usize, prefix: &str, i: usize, o: usize) -> Dense {
            Dense {
                w: add(format!("{prefix}.w"), (i, o)),
                b: add(format!("{prefix}.b"), (1, o)),
            }
        }
        let k = config.classes;

        let mut encoder = Vec::new();
        let frame_in = config.input_dim()
            + if config.label_injection == LabelInjection::PerFrame { k } else { 0 };
        let mut width_in = frame_in;
        for l in 0..config.encoder_layers {
            let h = config.encoder_width;
            encoder.push(Lstm {
                w: add(format!("enc.lstm{l}.w"), (width_in + h, 4 * h)),
                b: add(format!("enc.lstm{l}.b"), (1, 4 * h)),
                width: h,
            });
            width_in = h;
        }
        let head_in = config.encoder_width + k;
        let mean_head = dense(&mut add, "enc.mean", head_in, config.latent_dim);
        let logvar_head = dense(&mut add, "enc.logvar", head_in, config.latent_dim);

        let mut classifier = Vec::new();
        let mut cin = config.sequence_dim();
        for (i, &h) in config.classifier_hidden.iter().enumerate() {
            classifier.push(dense(&mut add, &format!("cls.hidden{i}"), cin, h));
            cin = h;
        }
        classifier.push(dense(&mut add, "cls.out", cin, k));

        let decoder_input = dense(&mut add, "dec.input", config.latent_dim + k, config.decoder_input_width);
        let mut decoder = Vec::new();
        let mut width_in = config.decoder_input_width;
        for l in 0..config.decoder_layers {
            let h = config.decoder_width;
            decoder.push(Lstm {
                w: add(format!("dec.lstm{l}.w"), (width_in + h, 4 * h)),
                b: add(format!("dec.lstm{l}.b"), (1, 4 * h)),
                width: h,
            });
            width_in = h;
        }
        let output_head = dense(&mut add, "dec.out", config.decoder_width, config.input_dim());

        Ok(Self {
            config,
            encoder,
            mean_head,
            logvar_head,
            classifier,
            decoder_input,
            decoder,
            output_head,
            shapes,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.shapes.len()
    }

    /// All-zero parameters.
    pub fn zero_params(&self) -> ParamSet {
        let mut ps = ParamSet::new();
        for (name, shape) in &self.shapes {
            ps.push(name.clone(), Array2::zeros(*shape));
        }
        ps
    }

    /// Uniform fan-in initialization `U(−1/√fan_in, 1/√fan_in)` for weights,
    /// zero biases except LSTM forget gates at 1.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = RngStream::new(seed);
        let mut ps = self.zero_params();
        for i in 0..ps.len() {
            let t = ps.tensor_mut(i);
            if t.name().ends_with(".w") {
                let bound = 1.0 / (t.shape().0 as f64).sqrt();
                for v in t.value_mut().iter_mut() {
                    *v = bound * (2.0 * rng.uniform() - 1.0);
                }
            }
        }
        for lstm in self.encoder.iter().chain(&self.decoder) {
            let h = lstm.width;
            ps.tensor_mut(lstm.b)
                .value_mut()
                .slice_mut(s![.., h..2 * h])
                .fill(1.0);
        }
        ps
    }

    /// Checks that `params` has this model's layout.
    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        if params.len() != self.shapes.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                self.shapes.len(),
                params.len()
            )));
        }
        for (t, (name, shape)) in params.iter().zip(&self.shapes) {
            if t.name() != name || t.shape() != *shape {
                return Err(Error::Config(format!(
                    "parameter {} {:?} does not match {name} {shape:?}",
                    t.name(),
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    fn check_batch(&self, x: &Mat) -> Result<()> {
        if x.ncols() != self.config.sequence_dim() {
            return Err(Error::Config(format!(
                "sequence batch has {} columns, model expects {} (T={}, J={})",
                x.ncols(),
                self.config.sequence_dim(),
                self.config.seq_len,
                self.config.joints
            )));
        }
        Ok(())
    }

    fn check_sequence(&self, seq: &Sequence) -> Result<()> {
        if seq.len() != self.config.seq_len || seq.joint_count() != self.config.joints {
            return Err(Error::Config(format!(
                "sequence is {} frames × {} joints, model expects {} × {}",
                seq.len(),
                seq.joint_count(),
                self.config.seq_len,
                self.config.joints
            )));
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.config.classes {
            return Err(Error::UnknownClass(label));
        }
        Ok(())
    }

    /// Runs a stacked LSTM over `inputs`. Returns the top layer's hidden
    /// state at every step, or only at the last step unless `all_steps`.
    fn run_stack(g: &mut Graph, p: &[Var], stack: &[Lstm], inputs: Vec<Var>, batch: usize, all_steps: bool) -> Vec<Var> {
        let mut seq = inputs;
        for (l, cell) in stack.iter().enumerate() {
            let top = l + 1 == stack.len();
            let h = cell.width;
            let mut state = g.constant(Array2::zeros((batch, 2 * h)));
            let mut out = Vec::with_capacity(seq.len());
            let n = seq.len();
            for (t, x) in seq.into_iter().enumerate() {
                state = g.lstm_cell(x, state, p[cell.w], p[cell.b]);
                if !top || all_steps || t + 1 == n {
                    out.push(g.slice_cols(state, 0, h));
                }
            }
            seq = out;
        }
        seq
    }

    fn standardized<'a>(&self, x: &'a Mat) -> std::borrow::Cow<'a, Mat> {
        match &self.config.input_norm {
            Some(n) => std::borrow::Cow::Owned(n.apply(x)),
            None => std::borrow::Cow::Borrowed(x),
        }
    }

    fn frame_inputs(&self, g: &mut Graph, x: &Mat, y: Option<&Mat>) -> Vec<Var> {
        let x = self.standardized(x);
        let d = self.config.input_dim();
        (0..self.config.seq_len)
            .map(|t| {
                let frame = x.slice(s![.., t * d..(t + 1) * d]).to_owned();
                match y {
                    Some(y) => {
                        let both = ndarray::concatenate(ndarray::Axis(1), &[frame.view(), y.view()])
                            .expect("frame and label rows");
                        g.constant(both)
                    }
                    None => g.constant(frame),
                }
            })
            .collect()
    }

    /// Final hidden state `h_T` of the encoder stack (`B × width`). `y` is
    /// used only under per-frame label injection.
    pub fn encoder_state(&self, g: &mut Graph, p: &[Var], x: &Mat, y: &Mat) -> Var {
        let inject = (self.config.label_injection == LabelInjection::PerFrame).then_some(y);
        let inputs = self.frame_inputs(g, x, inject);
        let states = Self::run_stack(g, p, &self.encoder, inputs, x.nrows(), false);
        *states.last().expect("seq_len ≥ 1")
    }

    /// Gaussian heads on `concat(h_T, y)`.
    pub fn posterior_heads(&self, g: &mut Graph, p: &[Var], state: Var, y: &Mat) -> PosteriorVars {
        let yv = g.constant(y.clone());
        let hy = g.concat_cols(&[state, yv]);
        let mean = g.affine(hy, p[self.mean_head.w], p[self.mean_head.b]);
        let raw = g.affine(hy, p[self.logvar_head.w], p[self.logvar_head.b]);
        let log_variance = g.clamp(raw, LOG_VARIANCE_BOUNDS.0, LOG_VARIANCE_BOUNDS.1);
        PosteriorVars { mean, log_variance }
    }

    /// Encoder posterior for a batch with labels given as one-hot rows.
    pub fn encode_graph(&self, g: &mut Graph, p: &[Var], x: &Mat, y: &Mat) -> PosteriorVars {
        let state = self.encoder_state(g, p, x, y);
        self.posterior_heads(g, p, state, y)
    }

    /// Classifier logits (`B × k`).
    pub fn classifier_logits(&self, g: &mut Graph, p: &[Var], x: &Mat) -> Var {
        let mut h = g.constant(self.standardized(x).into_owned());
        let last = self.classifier.len() - 1;
        for (i, layer) in self.classifier.iter().enumerate() {
            h = g.affine(h, p[layer.w], p[layer.b]);
            if i < last {
                h = g.relu(h);
            }
        }
        h
    }

    /// Reparameterized sample `μ + exp(½ log σ²) ⊙ ε` inside the graph.
    pub fn sample_graph(&self, g: &mut Graph, post: PosteriorVars, noise: &Mat) -> Var {
        let half = g.scale(post.log_variance, 0.5);
        let sd = g.exp(half);
        let eps = g.constant(noise.clone());
        let spread = g.mul(sd, eps);
        g.add(post.mean, spread)
    }

    /// Decoder mean `f(y, z)` as a `B × (T·3J)` node.
    pub fn decode_graph(&self, g: &mut Graph, p: &[Var], z: Var, y: &Mat) -> Var {
        let batch = g.value(z).nrows();
        let yv = g.constant(y.clone());
        let zy = g.concat_cols(&[z, yv]);
        let h_dec = g.affine(zy, p[self.decoder_input.w], p[self.decoder_input.b]);
        let inputs = vec![h_dec; self.config.seq_len];
        let states = Self::run_stack(g, p, &self.decoder, inputs, batch, true);
        let frames: Vec<Var> = states
            .into_iter()
            .map(|h| g.affine(h, p[self.output_head.w], p[self.output_head.b]))
            .collect();
        let out = g.concat_cols(&frames);
        match &self.config.input_norm {
            Some(n) => {
                let (mean, scale) = n.tiled(self.config.seq_len);
                let scale = g.constant(scale.broadcast((batch, scale.ncols())).expect("scale row").to_owned());
                let mean = g.constant(mean);
                let scaled = g.mul(out, scale);
                g.add_row(scaled, mean)
            }
            None => out,
        }
    }

    // ---- batch inference -------------------------------------------------

    /// Posterior means and log-variances (`B × latent` each).
    pub fn encode_batch(&self, params: &ParamSet, x: &Mat, labels: &[usize]) -> Result<(Mat, Mat)> {
        self.check_batch(x)?;
        labels.iter().try_for_each(|&y| self.check_label(y))?;
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let y = one_hot(labels, self.config.classes);
        let post = self.encode_graph(&mut g, &p, x, &y);
        g.check()?;
        Ok((g.value(post.mean).clone(), g.value(post.log_variance).clone()))
    }

    /// Class probabilities (`B × k`).
    pub fn classify_batch(&self, params: &ParamSet, x: &Mat) -> Result<Mat> {
        self.check_batch(x)?;
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let logits = self.classifier_logits(&mut g, &p, x);
        let probs = g.softmax(logits);
        g.check()?;
        Ok(g.value(probs).clone())
    }

    /// Decoder means (`B × T·3J`) for latent rows `z`.
    pub fn decode_batch(&self, params: &ParamSet, z: &Mat, labels: &[usize]) -> Result<Mat> {
        if z.ncols() != self.config.latent_dim {
            return Err(Error::Config(format!(
                "latent has {} entries, model expects {}",
                z.ncols(),
                self.config.latent_dim
            )));
        }
        labels.iter().try_for_each(|&y| self.check_label(y))?;
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let zv = g.constant(z.clone());
        let y = one_hot(labels, self.config.classes);
        let out = self.decode_graph(&mut g, &p, zv, &y);
        g.check()?;
        Ok(g.value(out).clone())
    }

    // ---- single-sequence operations --------------------------------------

    pub fn encode(&self, params: &ParamSet, x: &Sequence, y: EffortLabel) -> Result<GaussianPosterior> {
        self.check_sequence(x)?;
        let batch = crate::motion::sequences_to_batch(&[x]);
        let (mean, lv) = self.encode_batch(params, &batch, &[y.value()])?;
        Ok(GaussianPosterior {
            mean: mean.row(0).to_vec(),
            log_variance: lv.row(0).to_vec(),
        })
    }

    pub fn classify(&self, params: &ParamSet, x: &Sequence) -> Result<ClassPosterior> {
        self.check_sequence(x)?;
        let batch = crate::motion::sequences_to_batch(&[x]);
        let probs = self.classify_batch(params, &batch)?;
        Ok(ClassPosterior {
            probabilities: probs.row(0).to_vec(),
        })
    }

    pub fn decode(&self, params: &ParamSet, z: &[f64], y: EffortLabel) -> Result<Sequence> {
        let zm = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row vector");
        let out = self.decode_batch(params, &zm, &[y.value()])?;
        Ok(Sequence::from_flat(
            "generated",
            0,
            self.config.joints,
            out.row(0).as_slice().expect("contiguous row"),
        ))
    }

    /// `decode(reparameterize(encode(x, y)), y)`.
    pub fn reconstruct(
        &self,
        params: &ParamSet,
        x: &Sequence,
        y: EffortLabel,
        rng: &mut RngStream,
    ) -> Result<Reconstruction> {
        let posterior = self.encode(params, x, y)?;
        let sample = reparameterize(&posterior, rng);
        let mut sequence = self.decode(params, &sample.z, y)?;
        sequence.clip_id = x.clip_id.clone();
        sequence.start_frame = x.start_frame;
        Ok(Reconstruction {
            sequence,
            posterior,
            sample,
        })
    }
}
