//! Sequence generation from the latent space of a trained model.
//!
//! The [`LatentAtlas`] stores the posterior means of labeled training
//! windows per class and a regularized Gaussian fitted to each class.
//! Conditional samples draw `z` from the class Gaussian (or, in KDE mode,
//! jitter a stored latent) and decode it with that class label.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diff::checkpoint::sha256_hex;
use crate::diff::{Mat, ParamSet, RngStream};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::motion::{save_clips, ClipFormat, MotionClip, Sequence};

/// Default ridge added to every class covariance.
pub const DEFAULT_LAMBDA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Full-covariance Gaussian per class.
    Gaussian,
    /// A stored class latent plus isotropic noise of the given bandwidth.
    Kde { bandwidth: f64 },
}

impl Default for SamplingMode {
    fn default() -> Self {
        SamplingMode::Gaussian
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAtlas {
    pub label: usize,
    pub count: usize,
    pub latents: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Sample covariance plus `λI`, row-major.
    pub covariance: Vec<Vec<f64>>,
    /// Lower Cholesky factor of `covariance`.
    pub cholesky: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentAtlas {
    pub latent_dim: usize,
    pub lambda: f64,
    pub classes: Vec<ClassAtlas>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |r, c| rows[r][c])
}

fn fit_class(label: usize, latents: Vec<Vec<f64>>, lambda: f64) -> Result<ClassAtlas> {
    let n = latents.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "class {label} has {n} labeled windows, at least 2 are needed"
        )));
    }
    let d = latents[0].len();
    if latents.iter().any(|z| z.len() != d) {
        return Err(Error::Precondition(format!("class {label} latents differ in width")));
    }
    let mut mean = DVector::zeros(d);
    for z in &latents {
        mean += DVector::from_column_slice(z);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for z in &latents {
        let c = DVector::from_column_slice(z) - &mean;
        cov += &c * c.transpose();
    }
    cov /= (n - 1) as f64;
    cov += DMatrix::identity(d, d) * lambda;
    // exact symmetry despite rounding in the outer products
    cov = (&cov + cov.transpose()) * 0.5;
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric(format!("cholesky of class {label} covariance")))?;
    Ok(ClassAtlas {
        label,
        count: n,
        latents,
        mean: mean.iter().copied().collect(),
        covariance: to_rows(&cov),
        cholesky: to_rows(&chol.l()),
    })
}

impl LatentAtlas {
    /// Fits one Gaussian per entry of `per_class`; entry `c` holds the
    /// latents of class `c`.
    pub fn from_latents(per_class: Vec<Vec<Vec<f64>>>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Precondition(format!("lambda must be positive, got {lambda}")));
        }
        let classes = per_class
            .into_iter()
            .enumerate()
            .map(|(c, z)| fit_class(c, z, lambda))
            .collect::<Result<Vec<_>>>()?;
        let latent_dim = classes.first().map_or(0, |c| c.mean.len());
        if classes.iter().any(|c| c.mean.len() != latent_dim) {
            return Err(Error::Precondition("classes differ in latent width".into()));
        }
        Ok(Self {
            latent_dim,
            lambda,
            classes,
        })
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    fn class(&self, y: usize) -> Result<&ClassAtlas> {
        self.classes.get(y).ok_or(Error::UnknownClass(y))
    }

    /// Log-density of `z` under the class-`y` Gaussian.
    pub fn log_density(&self, y: usize, z: &[f64]) -> Result<f64> {
        let c = self.class(y)?;
        if z.len() != self.latent_dim {
            return Err(Error::Precondition(format!("latent has {} entries, atlas {}", z.len(), self.latent_dim)));
        }
        let l = from_rows(&c.cholesky);
        let diff = DVector::from_column_slice(z) - DVector::from_column_slice(&c.mean);
        let w = l
            .solve_lower_triangular(&diff)
            .ok_or_else(|| Error::numeric("triangular solve"))?;
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let d = self.latent_dim as f64;
        Ok(-0.5 * (w.norm_squared() + log_det + d * (2.0 * std::f64::consts::PI).ln()))
    }

    /// One latent for class `y`.
    pub fn sample(&self, y: usize, mode: SamplingMode, rng: &mut RngStream) -> Result<Vec<f64>> {
        let c = self.class(y)?;
        match mode {
            SamplingMode::Gaussian => {
                let noise = DVector::from_vec(rng.normals(self.latent_dim));
                let z = from_rows(&c.cholesky) * noise + DVector::from_column_slice(&c.mean);
                Ok(z.iter().copied().collect())
            }
            SamplingMode::Kde { bandwidth } => {
                if !(bandwidth >= 0.0 && bandwidth.is_finite()) {
                    return Err(Error::Precondition(format!("bandwidth must be ≥ 0, got {bandwidth}")));
                }
                let i = ((rng.uniform() * c.count as f64) as usize).min(c.count - 1);
                let noise = rng.normals(self.latent_dim);
                Ok(c.latents[i].iter().zip(noise).map(|(m, e)| m + bandwidth * e).collect())
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Content hash of the serialized atlas.
    pub fn sha256(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }
}

/// Encodes labeled windows (`x` rows with `labels`) and fits the atlas on
/// their posterior means.
pub fn build_atlas(model: &Model, params: &ParamSet, x: &Mat, labels: &[usize], lambda: f64) -> Result<LatentAtlas> {
    if x.nrows() != labels.len() {
        return Err(Error::Precondition("windows and labels differ in count".into()));
    }
    let k = model.config().classes;
    let mut per_class = vec![Vec::new(); k];
    let chunk = 256;
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + chunk).min(x.nrows());
        let (mu, _) = model.encode_batch(params, &x.slice(ndarray::s![start..end, ..]).to_owned(), &labels[start..end])?;
        for (row, &y) in mu.rows().into_iter().zip(&labels[start..end]) {
            per_class[y].push(row.to_vec());
        }
        start = end;
    }
    LatentAtlas::from_latents(per_class, lambda)
}

/// Decodes latent rows with their labels into sequences.
pub fn decode_latents(model: &Model, params: &ParamSet, z: &Mat, labels: &[usize]) -> Result<Vec<Sequence>> {
    let cfg = model.config();
    let mut out = Vec::with_capacity(z.nrows());
    let chunk = 256;
    let mut start = 0;
    while start < z.nrows() {
        let end = (start + chunk).min(z.nrows());
        let x = model.decode_batch(params, &z.slice(ndarray::s![start..end, ..]).to_owned(), &labels[start..end])?;
        for (i, row) in x.rows().into_iter().enumerate() {
            let y = labels[start + i];
            out.push(Sequence::from_flat(format!("generated-c{y}"), start + i, cfg.joints, &row.to_vec()));
        }
        start = end;
    }
    Ok(out)
}

fn latent_matrix(rows: &[Vec<f64>], d: usize) -> Mat {
    Mat::from_shape_fn((rows.len(), d), |(r, c)| rows[r][c])
}

/// `count` sequences of class `y` decoded from atlas samples.
pub fn sample_conditional(
    model: &Model,
    params: &ParamSet,
    atlas: &LatentAtlas,
    y: usize,
    count: usize,
    mode: SamplingMode,
    rng: &mut RngStream,
) -> Result<Vec<Sequence>> {
    if y >= model.config().classes {
        return Err(Error::UnknownClass(y));
    }
    if atlas.latent_dim != model.config().latent_dim {
        return Err(Error::Config(format!(
            "atlas latent width {} differs from model {}",
            atlas.latent_dim,
            model.config().latent_dim
        )));
    }
    let z = (0..count).map(|_| atlas.sample(y, mode, rng)).collect::<Result<Vec<_>>>()?;
    decode_latents(model, params, &latent_matrix(&z, atlas.latent_dim), &vec![y; count])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    Random,
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub struct PriorSamples {
    pub latents: Mat,
    pub labels: Vec<usize>,
    pub sequences: Vec<Sequence>,
}

/// Decodes `z ~ N(0, I)` with labels drawn uniformly or fixed. Each sample
/// draws its latent first, then its label.
pub fn sample_prior(
    model: &Model,
    params: &ParamSet,
    count: usize,
    labels: LabelMode,
    rng: &mut RngStream,
) -> Result<PriorSamples> {
    let cfg = model.config();
    if let LabelMode::Fixed(y) = labels {
        if y >= cfg.classes {
            return Err(Error::UnknownClass(y));
        }
    }
    let d = cfg.latent_dim;
    let mut latents = Mat::zeros((count, d));
    let mut ys = Vec::with_capacity(count);
    for i in 0..count {
        for (dst, v) in latents.row_mut(i).iter_mut().zip(rng.normals(d)) {
            *dst = v;
        }
        ys.push(match labels {
            LabelMode::Fixed(y) => y,
            LabelMode::Random => ((rng.uniform() * cfg.classes as f64) as usize).min(cfg.classes - 1),
        });
    }
    let sequences = decode_latents(model, params, &latents, &ys)?;
    Ok(PriorSamples {
        latents,
        labels: ys,
        sequences,
    })
}

/// Provenance written next to exported sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    /// Requested label, absent for random-label prior sampling.
    pub label: Option<usize>,
    pub labels: Vec<usize>,
    pub seed: u64,
    pub count: usize,
    /// `conditional` or `prior`.
    pub source: String,
    pub sampling: Option<SamplingMode>,
    pub atlas_sha256: Option<String>,
    pub checkpoint_sha256: Option<String>,
    pub files: Vec<PathBuf>,
}

/// Writes one clip file per sequence into `dir` plus `manifest.json`.
pub fn export_generated(
    dir: &Path,
    sequences: &[Sequence],
    fps: f64,
    skeleton: Option<Vec<(usize, usize)>>,
    format: ClipFormat,
    mut manifest: GenerationManifest,
) -> Result<GenerationManifest> {
    if manifest.labels.len() != sequences.len() {
        return Err(Error::Precondition("one label per sequence is required".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let clips = sequences
        .iter()
        .enumerate()
        .map(|(i, s)| MotionClip::new(format!("gen{i:04}_c{}", manifest.labels[i]), fps, s.poses.clone(), skeleton.clone()))
        .collect::<Result<Vec<_>>>()?;
    manifest.files = match format {
        ClipFormat::Json => clips
            .iter()
            .map(|c| {
                let path = dir.join(format!("{}.json", c.id));
                save_clips(&path, format, std::slice::from_ref(c))?;
                Ok(path)
            })
            .collect::<Result<Vec<_>>>()?,
        _ => save_clips(dir, format, &clips)?,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reconstructions from posterior means: `x̂ = decode(μ(x, y), y)`.
pub fn reconstruct_means(model: &Model, params: &ParamSet, x: &Mat, labels: &[usize]) -> Result<Mat> {
    if x.nrows() != labels.len() {
        return Err(Error::Precondition("windows and labels differ in count".into()));
    }
    let mut out = Mat::zeros(x.raw_dim());
    let chunk = 256;
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + chunk).min(x.nrows());
        let rows = x.slice(ndarray::s![start..end, ..]).to_owned();
        let (mu, _) = model.encode_batch(params, &rows, &labels[start..end])?;
        let xh = model.decode_batch(params, &mu, &labels[start..end])?;
        out.slice_mut(ndarray::s![start..end, ..]).assign(&xh);
        start = end;
    }
    Ok(out)
}
