//! Semi-supervised VAE objective.
//!
//! For a labeled pair, `L(x, y) = recon + KL(q(z|x,y) ‖ N(0, I)) + ln k`.
//! For an unlabeled `x`, `U(x) = Σ_y q(y|x) L(x, y) − H(q(y|x))`. A batch
//! loss is `Σ L + Σ U + α · mean(−ln q(y|x))` over labeled pairs.
//!
//! The reconstruction term is the squared Euclidean distance per joint,
//! averaged over joints and frames, divided by the decoder variance.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diff::{Graph, Mat, ParamSet, RngStream, Var};
use crate::error::{Error, Result};
use crate::labels::EffortLabel;
use crate::model::{one_hot, GaussianPosterior, Model, PosteriorVars};
use crate::motion::{sequences_to_batch, Sequence};

/// `0.1 · n_unlabeled / n_labeled`.
pub fn default_alpha(n_unlabeled: usize, n_labeled: usize) -> f64 {
    if n_labeled == 0 {
        return 0.0;
    }
    0.1 * n_unlabeled as f64 / n_labeled as f64
}

/// Closed-form `KL(N(μ, σ²) ‖ N(0, I))`.
pub fn kl_gaussian(posterior: &GaussianPosterior) -> f64 {
    posterior
        .mean
        .iter()
        .zip(&posterior.log_variance)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

/// Scalar reconstruction term between two equal-shape sequences.
pub fn reconstruction_error(x: &Sequence, x_hat: &Sequence, output_variance: f64) -> f64 {
    let (a, b) = (x.to_flat(), x_hat.to_flat());
    assert_eq!(a.len(), b.len(), "sequence shapes differ");
    let sq: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
    sq / (x.len() * x.joint_count()) as f64 / output_variance
}

/// Sequences and labels entering one loss evaluation.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `n_l × (T·3J)`.
    pub labeled: Mat,
    pub labels: Vec<usize>,
    /// `n_u × (T·3J)`.
    pub unlabeled: Mat,
}

impl Batch {
    pub fn new(labeled: Mat, labels: Vec<usize>, unlabeled: Mat) -> Self {
        Self {
            labeled,
            labels,
            unlabeled,
        }
    }

    pub fn from_sequences(labeled: &[(&Sequence, EffortLabel)], unlabeled: &[&Sequence], width: usize) -> Self {
        let batch = |seqs: &[&Sequence]| {
            if seqs.is_empty() {
                Array2::zeros((0, width))
            } else {
                sequences_to_batch(seqs)
            }
        };
        let lab: Vec<&Sequence> = labeled.iter().map(|(s, _)| *s).collect();
        Self {
            labeled: batch(&lab),
            labels: labeled.iter().map(|(_, y)| y.value()).collect(),
            unlabeled: batch(unlabeled),
        }
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled.nrows()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled.nrows()
    }
}

/// Reparameterization noise for a batch. Unlabeled rows share one `ε`
/// across all candidate labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LossNoise {
    pub labeled: Mat,
    pub unlabeled: Mat,
}

impl LossNoise {
    /// Labeled rows are drawn first, then unlabeled rows, row-major.
    pub fn draw(rng: &mut RngStream, n_labeled: usize, n_unlabeled: usize, latent_dim: usize) -> Self {
        let mut draw = |n: usize| {
            Array2::from_shape_vec((n, latent_dim), rng.normals(n * latent_dim)).expect("noise shape")
        };
        let labeled = draw(n_labeled);
        let unlabeled = draw(n_unlabeled);
        Self { labeled, unlabeled }
    }

    pub fn zeros(n_labeled: usize, n_unlabeled: usize, latent_dim: usize) -> Self {
        Self {
            labeled: Array2::zeros((n_labeled, latent_dim)),
            unlabeled: Array2::zeros((n_unlabeled, latent_dim)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Labeled reconstruction terms plus their `q`-weighted unlabeled
    /// counterparts.
    pub reconstruction: f64,
    pub kl: f64,
    /// `Σ H(q(y|x))` over the unlabeled batch.
    pub entropy: f64,
    /// `ln k` per sequence.
    pub prior: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub labeled_term: f64,
    pub unlabeled_term: f64,
    /// Mean cross-entropy over labeled pairs, before weighting by `α`.
    pub classification_term: f64,
    pub alpha: f64,
    pub breakdown: LossBreakdown,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
}

/// Graph nodes of a batch loss.
#[derive(Debug, Clone)]
pub struct LossVars {
    pub total: Var,
    /// `n_l × 1` values of `L(x, y)`.
    pub labeled: Option<Var>,
    /// `n_u × 1` values of `U(x)`.
    pub unlabeled: Option<Var>,
    pub classification: Option<Var>,
    labeled_parts: Option<(Var, Var)>,
    unlabeled_parts: Option<UnlabeledParts>,
}

#[derive(Debug, Clone, Copy)]
struct UnlabeledParts {
    q: Var,
    recon: Var,
    kl: Var,
    entropy: Var,
}

#[derive(Default)]
struct Partial {
    labeled: Option<Var>,
    unlabeled: Option<Var>,
    classification: Option<Var>,
    labeled_parts: Option<(Var, Var)>,
    unlabeled_parts: Option<UnlabeledParts>,
}

struct LabeledNodes {
    loss: Var,
    recon: Var,
    kl: Var,
}

fn recon_graph(g: &mut Graph, model: &Model, x: &Mat, x_hat: Var) -> Var {
    let cfg = model.config();
    let xv = g.constant(x.clone());
    let diff = g.sub(x_hat, xv);
    let sq = g.square(diff);
    let rows = g.sum_rows(sq);
    g.scale(rows, 1.0 / ((cfg.seq_len * cfg.joints) as f64 * cfg.output_variance))
}

fn kl_graph(g: &mut Graph, post: PosteriorVars) -> Var {
    let m2 = g.square(post.mean);
    let var = g.exp(post.log_variance);
    let a = g.add(m2, var);
    let b = g.sub(a, post.log_variance);
    let c = g.add_scalar(b, -1.0);
    let rows = g.sum_rows(c);
    g.scale(rows, 0.5)
}

fn labeled_nodes(g: &mut Graph, model: &Model, p: &[Var], x: &Mat, y: &Mat, post: PosteriorVars, noise: &Mat) -> LabeledNodes {
    let z = model.sample_graph(g, post, noise);
    let x_hat = model.decode_graph(g, p, z, y);
    let recon = recon_graph(g, model, x, x_hat);
    let kl = kl_graph(g, post);
    let rk = g.add(recon, kl);
    let loss = g.add_scalar(rk, (model.config().classes as f64).ln());
    LabeledNodes { loss, recon, kl }
}

/// Builds the batch loss on `g` from bound parameters `p`.
pub fn build_loss(
    g: &mut Graph,
    model: &Model,
    p: &[Var],
    batch: &Batch,
    alpha: f64,
    noise: &LossNoise,
) -> Result<LossVars> {
    let cfg = model.config();
    let k = cfg.classes;
    let (n_l, n_u) = (batch.n_labeled(), batch.n_unlabeled());
    if n_l + n_u == 0 {
        return Err(Error::Precondition("loss needs a labeled or unlabeled batch".into()));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Precondition(format!("alpha must be ≥ 0, got {alpha}")));
    }
    if batch.labels.len() != n_l {
        return Err(Error::Precondition("labels and labeled rows differ in count".into()));
    }
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= k) {
        return Err(Error::UnknownClass(bad));
    }
    for m in [&batch.labeled, &batch.unlabeled] {
        if m.nrows() > 0 && m.ncols() != cfg.sequence_dim() {
            return Err(Error::Config(format!(
                "batch has {} columns, model expects {}",
                m.ncols(),
                cfg.sequence_dim()
            )));
        }
    }
    if noise.labeled.nrows() != n_l || noise.unlabeled.nrows() != n_u {
        return Err(Error::Precondition("noise rows do not match the batch".into()));
    }

    let mut terms = Vec::new();
    let mut out = Partial::default();

    if n_l > 0 {
        let y = one_hot(&batch.labels, k);
        let post = model.encode_graph(g, p, &batch.labeled, &y);
        let nodes = labeled_nodes(g, model, p, &batch.labeled, &y, post, &noise.labeled);
        terms.push(g.sum(nodes.loss));
        out.labeled = Some(nodes.loss);
        out.labeled_parts = Some((nodes.recon, nodes.kl));

        let logits = model.classifier_logits(g, p, &batch.labeled);
        let ls = g.log_softmax(logits);
        let yv = g.constant(y);
        let picked = g.mul(yv, ls);
        let rows = g.sum_rows(picked);
        let mean = g.mean(rows);
        let ce = g.scale(mean, -1.0);
        out.classification = Some(ce);
        terms.push(g.scale(ce, alpha));
    }

    if n_u > 0 {
        let x = &batch.unlabeled;
        let shared = (cfg.label_injection == crate::model::LabelInjection::Head).then(|| {
            let dummy = Array2::zeros((n_u, k));
            model.encoder_state(g, p, x, &dummy)
        });
        let mut losses = Vec::with_capacity(k);
        let mut recons = Vec::with_capacity(k);
        let mut kls = Vec::with_capacity(k);
        for c in 0..k {
            let y = one_hot(&vec![c; n_u], k);
            let state = match shared {
                Some(s) => s,
                None => model.encoder_state(g, p, x, &y),
            };
            let post = model.posterior_heads(g, p, state, &y);
            let nodes = labeled_nodes(g, model, p, x, &y, post, &noise.unlabeled);
            losses.push(nodes.loss);
            recons.push(nodes.recon);
            kls.push(nodes.kl);
        }
        let l_mat = g.concat_cols(&losses);
        let logits = model.classifier_logits(g, p, x);
        let ls = g.log_softmax(logits);
        let q = g.exp(ls);
        let weighted = g.mul(q, l_mat);
        let mix = g.sum_rows(weighted);
        let qls = g.mul(q, ls);
        let neg_entropy = g.sum_rows(qls);
        let u = g.add(mix, neg_entropy);
        terms.push(g.sum(u));
        out.unlabeled = Some(u);
        let recon = g.concat_cols(&recons);
        let kl = g.concat_cols(&kls);
        let entropy = g.scale(neg_entropy, -1.0);
        out.unlabeled_parts = Some(UnlabeledParts { q, recon, kl, entropy });
    }

    let mut total = terms[0];
    for t in &terms[1..] {
        total = g.add(total, *t);
    }
    Ok(LossVars {
        total,
        labeled: out.labeled,
        unlabeled: out.unlabeled,
        classification: out.classification,
        labeled_parts: out.labeled_parts,
        unlabeled_parts: out.unlabeled_parts,
    })
}

fn report(g: &Graph, vars: &LossVars, model: &Model, alpha: f64, batch: &Batch) -> Result<LossReport> {
    g.check()?;
    let sum = |v: Option<Var>| v.map_or(0.0, |v| g.value(v).sum());
    let mut breakdown = LossBreakdown {
        prior: (batch.n_labeled() + batch.n_unlabeled()) as f64 * (model.config().classes as f64).ln(),
        ..LossBreakdown::default()
    };
    if let Some((recon, kl)) = vars.labeled_parts {
        breakdown.reconstruction += g.value(recon).sum();
        breakdown.kl += g.value(kl).sum();
    }
    if let Some(parts) = vars.unlabeled_parts {
        let q = g.value(parts.q);
        breakdown.reconstruction += (q * g.value(parts.recon)).sum();
        breakdown.kl += (q * g.value(parts.kl)).sum();
        breakdown.entropy = g.value(parts.entropy).sum();
    }
    let r = LossReport {
        total: g.scalar(vars.total),
        labeled_term: sum(vars.labeled),
        unlabeled_term: sum(vars.unlabeled),
        classification_term: vars.classification.map_or(0.0, |v| g.scalar(v)),
        alpha,
        breakdown,
        n_labeled: batch.n_labeled(),
        n_unlabeled: batch.n_unlabeled(),
    };
    if !r.total.is_finite() {
        return Err(Error::numeric("total loss"));
    }
    Ok(r)
}

/// Forward evaluation with explicit noise.
pub fn evaluate(model: &Model, params: &ParamSet, batch: &Batch, alpha: f64, noise: &LossNoise) -> Result<LossReport> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let vars = build_loss(&mut g, model, &p, batch, alpha, noise)?;
    report(&g, &vars, model, alpha, batch)
}

/// Forward and backward pass; gradients are indexed like `params`.
pub fn evaluate_with_grad(
    model: &Model,
    params: &ParamSet,
    batch: &Batch,
    alpha: f64,
    noise: &LossNoise,
) -> Result<(LossReport, Vec<Option<Mat>>)> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let vars = build_loss(&mut g, model, &p, batch, alpha, noise)?;
    let r = report(&g, &vars, model, alpha, batch)?;
    let grads = g.backward(vars.total, params.len())?;
    Ok((r, grads))
}

/// Batch loss with noise drawn from `rng`.
pub fn total_loss(model: &Model, params: &ParamSet, batch: &Batch, alpha: f64, rng: &mut RngStream) -> Result<LossReport> {
    let noise = LossNoise::draw(rng, batch.n_labeled(), batch.n_unlabeled(), model.config().latent_dim);
    evaluate(model, params, batch, alpha, &noise)
}

/// `L(x, y)` for one sequence.
pub fn labeled_elbo_loss(model: &Model, params: &ParamSet, x: &Sequence, y: EffortLabel, rng: &mut RngStream) -> Result<f64> {
    let width = model.config().sequence_dim();
    let batch = Batch::from_sequences(&[(x, y)], &[], width);
    let noise = LossNoise::draw(rng, 1, 0, model.config().latent_dim);
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let vars = build_loss(&mut g, model, &p, &batch, 0.0, &noise)?;
    g.check()?;
    Ok(g.value(vars.labeled.expect("labeled row"))[[0, 0]])
}

/// `U(x)` for one sequence.
pub fn unlabeled_loss(model: &Model, params: &ParamSet, x: &Sequence, rng: &mut RngStream) -> Result<f64> {
    let width = model.config().sequence_dim();
    let batch = Batch::from_sequences(&[], &[x], width);
    let noise = LossNoise::draw(rng, 0, 1, model.config().latent_dim);
    let r = evaluate(model, params, &batch, 0.0, &noise)?;
    Ok(r.unlabeled_term)
}
