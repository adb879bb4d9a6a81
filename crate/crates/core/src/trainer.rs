//! Semi-supervised training loop.
//!
//! Every optimization step pairs one labeled batch with one unlabeled batch.
//! An epoch walks the shuffled unlabeled training pool once
//! (`⌈n_unlabeled / B⌉` steps) while the labeled pool is cycled. Shuffling
//! and reparameterization noise come from per-epoch RNG substreams, so a run
//! resumed from an epoch checkpoint continues bit-identically.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diff::checkpoint::{decode_tensors, encode_tensors, sha256_hex};
use crate::diff::{AdamConfig, AdamState, Mat, ParamSet, RngStream};
use crate::error::{Error, Result};
use crate::labels::LabelTable;
use crate::model::{Model, ModelConfig};
use crate::motion::{window_id, Dataset, Partition, SplitAssignment};
use crate::objective::{default_alpha, evaluate, evaluate_with_grad, Batch, LossNoise, LossReport};

/// Which validation statistic selects the returned parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Lowest validation total loss.
    #[default]
    Dance,
    /// Highest validation classification accuracy.
    Watch,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dance" => Ok(Self::Dance),
            "watch" => Ok(Self::Watch),
            other => Err(Error::Config(format!("unknown criterion {other:?} (dance|watch)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Overrides `0.1 · n_unlabeled / n_labeled`.
    pub alpha: Option<f64>,
    pub seed: u64,
    /// Write an epoch checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub criterion: Criterion,
    pub max_steps_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 80,
            learning_rate: 3e-4,
            alpha: None,
            seed: 0,
            checkpoint_every: 0,
            criterion: Criterion::Dance,
            max_steps_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Config("alpha must be ≥ 0".into()));
            }
        }
        if self.max_steps_per_epoch == Some(0) {
            return Err(Error::Config("max_steps_per_epoch must be positive".into()));
        }
        Ok(())
    }
}

/// Windows of one partition, materialized as a batch matrix.
#[derive(Debug, Clone)]
pub struct Pool {
    pub partition: Partition,
    pub ids: Vec<String>,
    pub x: Mat,
    /// Empty for unlabeled pools.
    pub labels: Vec<usize>,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        matches!(
            self.partition,
            Partition::LabeledTrain | Partition::LabeledVal | Partition::LabeledTest
        )
    }

    pub fn from_split(ds: &Dataset, labels: &LabelTable, split: &SplitAssignment, partition: Partition) -> Result<Self> {
        let refs = split.refs(ds, partition);
        let ids: Vec<String> = refs.iter().map(|w| window_id(ds.clip_id(*w), w.start)).collect();
        let width = ds.seq_len * 3 * ds.joint_count();
        let x = if refs.is_empty() {
            Array2::zeros((0, width))
        } else {
            ds.batch(&refs)
        };
        let mut pool = Self {
            partition,
            ids,
            x,
            labels: Vec::new(),
        };
        if pool.is_labeled() {
            pool.labels = refs
                .iter()
                .map(|w| {
                    labels
                        .get(ds.clip_id(*w), w.start)
                        .map(|r| r.label.value())
                        .ok_or_else(|| Error::Precondition(format!("{} has no label", window_id(ds.clip_id(*w), w.start))))
                })
                .collect::<Result<_>>()?;
        }
        Ok(pool)
    }

    fn rows(&self, idx: &[usize]) -> Mat {
        self.x.select(ndarray::Axis(0), idx)
    }

    fn take_labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    fn empty_like(&self) -> Mat {
        Array2::zeros((0, self.x.ncols()))
    }
}

#[derive(Debug, Clone)]
pub struct TrainData {
    pub labeled_train: Pool,
    pub unlabeled_train: Pool,
    pub labeled_val: Pool,
    pub unlabeled_val: Pool,
    split: SplitAssignment,
}

impl TrainData {
    pub fn from_split(ds: &Dataset, labels: &LabelTable, split: &SplitAssignment) -> Result<Self> {
        Ok(Self {
            labeled_train: Pool::from_split(ds, labels, split, Partition::LabeledTrain)?,
            unlabeled_train: Pool::from_split(ds, labels, split, Partition::UnlabeledTrain)?,
            labeled_val: Pool::from_split(ds, labels, split, Partition::LabeledVal)?,
            unlabeled_val: Pool::from_split(ds, labels, split, Partition::UnlabeledVal)?,
            split: split.clone(),
        })
    }

    pub fn split(&self) -> &SplitAssignment {
        &self.split
    }

    /// Rows of a training pool, refusing any window not assigned to that
    /// training partition.
    fn assemble(&self, pool: &Pool, idx: &[usize]) -> Result<Mat> {
        if !matches!(pool.partition, Partition::LabeledTrain | Partition::UnlabeledTrain) {
            return Err(Error::Precondition(format!("{:?} pool used for parameter updates", pool.partition)));
        }
        for &i in idx {
            let id = &pool.ids[i];
            if self.split.assignments.get(id) != Some(&pool.partition) {
                return Err(Error::Precondition(format!(
                    "window {id} is not in {:?} but reached a training batch",
                    pool.partition
                )));
            }
        }
        Ok(pool.rows(idx))
    }
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Global optimizer step count at the end of the epoch.
    pub step: u64,
    /// Per-step means of the batch loss terms.
    pub total: f64,
    pub labeled: f64,
    pub unlabeled: f64,
    pub class_term: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub learning_rate: f64,
    pub retried: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub accuracy: f64,
    /// Rows = true label, normalized to sum 1 (all-zero rows for absent
    /// classes).
    pub confusion: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
    pub n: usize,
}

/// Confusion statistics from label pairs.
pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> ClassifierEval {
    assert_eq!(truth.len(), predicted.len());
    let mut counts = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        counts[t][p] += 1;
    }
    let correct: usize = (0..classes).map(|c| counts[c][c]).sum();
    let confusion = counts
        .iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            row.iter().map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect()
        })
        .collect();
    ClassifierEval {
        accuracy: if truth.is_empty() { 0.0 } else { correct as f64 / truth.len() as f64 },
        confusion,
        counts,
        n: truth.len(),
    }
}

/// Argmax predictions of the classifier, evaluated in chunks.
pub fn predict(model: &Model, params: &ParamSet, x: &Mat) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(x.nrows());
    let chunk = 256;
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + chunk).min(x.nrows());
        let probs = model.classify_batch(params, &x.slice(ndarray::s![start..end, ..]).to_owned())?;
        out.extend(probs.rows().into_iter().map(|r| {
            r.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0)
        }));
        start = end;
    }
    Ok(out)
}

pub fn evaluate_classifier(model: &Model, params: &ParamSet, pool: &Pool) -> Result<ClassifierEval> {
    if pool.is_empty() {
        return Err(Error::Precondition("classifier evaluation needs a non-empty labeled split".into()));
    }
    if !pool.is_labeled() {
        return Err(Error::Precondition("classifier evaluation needs a labeled split".into()));
    }
    let pred = predict(model, params, &pool.x)?;
    Ok(confusion(&pool.labels, &pred, model.config().classes))
}

/// Loss over whole pools, evaluated in chunks. Cross-entropy is averaged
/// over all labeled rows.
pub fn evaluate_pools(
    model: &Model,
    params: &ParamSet,
    labeled: &Pool,
    unlabeled: &Pool,
    alpha: f64,
    mut rng: RngStream,
    chunk: usize,
) -> Result<LossReport> {
    let mut acc = LossReport {
        alpha,
        ..LossReport::default()
    };
    let latent = model.config().latent_dim;
    let mut ce_weighted = 0.0;
    let mut run = |x: Mat, labels: Vec<usize>, unl: Mat, acc: &mut LossReport| -> Result<()> {
        let batch = Batch::new(x, labels, unl);
        let noise = LossNoise::draw(&mut rng, batch.n_labeled(), batch.n_unlabeled(), latent);
        let r = evaluate(model, params, &batch, alpha, &noise)?;
        acc.labeled_term += r.labeled_term;
        acc.unlabeled_term += r.unlabeled_term;
        ce_weighted += r.classification_term * r.n_labeled as f64;
        acc.n_labeled += r.n_labeled;
        acc.n_unlabeled += r.n_unlabeled;
        acc.breakdown.reconstruction += r.breakdown.reconstruction;
        acc.breakdown.kl += r.breakdown.kl;
        acc.breakdown.entropy += r.breakdown.entropy;
        acc.breakdown.prior += r.breakdown.prior;
        Ok(())
    };
    for start in (0..labeled.len()).step_by(chunk.max(1)) {
        let idx: Vec<usize> = (start..(start + chunk).min(labeled.len())).collect();
        run(labeled.rows(&idx), labeled.take_labels(&idx), unlabeled.empty_like(), &mut acc)?;
    }
    for start in (0..unlabeled.len()).step_by(chunk.max(1)) {
        let idx: Vec<usize> = (start..(start + chunk).min(unlabeled.len())).collect();
        run(labeled.empty_like(), Vec::new(), unlabeled.rows(&idx), &mut acc)?;
    }
    if acc.n_labeled + acc.n_unlabeled == 0 {
        return Err(Error::Precondition("no validation windows".into()));
    }
    if acc.n_labeled > 0 {
        acc.classification_term = ce_weighted / acc.n_labeled as f64;
    }
    acc.total = acc.labeled_term + acc.unlabeled_term + alpha * acc.classification_term;
    Ok(acc)
}

// ---- checkpoints -------------------------------------------------------

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub epoch: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    /// Completed epochs.
    pub epoch: usize,
    pub global_step: u64,
    pub learning_rate: f64,
    pub alpha: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub best: Option<BestRecord>,
    pub tensors_file: String,
    pub tensors_sha256: String,
    /// Free-form provenance (class names, normalization, config hash).
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Training state at an epoch boundary.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub params: ParamSet,
    pub adam: AdamState,
    /// Parameters of the best epoch so far under the run's criterion.
    pub selected: Option<ParamSet>,
}

fn prefixed(prefix: &str, ps: &ParamSet) -> Vec<(String, Mat)> {
    ps.iter()
        .map(|t| (format!("{prefix}/{}", t.name()), t.value().to_owned()))
        .collect()
}

impl Checkpoint {
    /// Writes `<stem>.bin` and `<stem>.json` into `dir`; returns the manifest
    /// path.
    pub fn save(&mut self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tensors = prefixed("param", &self.params);
        for (t, (m, v)) in self
            .params
            .iter()
            .zip(self.adam.first_moment.iter().zip(&self.adam.second_moment))
        {
            tensors.push((format!("adam_m/{}", t.name()), m.clone()));
            tensors.push((format!("adam_v/{}", t.name()), v.clone()));
        }
        if let Some(sel) = &self.selected {
            tensors.extend(prefixed("selected", sel));
        }
        let bytes = encode_tensors(tensors.iter().map(|(n, m)| (n.as_str(), m)));
        let bin = dir.join(format!("{stem}.bin"));
        fs::write(&bin, &bytes).map_err(|e| Error::io(&bin, e))?;
        self.manifest.tensors_file = format!("{stem}.bin");
        self.manifest.tensors_sha256 = sha256_hex(&bytes);
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
        Ok(json)
    }

    /// Loads a manifest and its tensor file, verifying the hash.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: CheckpointManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format {}",
                manifest.format_version
            )));
        }
        let bin = manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&manifest.tensors_file);
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if sha256_hex(&bytes) != manifest.tensors_sha256 {
            return Err(Error::Checkpoint(format!("{} does not match its manifest hash", bin.display())));
        }
        let mut groups: BTreeMap<&str, Vec<(String, Mat)>> = BTreeMap::new();
        let tensors = decode_tensors(&bytes)?;
        for (name, m) in tensors {
            let (group, rest) = name
                .split_once('/')
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name} has no group prefix")))?;
            let group = match group {
                "param" => "param",
                "adam_m" => "adam_m",
                "adam_v" => "adam_v",
                "selected" => "selected",
                other => return Err(Error::Checkpoint(format!("unknown tensor group {other}"))),
            };
            groups.entry(group).or_default().push((rest.to_string(), m));
        }
        let model = Model::new(manifest.model.clone())?;
        let load = |entries: Vec<(String, Mat)>| -> Result<ParamSet> {
            let mut ps = model.zero_params();
            ps.load_values(entries)?;
            Ok(ps)
        };
        let params = load(groups.remove("param").unwrap_or_default())?;
        let mut adam = AdamState::new(
            AdamConfig {
                learning_rate: manifest.learning_rate,
                ..AdamConfig::default()
            },
            &params,
        );
        adam.step = manifest.global_step;
        if let (Some(m), Some(v)) = (groups.remove("adam_m"), groups.remove("adam_v")) {
            adam.first_moment = load(m)?.iter().map(|t| t.value().to_owned()).collect();
            adam.second_moment = load(v)?.iter().map(|t| t.value().to_owned()).collect();
        }
        let selected = groups.remove("selected").map(load).transpose()?;
        Ok(Self {
            manifest,
            params,
            adam,
            selected,
        })
    }

    /// Parameters to use for inference: the selected epoch when present.
    pub fn inference_params(&self) -> &ParamSet {
        self.selected.as_ref().unwrap_or(&self.params)
    }
}

/// Loads inference parameters and their model from a checkpoint manifest.
pub fn load_model(manifest_path: &Path) -> Result<(Model, ParamSet, CheckpointManifest)> {
    let ck = Checkpoint::load(manifest_path)?;
    let model = Model::new(ck.manifest.model.clone())?;
    let params = ck.inference_params().clone();
    model.check_params(&params)?;
    Ok((model, params, ck.manifest))
}

// ---- training loop -----------------------------------------------------

pub enum TrainStart {
    Fresh(ParamSet),
    Resume(Box<Checkpoint>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum TrainStatus {
    Completed,
    /// Non-finite loss persisted after one rollback with a halved learning
    /// rate; parameters are those of the last good epoch.
    Aborted { epoch: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub status: TrainStatus,
    pub history: Vec<EpochLog>,
    /// Parameters chosen by the criterion (the last epoch without
    /// validation data).
    pub selected: ParamSet,
    pub selected_epoch: Option<usize>,
    /// State after the last completed epoch.
    pub last: Checkpoint,
    pub alpha: f64,
    pub checkpoint_paths: Vec<PathBuf>,
}

/// Where epoch checkpoints and the final ones are written.
#[derive(Debug, Clone)]
pub struct CheckpointPolicy {
    pub dir: PathBuf,
    pub extra: BTreeMap<String, serde_json::Value>,
}

struct EpochStats {
    total: f64,
    labeled: f64,
    unlabeled: f64,
    class_term: f64,
    steps: u64,
}

const SHUFFLE_STREAM: u64 = 0x5348_0000;
const NOISE_STREAM: u64 = 0x4e4f_0000;
const VALIDATION_STREAM: u64 = 0x5641_0000;

fn run_epoch(
    model: &Model,
    params: &mut ParamSet,
    adam: &mut AdamState,
    data: &TrainData,
    cfg: &TrainConfig,
    epoch: usize,
    alpha: f64,
) -> Result<EpochStats> {
    let lab = &data.labeled_train;
    let unl = &data.unlabeled_train;
    let b = cfg.batch_size;
    let mut shuffle = RngStream::substream(cfg.seed, SHUFFLE_STREAM + epoch as u64);
    let mut noise_rng = RngStream::substream(cfg.seed, NOISE_STREAM + epoch as u64);
    let mut lab_order: Vec<usize> = (0..lab.len()).collect();
    let mut unl_order: Vec<usize> = (0..unl.len()).collect();
    lab_order.shuffle(&mut shuffle);
    unl_order.shuffle(&mut shuffle);

    let driver = if unl.is_empty() { lab.len() } else { unl.len() };
    let mut steps = driver.div_ceil(b);
    if let Some(cap) = cfg.max_steps_per_epoch {
        steps = steps.min(cap);
    }
    let lab_size = b.min(lab.len());
    let mut cursor = 0;
    let mut stats = EpochStats {
        total: 0.0,
        labeled: 0.0,
        unlabeled: 0.0,
        class_term: 0.0,
        steps: 0,
    };
    for s in 0..steps {
        let lab_idx: Vec<usize> = (0..lab_size)
            .map(|i| lab_order[(cursor + i) % lab.len()])
            .collect();
        cursor = (cursor + lab_size) % lab.len();
        let unl_idx: &[usize] = if unl.is_empty() {
            &[]
        } else {
            &unl_order[s * b..((s + 1) * b).min(unl.len())]
        };
        let batch = Batch::new(
            data.assemble(lab, &lab_idx)?,
            lab.take_labels(&lab_idx),
            if unl_idx.is_empty() { unl.empty_like() } else { data.assemble(unl, unl_idx)? },
        );
        let noise = LossNoise::draw(&mut noise_rng, batch.n_labeled(), batch.n_unlabeled(), model.config().latent_dim);
        let (report, grads) = evaluate_with_grad(model, params, &batch, alpha, &noise)?;
        params.set_grads(grads);
        adam.step(params)?;
        if !params.is_finite() {
            return Err(Error::numeric("parameter update"));
        }
        stats.total += report.total;
        stats.labeled += report.labeled_term;
        stats.unlabeled += report.unlabeled_term;
        stats.class_term += report.classification_term;
        stats.steps += 1;
    }
    Ok(stats)
}

fn criterion_score(criterion: Criterion, log: &EpochLog) -> Option<f64> {
    match criterion {
        Criterion::Dance => log.val_loss,
        Criterion::Watch => log.val_acc.map(|a| -a),
    }
}

/// Trains from `start` for the configured number of epochs (counted from
/// zero, so a resumed run continues to the same end epoch). `on_epoch`
/// receives each log line as soon as the epoch completes.
pub fn train(
    model: &Model,
    start: TrainStart,
    data: &TrainData,
    cfg: &TrainConfig,
    checkpoints: Option<&CheckpointPolicy>,
    mut on_epoch: impl FnMut(&EpochLog) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.labeled_train.is_empty() {
        return Err(Error::Precondition("labeled training pool is empty".into()));
    }
    let alpha = cfg
        .alpha
        .unwrap_or_else(|| default_alpha(data.unlabeled_train.len(), data.labeled_train.len()));

    let mut ck = match start {
        TrainStart::Fresh(params) => {
            model.check_params(&params)?;
            let adam = AdamState::new(
                AdamConfig {
                    learning_rate: cfg.learning_rate,
                    ..AdamConfig::default()
                },
                &params,
            );
            Checkpoint {
                manifest: CheckpointManifest {
                    format_version: CHECKPOINT_FORMAT_VERSION,
                    epoch: 0,
                    global_step: 0,
                    learning_rate: cfg.learning_rate,
                    alpha,
                    model: model.config().clone(),
                    train: cfg.clone(),
                    best: None,
                    tensors_file: String::new(),
                    tensors_sha256: String::new(),
                    extra: checkpoints.map(|c| c.extra.clone()).unwrap_or_default(),
                },
                params,
                adam,
                selected: None,
            }
        }
        TrainStart::Resume(ck) => {
            model.check_params(&ck.params)?;
            *ck
        }
    };

    let has_val = !data.labeled_val.is_empty();
    let mut history = Vec::new();
    let mut paths = Vec::new();
    let mut status = TrainStatus::Completed;

    for epoch in ck.manifest.epoch + 1..=cfg.epochs {
        let good_params = ck.params.clone();
        let good_adam = ck.adam.clone();
        let mut retried = false;
        let stats = loop {
            match run_epoch(model, &mut ck.params, &mut ck.adam, data, cfg, epoch, alpha) {
                Ok(s) => break Some(s),
                Err(Error::Numeric { op }) => {
                    ck.params = good_params.clone();
                    ck.adam = good_adam.clone();
                    if retried {
                        status = TrainStatus::Aborted {
                            epoch,
                            reason: format!("non-finite value in {op} after learning-rate halving"),
                        };
                        break None;
                    }
                    retried = true;
                    ck.adam.config.learning_rate *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        let Some(stats) = stats else { break };

        let n = stats.steps.max(1) as f64;
        let (val_loss, val_acc) = if has_val {
            let r = evaluate_pools(
                model,
                &ck.params,
                &data.labeled_val,
                &data.unlabeled_val,
                alpha,
                RngStream::substream(cfg.seed, VALIDATION_STREAM),
                cfg.batch_size.max(1),
            )?;
            let acc = evaluate_classifier(model, &ck.params, &data.labeled_val)?.accuracy;
            (Some(r.total), Some(acc))
        } else {
            (None, None)
        };
        let log = EpochLog {
            epoch,
            step: ck.adam.step,
            total: stats.total / n,
            labeled: stats.labeled / n,
            unlabeled: stats.unlabeled / n,
            class_term: stats.class_term / n,
            val_loss,
            val_acc,
            learning_rate: ck.adam.config.learning_rate,
            retried,
        };

        let score = criterion_score(cfg.criterion, &log);
        let improves = match (score, ck.manifest.best) {
            (Some(s), Some(best)) => s < best.score,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improves {
            ck.manifest.best = Some(BestRecord {
                epoch,
                score: score.expect("score present"),
            });
            ck.selected = Some(ck.params.clone());
        }
        ck.manifest.epoch = epoch;
        ck.manifest.global_step = ck.adam.step;
        ck.manifest.learning_rate = ck.adam.config.learning_rate;
        on_epoch(&log)?;
        history.push(log);

        if let Some(policy) = checkpoints {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                paths.push(ck.save(&policy.dir, &format!("epoch_{epoch:04}"))?);
            }
        }
    }

    let selected_epoch = ck.manifest.best.map(|b| b.epoch);
    let selected = ck.selected.clone().unwrap_or_else(|| ck.params.clone());
    if let Some(policy) = checkpoints {
        let stem = match status {
            TrainStatus::Completed => "final",
            TrainStatus::Aborted { .. } => "last_good",
        };
        paths.push(ck.save(&policy.dir, stem)?);
    }
    Ok(TrainOutcome {
        status,
        history,
        selected,
        selected_epoch,
        last: ck,
        alpha,
        checkpoint_paths: paths,
    })
}
