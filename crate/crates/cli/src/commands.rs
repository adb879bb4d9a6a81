use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use effort_core::diff::checkpoint::sha256_hex;
use effort_core::diff::{Mat, ParamSet, RngStream};
use effort_core::generator::{
    build_atlas, export_generated, reconstruct_means, sample_conditional, GenerationManifest, LatentAtlas,
};
use effort_core::labels::{
    augment_between, augment_dilate, class_histogram, read_table_csv, simulate_manual_labels, write_table_csv,
    ClassHistogram, ClassNames, LabelStore, LabelTable, WindowGrid,
};
use effort_core::metrics::{
    ajd_flat, confusion_csv, danceability, effort_recovery, DanceabilityReport, DanceabilityThresholds,
    RecoveryReport,
};
use effort_core::model::{InputNorm, Model};
use effort_core::motion::{
    load_clips, normalize_dataset, split, synth_dataset, ClipFormat, DatasetCache, DatasetSummary, LoadOptions,
    Partition, Sequence, SpectralOracle, SplitAssignment,
};
use effort_core::trainer::{
    evaluate_classifier, load_model, predict, train as run_training, Checkpoint, CheckpointManifest,
    CheckpointPolicy, ClassifierEval, Pool, TrainData, TrainStart, TrainStatus,
};
use effort_core::{Error, Result};
use effort_service::ServiceConfig;
use ndarray::{concatenate, s, Axis};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RunPaths};

/// RNG streams of the evaluation samples, offset by class.
const EVAL_STREAM: u64 = 0x4556_0000;
/// At most this many training windows calibrate the danceability thresholds.
const CALIBRATION_WINDOWS: usize = 4000;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments) {
    // the summary is informational; a closed stdout must not fail a command
    let _ = writeln!(out, "{line}");
}

// ---- ingest ------------------------------------------------------------

/// Loads or synthesizes clips, normalizes them into the unit box and caches
/// the result; labels from an import file or a simulated annotator go to
/// the run's label CSV.
pub fn ingest(cfg: &RunConfig, out: &mut dyn Write) -> Result<DatasetSummary> {
    let paths = cfg.paths();
    let (clips, truth, frequencies) = if cfg.data.synthetic {
        let synth = synth_dataset(&cfg.data.synth)?;
        (synth.clips, Some(synth.labels), Some(synth.class_frequencies))
    } else {
        let source = cfg
            .data
            .source
            .as_ref()
            .ok_or_else(|| Error::Config("data.source is required unless data.synthetic is set".into()))?;
        if !source.exists() {
            return Err(Error::Config(format!("source {} does not exist", source.display())));
        }
        let format = match &cfg.data.format {
            Some(f) => f.parse::<ClipFormat>()?,
            None => ClipFormat::from_path(source).ok_or_else(|| {
                Error::Config(format!("cannot infer the clip format of {}; set data.format", source.display()))
            })?,
        };
        let options = LoadOptions {
            fps: cfg.data.fps,
            skeleton: None,
        };
        (load_clips(source, format, &options)?, None, None)
    };
    if cfg.labels.simulate_fraction.is_some() && truth.is_none() {
        return Err(Error::Config("labels.simulate_fraction needs synthetic data".into()));
    }

    let (clips, spec) = normalize_dataset(&clips, cfg.data.barycenter)?;
    let cache = DatasetCache::new(
        clips,
        spec,
        cfg.data.seq_len,
        cfg.data.stride,
        cfg.data.class_names.clone(),
        frequencies,
    )?;
    cache.save(&paths.dataset)?;
    let summary = cache.summary.clone();

    let mut store = LabelStore::open(&paths.labels, summary.seq_len, summary.classes)?;
    if let Some(import) = &cfg.labels.import {
        let table = read_table_csv(import, summary.seq_len, summary.classes)?;
        let grid = grid_of(&summary);
        if let Some(r) = table.records().find(|r| !grid.is_valid(&r.clip_id, r.start_frame)) {
            return Err(Error::Precondition(format!(
                "imported label {}@{} is not a window of the dataset",
                r.clip_id, r.start_frame
            )));
        }
        store.merge(&table)?;
    }
    if let (Some(fraction), Some(truth)) = (cfg.labels.simulate_fraction, &truth) {
        let manual = simulate_manual_labels(truth, &grid_of(&summary), fraction, cfg.labels.simulate_run, cfg.seed)?;
        store.merge(&manual)?;
    }
    cfg.record("ingest")?;

    say(
        out,
        format_args!(
            "{} clips, {} frames, J={}, {} windows (T={}, stride={})",
            summary.clips, summary.frames, summary.joints, summary.window_count, summary.seq_len, summary.stride
        ),
    );
    say(out, format_args!("{} labels in {}", store.table().len(), paths.labels.display()));
    say(out, format_args!("dataset cached in {}", paths.dataset.display()));
    Ok(summary)
}

fn grid_of(summary: &DatasetSummary) -> WindowGrid {
    WindowGrid::new(
        summary.seq_len,
        summary.stride,
        summary.clip_list.iter().map(|c| (c.id.clone(), c.frames)),
    )
}

fn load_cache(paths: &RunPaths) -> Result<DatasetCache> {
    if !paths.dataset.exists() {
        return Err(Error::Config(format!(
            "no dataset in {}; run `effort ingest` first",
            paths.dataset.display()
        )));
    }
    DatasetCache::load(&paths.dataset)
}

// ---- augment -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub manual: usize,
    pub after_between: usize,
    pub augmented: usize,
    pub windows: usize,
    /// Labeled share of all windows after augmentation, in percent.
    pub percent: f64,
    pub between: bool,
    pub radius: usize,
    pub manual_histogram: ClassHistogram,
    pub augmented_histogram: ClassHistogram,
    pub labels_sha256: String,
    pub output_sha256: String,
    pub config_sha256: String,
}

impl AugmentReport {
    pub fn headline(&self) -> String {
        format!(
            "{} manual → {} augmented ({:.2}% of dataset)",
            self.manual, self.augmented, self.percent
        )
    }
}

/// Between-fill then dilation over the manual labels of the run.
pub fn augment(cfg: &RunConfig, out: &mut dyn Write) -> Result<AugmentReport> {
    let paths = cfg.paths();
    let cache = load_cache(&paths)?;
    let summary = &cache.summary;
    let stored = read_table_csv(&paths.labels, summary.seq_len, summary.classes)?;
    let mut manual = LabelTable::new(summary.seq_len, summary.classes);
    for r in stored.records().filter(|r| !r.source.is_augmented()) {
        manual.insert(r.clone())?;
    }
    let grid = grid_of(summary);
    let filled = if cfg.labels.between {
        augment_between(&manual, &grid)
    } else {
        manual.clone()
    };
    let augmented = if cfg.labels.radius > 0 {
        augment_dilate(&filled, &grid, cfg.labels.radius)
    } else {
        filled.clone()
    };
    write_table_csv(&augmented, &paths.augmented)?;

    let windows = grid.window_total();
    let report = AugmentReport {
        manual: manual.len(),
        after_between: filled.len(),
        augmented: augmented.len(),
        windows,
        percent: 100.0 * augmented.len() as f64 / windows.max(1) as f64,
        between: cfg.labels.between,
        radius: cfg.labels.radius,
        manual_histogram: class_histogram(&manual),
        augmented_histogram: class_histogram(&augmented),
        labels_sha256: file_sha256(&paths.labels)?,
        output_sha256: file_sha256(&paths.augmented)?,
        config_sha256: cfg.sha256()?,
    };
    write_json(&paths.augment_report, &report)?;
    cfg.record("augment")?;

    say(out, format_args!("{}", report.headline()));
    let names = ClassNames(summary.class_names.clone());
    for (c, name) in names.0.iter().enumerate() {
        say(
            out,
            format_args!(
                "  {name:<10} {:>7} → {:>7}",
                report.manual_histogram.counts[c], report.augmented_histogram.counts[c]
            ),
        );
    }
    Ok(report)
}

/// Labels used for training and evaluation: augmented when present.
fn training_labels(paths: &RunPaths, summary: &DatasetSummary) -> Result<(PathBuf, LabelTable)> {
    let path = if paths.augmented.exists() {
        paths.augmented.clone()
    } else {
        paths.labels.clone()
    };
    let table = read_table_csv(&path, summary.seq_len, summary.classes)?;
    Ok((path, table))
}

fn check_grid(cfg: &RunConfig, summary: &DatasetSummary) -> Result<()> {
    if (cfg.data.seq_len, cfg.data.stride, cfg.data.class_names.len())
        != (summary.seq_len, summary.stride, summary.classes)
    {
        return Err(Error::Config(format!(
            "dataset was ingested with T={} stride={} k={}, config asks for T={} stride={} k={}",
            summary.seq_len,
            summary.stride,
            summary.classes,
            cfg.data.seq_len,
            cfg.data.stride,
            cfg.data.class_names.len()
        )));
    }
    Ok(())
}

fn check_model(model: &Model, summary: &DatasetSummary) -> Result<()> {
    let m = model.config();
    if (m.seq_len, m.joints, m.classes) != (summary.seq_len, summary.joints, summary.classes) {
        return Err(Error::Config(format!(
            "checkpoint expects T={} J={} k={}, dataset has T={} J={} k={}",
            m.seq_len, m.joints, m.classes, summary.seq_len, summary.joints, summary.classes
        )));
    }
    Ok(())
}

// ---- train -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    #[serde(flatten)]
    pub status: TrainStatus,
    pub epochs_run: usize,
    pub first_loss: Option<f64>,
    pub last_loss: Option<f64>,
    /// `1 − last / first` of the per-epoch mean training loss.
    pub loss_drop: Option<f64>,
    pub last_val_accuracy: Option<f64>,
    pub selected_epoch: Option<usize>,
    pub alpha: f64,
    pub pools: BTreeMap<String, usize>,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub atlas_sha256: String,
    pub labels_sha256: String,
    pub config_sha256: String,
    pub seconds: f64,
}

/// Trains on the split of the current labels, writing the epoch log,
/// checkpoints, the latent atlas of the selected parameters and a report.
/// A run aborted on non-finite values still writes its artifacts, then
/// fails with a numeric error.
pub fn train(cfg: &RunConfig, resume: Option<&Path>, out: &mut dyn Write) -> Result<TrainReport> {
    let started = Instant::now();
    let mut cfg = cfg.clone();
    let paths = cfg.paths();
    let cache = load_cache(&paths)?;
    let summary = cache.summary.clone();
    check_grid(&cfg, &summary)?;
    let ds = cache.dataset();
    let (labels_path, table) = training_labels(&paths, &summary)?;
    let assignment = split(&ds, &table, &cfg.split, cfg.seed)?;
    assignment.save(&paths.split)?;
    let data = TrainData::from_split(&ds, &table, &assignment)?;

    let start = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            cfg.model = ck.manifest.model.clone();
            TrainStart::Resume(Box::new(ck))
        }
        None => {
            cfg.model.joints = summary.joints;
            if cfg.standardize_inputs {
                let x = concatenate(Axis(0), &[data.labeled_train.x.view(), data.unlabeled_train.x.view()])
                    .map_err(|e| Error::Precondition(e.to_string()))?;
                cfg.model.input_norm = Some(InputNorm::fit(&x, 3 * summary.joints)?);
            }
            TrainStart::Fresh(Model::new(cfg.model.clone())?.init_params(cfg.seed))
        }
    };
    let model = Model::new(cfg.model.clone())?;
    check_model(&model, &summary)?;
    cfg.record("train")?;
    let config_sha256 = cfg.sha256()?;

    let mut extra = BTreeMap::new();
    extra.insert("config_sha256".to_string(), config_sha256.clone().into());
    extra.insert("class_names".to_string(), serde_json::to_value(&summary.class_names)?);
    extra.insert("normalization".to_string(), serde_json::to_value(&summary.normalization)?);
    extra.insert("labels_sha256".to_string(), file_sha256(&labels_path)?.into());
    let policy = CheckpointPolicy {
        dir: paths.checkpoints.clone(),
        extra,
    };

    let log_file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .open(&paths.train_log)
        .map_err(|e| Error::io(&paths.train_log, e))?;
    let mut log = BufWriter::new(log_file);
    let outcome = run_training(&model, start, &data, &cfg.train, Some(&policy), |line| {
        let text = serde_json::to_string(line)?;
        writeln!(log, "{text}")
            .and_then(|_| log.flush())
            .map_err(|e| Error::io(&paths.train_log, e))?;
        let val = line.val_acc.map(|a| format!(" val_acc {a:.3}")).unwrap_or_default();
        say(out, format_args!("epoch {:>4}  loss {:.4}{val}", line.epoch, line.total));
        Ok(())
    })?;
    drop(log);

    let atlas = build_atlas(
        &model,
        &outcome.selected,
        &data.labeled_train.x,
        &data.labeled_train.labels,
        cfg.generate.lambda,
    )?;
    write_text(&paths.atlas, &atlas.to_json()?)?;

    let checkpoint = outcome
        .checkpoint_paths
        .last()
        .cloned()
        .unwrap_or_else(|| paths.final_checkpoint.clone());
    let first = outcome.history.first().map(|l| l.total);
    let last = outcome.history.last().map(|l| l.total);
    let pools = [
        ("labeled_train", data.labeled_train.len()),
        ("unlabeled_train", data.unlabeled_train.len()),
        ("labeled_val", data.labeled_val.len()),
        ("unlabeled_val", data.unlabeled_val.len()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let report = TrainReport {
        status: outcome.status.clone(),
        epochs_run: outcome.history.len(),
        first_loss: first,
        last_loss: last,
        loss_drop: first.zip(last).map(|(f, l)| 1.0 - l / f),
        last_val_accuracy: outcome.history.last().and_then(|l| l.val_acc),
        selected_epoch: outcome.selected_epoch,
        alpha: outcome.alpha,
        pools,
        checkpoint: checkpoint.clone(),
        checkpoint_sha256: outcome.last.manifest.tensors_sha256.clone(),
        atlas_sha256: atlas.sha256()?,
        labels_sha256: file_sha256(&labels_path)?,
        config_sha256,
        seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&paths.train_report, &report)?;
    say(out, format_args!("checkpoint {}", checkpoint.display()));

    if let TrainStatus::Aborted { epoch, reason } = &outcome.status {
        return Err(Error::Numeric {
            op: format!("training epoch {epoch}: {reason}"),
        });
    }
    Ok(report)
}

// ---- shared model loading ----------------------------------------------

struct Trained {
    model: Model,
    params: ParamSet,
    manifest: CheckpointManifest,
    atlas: LatentAtlas,
    summary: DatasetSummary,
    cache: DatasetCache,
    labels: LabelTable,
    split: SplitAssignment,
}

fn load_trained(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Trained> {
    let paths = cfg.paths();
    let cache = load_cache(&paths)?;
    let summary = cache.summary.clone();
    let ck_path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| paths.final_checkpoint.clone());
    if !ck_path.exists() {
        return Err(Error::Config(format!(
            "checkpoint {} does not exist; run `effort train` first",
            ck_path.display()
        )));
    }
    let (model, params, manifest) = load_model(&ck_path)?;
    check_model(&model, &summary)?;
    let (_, labels) = training_labels(&paths, &summary)?;
    let split = SplitAssignment::load(&paths.split)?;

    // the stored atlas belongs to the final checkpoint; any other one gets
    // its atlas rebuilt from the labeled training pool
    let is_default = checkpoint.is_none() || same_file(&ck_path, &paths.final_checkpoint);
    let atlas = if is_default && paths.atlas.exists() {
        let text = fs::read_to_string(&paths.atlas).map_err(|e| Error::io(&paths.atlas, e))?;
        LatentAtlas::from_json(&text)?
    } else {
        let pool = Pool::from_split(&cache.dataset(), &labels, &split, Partition::LabeledTrain)?;
        build_atlas(&model, &params, &pool.x, &pool.labels, cfg.generate.lambda)?
    };
    Ok(Trained {
        model,
        params,
        manifest,
        atlas,
        summary,
        cache,
        labels,
        split,
    })
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn sequences_of(x: &Mat, joints: usize, ids: &[String]) -> Vec<Sequence> {
    x.rows()
        .into_iter()
        .zip(ids)
        .map(|(row, id)| Sequence::from_flat(id.clone(), 0, joints, &row.to_vec()))
        .collect()
}

// ---- eval --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint_sha256: String,
    pub atlas_sha256: String,
    pub config_sha256: String,
    pub validation: Option<ClassifierEval>,
    pub test: Option<ClassifierEval>,
    /// Mean joint distance of posterior-mean reconstructions of the
    /// held-out windows.
    pub heldout_ajd: Option<f64>,
    pub heldout_windows: usize,
    pub samples_per_class: usize,
    pub danceability: DanceabilityReport,
    /// Spectral recovery of the intended class; synthetic data only.
    pub recovery: Option<RecoveryReport>,
}

/// Classifier accuracy, held-out reconstruction distance, danceability and
/// label recovery of generated sequences.
pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, out: &mut dyn Write) -> Result<EvalReport> {
    let paths = cfg.paths();
    let t = load_trained(cfg, checkpoint)?;
    let (model, params) = (&t.model, &t.params);
    let ds = t.cache.dataset();
    let joints = t.summary.joints;
    let pool = |p| Pool::from_split(&ds, &t.labels, &t.split, p);
    let classify = |p: &Pool| (!p.is_empty()).then(|| evaluate_classifier(model, params, p)).transpose();

    let labeled_val = pool(Partition::LabeledVal)?;
    let labeled_test = pool(Partition::LabeledTest)?;
    let unlabeled_test = pool(Partition::UnlabeledTest)?;
    let validation = classify(&labeled_val)?;
    let test = classify(&labeled_test)?;

    // unlabeled held-out windows are reconstructed under the predicted label
    let mut heldout_x = Vec::new();
    let mut heldout_y = Vec::new();
    if !labeled_test.is_empty() {
        heldout_x.push(labeled_test.x.view());
        heldout_y.extend_from_slice(&labeled_test.labels);
    }
    if !unlabeled_test.is_empty() {
        heldout_x.push(unlabeled_test.x.view());
        heldout_y.extend(predict(model, params, &unlabeled_test.x)?);
    }
    let heldout_ajd = if heldout_x.is_empty() {
        None
    } else {
        let x = concatenate(Axis(0), &heldout_x).map_err(|e| Error::Precondition(e.to_string()))?;
        let x_hat = reconstruct_means(model, params, &x, &heldout_y)?;
        Some(ajd_flat(&x, &x_hat)?)
    };

    let train_pool = pool(Partition::LabeledTrain)?;
    let n_cal = train_pool.len().min(CALIBRATION_WINDOWS);
    let calibration = sequences_of(
        &train_pool.x.slice(s![0..n_cal, ..]).to_owned(),
        joints,
        &train_pool.ids[..n_cal],
    );
    let edges = &t.summary.skeleton;
    let thresholds = if calibration.is_empty() {
        DanceabilityThresholds {
            box_margin: cfg.eval.box_margin,
            ..DanceabilityThresholds::default()
        }
    } else {
        DanceabilityThresholds::calibrate(&calibration, edges, cfg.eval.calibration_quantile, cfg.eval.box_margin)?
    };

    let k = model.config().classes;
    let n = cfg.eval.samples_per_class;
    let generated = (0..k)
        .map(|c| {
            let mut rng = RngStream::substream(cfg.seed, EVAL_STREAM + c as u64);
            sample_conditional(model, params, &t.atlas, c, n, cfg.generate.sampling, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<Sequence> = generated.iter().flatten().cloned().collect();
    let dance = danceability(&all, edges, &thresholds)?;
    let recovery = match &t.summary.class_frequencies {
        Some(freqs) => {
            let oracle = SpectralOracle::new(freqs.clone());
            Some(effort_recovery(&generated, |seq| oracle.classify(seq))?)
        }
        None => None,
    };

    let report = EvalReport {
        checkpoint_sha256: t.manifest.tensors_sha256.clone(),
        atlas_sha256: t.atlas.sha256()?,
        config_sha256: cfg.sha256()?,
        validation,
        test,
        heldout_ajd,
        heldout_windows: heldout_y.len(),
        samples_per_class: n,
        danceability: dance,
        recovery,
    };
    fs::create_dir_all(&paths.eval).map_err(|e| Error::io(&paths.eval, e))?;
    write_json(&paths.eval.join("eval_report.json"), &report)?;
    if let Some(v) = &report.validation {
        write_text(&paths.eval.join("confusion_val.csv"), &confusion_csv(&v.confusion))?;
    }
    if let Some(v) = &report.test {
        write_text(&paths.eval.join("confusion_test.csv"), &confusion_csv(&v.confusion))?;
    }
    if let Some(r) = &report.recovery {
        write_text(&paths.eval.join("recovery.csv"), &r.to_csv())?;
    }
    cfg.record("eval")?;

    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    say(out, format_args!("validation accuracy {}", fmt(report.validation.as_ref().map(|v| v.accuracy))));
    say(out, format_args!("test accuracy       {}", fmt(report.test.as_ref().map(|v| v.accuracy))));
    say(out, format_args!("held-out AJD        {}", fmt(report.heldout_ajd)));
    say(out, format_args!("danceability        {:.4}", report.danceability.pass_rate));
    say(out, format_args!("spectral recovery   {}", fmt(report.recovery.as_ref().map(|r| r.accuracy))));
    Ok(report)
}

// ---- generate ----------------------------------------------------------

/// Decodes `generate.count` atlas samples of the requested class into
/// `generated/<label>_seed<seed>/`.
pub fn generate(cfg: &RunConfig, checkpoint: Option<&Path>, out: &mut dyn Write) -> Result<GenerationManifest> {
    let paths = cfg.paths();
    let label_text = cfg
        .generate
        .label
        .as_deref()
        .ok_or_else(|| Error::Config("generate needs a label (--label)".into()))?;
    if cfg.generate.count == 0 {
        return Err(Error::Config("generate.count must be positive".into()));
    }
    let format: ClipFormat = cfg.generate.format.parse()?;
    let t = load_trained(cfg, checkpoint)?;
    let names = ClassNames(t.summary.class_names.clone());
    let y = names.parse(label_text).map_err(|e| Error::Config(e.to_string()))?.value();

    let mut rng = RngStream::new(cfg.seed);
    let sequences = sample_conditional(
        &t.model,
        &t.params,
        &t.atlas,
        y,
        cfg.generate.count,
        cfg.generate.sampling,
        &mut rng,
    )?;
    let dir = paths
        .generated
        .join(format!("{}_seed{}", names.0[y].to_lowercase(), cfg.seed));
    let skeleton = (!t.summary.skeleton.is_empty()).then(|| t.summary.skeleton.clone());
    let manifest = export_generated(
        &dir,
        &sequences,
        t.summary.fps,
        skeleton,
        format,
        GenerationManifest {
            label: Some(y),
            labels: vec![y; sequences.len()],
            seed: cfg.seed,
            count: sequences.len(),
            source: "conditional".into(),
            sampling: Some(cfg.generate.sampling),
            atlas_sha256: Some(t.atlas.sha256()?),
            checkpoint_sha256: Some(t.manifest.tensors_sha256.clone()),
            files: Vec::new(),
        },
    )?;
    write_text(&dir.join("run_config.toml"), &cfg.to_toml()?)?;
    cfg.record("generate")?;
    say(
        out,
        format_args!("{} {} sequences in {}", manifest.count, names.0[y], dir.display()),
    );
    Ok(manifest)
}

// ---- serve -------------------------------------------------------------

/// Service settings: run-directory artifacts and `[serve]` first, then
/// `EFFORT_*` variables from `env`.
pub fn service_config(cfg: &RunConfig, env: impl Fn(&str) -> Option<String>) -> Result<ServiceConfig> {
    let paths = cfg.paths();
    let mut defaults: BTreeMap<String, String> = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        defaults.insert(format!("{}{k}", effort_service::ENV_PREFIX), v);
    };
    put("HOST", cfg.serve.host.clone());
    put("PORT", cfg.serve.port.to_string());
    put("MAX_GENERATE", cfg.serve.max_generate.to_string());
    if paths.dataset.exists() {
        put("DATASET", paths.dataset.display().to_string());
        put("LABELS", paths.labels.display().to_string());
    }
    if paths.final_checkpoint.exists() && paths.atlas.exists() {
        put("CHECKPOINT", paths.final_checkpoint.display().to_string());
        put("ATLAS", paths.atlas.display().to_string());
    }
    ServiceConfig::from_lookup(|k| env(k).filter(|v| !v.is_empty()).or_else(|| defaults.get(k).cloned()))
}

/// Runs the HTTP service until the process is stopped.
pub fn serve(config: ServiceConfig, out: &mut dyn Write) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("<tokio runtime>", e))?;
    say(out, format_args!("listening on http://{}:{}", config.host, config.port));
    runtime.block_on(effort_service::serve(config))
}
