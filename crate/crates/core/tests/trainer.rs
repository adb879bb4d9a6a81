use effort_core::diff::{AdamConfig, AdamState, Mat, ParamSet, RngStream};
use effort_core::labels::{augment_between, augment_dilate, simulate_manual_labels, WindowGrid};
use effort_core::model::{InputNorm, Model, ModelConfig};
use effort_core::motion::{normalize_dataset, split, synth_dataset, BarycenterMode, Dataset, Partition, SplitFractions, SynthConfig};
use effort_core::objective::{evaluate, evaluate_with_grad, Batch, LossNoise};
use effort_core::trainer::{
    train, Checkpoint, CheckpointPolicy, Criterion, EpochLog, TrainConfig, TrainData, TrainStart, TrainStatus,
};
use effort_core::Error;

struct Fixture {
    model: Model,
    data: TrainData,
}

fn fixture() -> Fixture {
    let synth = synth_dataset(&SynthConfig {
        clips: 3,
        frames_per_clip: 150,
        joints: 3,
        seq_len: 8,
        stride: 2,
        seed: 11,
        ..SynthConfig::default()
    })
    .unwrap();
    let (clips, _) = normalize_dataset(&synth.clips, BarycenterMode::FixedXy).unwrap();
    let ds = Dataset::new(clips, 8, 2).unwrap();
    let grid = WindowGrid::from_dataset(&ds);
    let manual = simulate_manual_labels(&synth.labels, &grid, 0.1, 2, 11).unwrap();
    let labels = augment_dilate(&augment_between(&manual, &grid), &grid, 2);
    let fractions = SplitFractions {
        labeled: effort_core::motion::PoolFractions::new(0.6, 0.2, 0.2),
        ..SplitFractions::default()
    };
    let sp = split(&ds, &labels, &fractions, 11).unwrap();
    let data = TrainData::from_split(&ds, &labels, &sp).unwrap();
    assert!(!data.labeled_train.is_empty() && !data.unlabeled_train.is_empty() && !data.labeled_val.is_empty());
    let norm = InputNorm::fit(&data.unlabeled_train.x, 9).unwrap();
    let model = Model::new(ModelConfig {
        seq_len: 8,
        joints: 3,
        latent_dim: 3,
        encoder_width: 6,
        decoder_width: 6,
        decoder_input_width: 5,
        classifier_hidden: vec![8],
        output_variance: 0.01,
        input_norm: Some(norm),
        ..ModelConfig::desk()
    })
    .unwrap();
    Fixture { model, data }
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: 3e-3,
        seed: 5,
        checkpoint_every: 2,
        max_steps_per_epoch: Some(4),
        ..TrainConfig::default()
    }
}

fn values(ps: &ParamSet) -> Vec<Mat> {
    ps.iter().map(|t| t.value().to_owned()).collect()
}

fn run(f: &Fixture, start: TrainStart, cfg: &TrainConfig, policy: Option<&CheckpointPolicy>) -> (effort_core::trainer::TrainOutcome, Vec<EpochLog>) {
    let mut seen = Vec::new();
    let out = train(&f.model, start, &f.data, cfg, policy, |l| {
        seen.push(l.clone());
        Ok(())
    })
    .unwrap();
    (out, seen)
}

#[test]
fn zero_epochs_returns_initial_params() {
    let f = fixture();
    let init = f.model.init_params(1);
    let (out, seen) = run(&f, TrainStart::Fresh(init.clone()), &config(0), None);
    assert!(out.history.is_empty() && seen.is_empty());
    assert_eq!(values(&out.selected), values(&init));
    assert_eq!(out.status, TrainStatus::Completed);
}

#[test]
fn same_seed_gives_bitwise_identical_curves() {
    let f = fixture();
    let cfg = config(3);
    let (a, seen) = run(&f, TrainStart::Fresh(f.model.init_params(1)), &cfg, None);
    let (b, _) = run(&f, TrainStart::Fresh(f.model.init_params(1)), &cfg, None);
    assert_eq!(a.history, b.history);
    assert_eq!(a.history, seen);
    assert_eq!(values(&a.last.params), values(&b.last.params));
    let (c, _) = run(&f, TrainStart::Fresh(f.model.init_params(1)), &TrainConfig { seed: 6, ..cfg }, None);
    assert_ne!(a.history[0].total, c.history[0].total);
    assert!(a.history.iter().all(|l| l.val_acc.is_some() && l.val_loss.is_some()));
}

#[test]
fn resume_continues_bit_identically() {
    let f = fixture();
    let cfg = config(4);
    let dir = tempfile::tempdir().unwrap();
    let policy = CheckpointPolicy {
        dir: dir.path().to_path_buf(),
        extra: Default::default(),
    };
    let (full, _) = run(&f, TrainStart::Fresh(f.model.init_params(1)), &cfg, Some(&policy));
    let names: Vec<String> = full
        .checkpoint_paths
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["epoch_0002.json", "epoch_0004.json", "final.json"]);

    let mid = Checkpoint::load(&dir.path().join("epoch_0002.json")).unwrap();
    assert_eq!(mid.manifest.epoch, 2);
    let (resumed, _) = run(&f, TrainStart::Resume(Box::new(mid)), &cfg, None);
    assert_eq!(resumed.history, full.history[2..]);
    assert_eq!(values(&resumed.last.params), values(&full.last.params));
    assert_eq!(resumed.last.adam.first_moment, full.last.adam.first_moment);
    assert_eq!(resumed.selected_epoch, full.selected_epoch);
}

#[test]
fn checkpoint_round_trip_and_tamper_detection() {
    let f = fixture();
    let (mut out, _) = run(&f, TrainStart::Fresh(f.model.init_params(2)), &config(1), None);
    let dir = tempfile::tempdir().unwrap();
    let path = out.last.save(dir.path(), "ck").unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.manifest, out.last.manifest);
    assert_eq!(values(&back.params), values(&out.last.params));
    assert_eq!(back.adam.second_moment, out.last.adam.second_moment);
    assert_eq!(back.adam.step, out.last.adam.step);
    assert_eq!(back.selected.as_ref().map(values), out.last.selected.as_ref().map(values));

    let bin = dir.path().join("ck.bin");
    let mut bytes = std::fs::read(&bin).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&bin, bytes).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn watch_criterion_selects_best_validation_accuracy() {
    let f = fixture();
    let cfg = TrainConfig {
        criterion: Criterion::Watch,
        ..config(4)
    };
    let (out, _) = run(&f, TrainStart::Fresh(f.model.init_params(1)), &cfg, None);
    let best = out
        .history
        .iter()
        .fold(None::<&EpochLog>, |b, l| match b {
            Some(b) if b.val_acc >= l.val_acc => Some(b),
            _ => Some(l),
        })
        .unwrap();
    assert_eq!(out.selected_epoch, Some(best.epoch));
}

#[test]
fn training_pool_windows_must_belong_to_their_partition() {
    let mut f = fixture();
    let leaked = f
        .data
        .split()
        .assignments
        .iter()
        .find(|(_, p)| **p == Partition::LabeledTest)
        .map(|(id, _)| id.clone())
        .unwrap();
    f.data.labeled_train.ids[0] = leaked;
    let err = train(&f.model, TrainStart::Fresh(f.model.init_params(1)), &f.data, &config(1), None, |_| Ok(())).unwrap_err();
    assert!(matches!(err, Error::Precondition(m) if m.contains("training batch")));
}

#[test]
fn empty_labeled_pool_is_a_precondition_error() {
    let mut f = fixture();
    f.data.labeled_train.ids.clear();
    f.data.labeled_train.labels.clear();
    f.data.labeled_train.x = Mat::zeros((0, f.data.labeled_train.x.ncols()));
    let err = train(&f.model, TrainStart::Fresh(f.model.init_params(1)), &f.data, &config(1), None, |_| Ok(())).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn divergence_aborts_with_last_good_params() {
    let f = fixture();
    let init = f.model.init_params(1);
    let cfg = TrainConfig {
        learning_rate: 1e300,
        ..config(3)
    };
    let dir = tempfile::tempdir().unwrap();
    let policy = CheckpointPolicy {
        dir: dir.path().to_path_buf(),
        extra: Default::default(),
    };
    let (out, _) = run(&f, TrainStart::Fresh(init.clone()), &cfg, Some(&policy));
    assert!(matches!(out.status, TrainStatus::Aborted { epoch: 1, .. }));
    assert_eq!(values(&out.last.params), values(&init));
    assert!(out.checkpoint_paths.last().unwrap().ends_with("last_good.json"));
}

#[test]
fn small_adam_step_reduces_batch_loss() {
    let f = fixture();
    let mut params = f.model.init_params(3);
    let lab = &f.data.labeled_train;
    let unl = &f.data.unlabeled_train;
    let n = lab.len().min(8);
    let batch = Batch::new(
        lab.x.slice(ndarray::s![0..n, ..]).to_owned(),
        lab.labels[..n].to_vec(),
        unl.x.slice(ndarray::s![0..8, ..]).to_owned(),
    );
    let noise = LossNoise::draw(&mut RngStream::new(1), n, 8, 3);
    let mut adam = AdamState::new(AdamConfig { learning_rate: 1e-5, ..AdamConfig::default() }, &params);
    let (before, grads) = evaluate_with_grad(&f.model, &params, &batch, 0.5, &noise).unwrap();
    params.set_grads(grads);
    adam.step(&mut params).unwrap();
    let after = evaluate(&f.model, &params, &batch, 0.5, &noise).unwrap();
    assert!(after.total < before.total, "{} → {}", before.total, after.total);
}
