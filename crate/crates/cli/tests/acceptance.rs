//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
//! criterion fails. Run with `cargo test -p effort-cli --test acceptance`.

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use effort_cli::commands;
use effort_cli::RunConfig;
use effort_core::diff::{grad_check, GradCheckOptions, Graph, RngStream, Var};
use effort_core::labels::{augment_between, augment_dilate, read_table_csv};
use effort_core::metrics::ajd;
use effort_core::model::{ClassPosterior, GaussianPosterior, InputNorm, LabelInjection, Model, ModelConfig};
use effort_core::motion::{
    extract_windows, normalize, window_count, BarycenterMode, MotionClip, Pose,
};
use effort_core::objective::{build_loss, evaluate, kl_gaussian, Batch, LossNoise};
use effort_service::{serve_on, ServiceConfig, SessionState, SCHEMA_VERSION};
use ndarray::Array2;
use oracles::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn desk_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

fn run_config(path: &Path, out: &Path, edit: impl FnOnce(&mut RunConfig)) -> RunConfig {
    let mut cfg = RunConfig::load(path).unwrap();
    cfg.out = out.to_path_buf();
    edit(&mut cfg);
    cfg.resolve().unwrap()
}

// ---- gradients ---------------------------------------------------------

fn grad_case(cfg: ModelConfig, n_l: usize, n_u: usize, sample: Option<usize>, step: f64) -> Result<f64, String> {
    let model = Model::new(cfg).map_err(err)?;
    let params = model.init_params(17);
    let mut rng = RngStream::new(23);
    let width = model.config().sequence_dim();
    let mut rows = |n: usize| Array2::from_shape_fn((n, width), |_| 0.5 + 0.15 * rng.normal());
    let (labeled, unlabeled) = (rows(n_l), rows(n_u));
    let batch = Batch::new(labeled, (0..n_l).map(|i| i % 3).collect(), unlabeled);
    let noise = LossNoise::draw(&mut rng, n_l, n_u, model.config().latent_dim);
    let objective =
        |g: &mut Graph, p: &[Var]| -> effort_core::Result<Var> { Ok(build_loss(g, &model, p, &batch, 0.5, &noise)?.total) };
    let opts = GradCheckOptions {
        step,
        max_entries_per_tensor: sample,
        seed: 3,
        ..GradCheckOptions::default()
    };
    let report = grad_check(&params, objective, opts).map_err(err)?;
    ensure(report.passed(), || format!("failing tensors {:?}", report.failing()))?;
    Ok(report.max_relative_error())
}

fn gradient_correctness() -> Check {
    let started = Instant::now();
    let desk = ModelConfig::desk();
    let mut rng = RngStream::new(41);
    let frame = 3 * desk.joints;
    let norm = InputNorm {
        mean: (0..frame).map(|_| 0.5 + 0.1 * rng.normal()).collect(),
        scale: (0..frame).map(|_| 0.05 + 0.1 * rng.uniform()).collect(),
    };
    let standardized = ModelConfig {
        input_norm: Some(norm),
        ..desk.clone()
    };
    let cases = [
        ("mixed batch, every entry", desk.clone(), 1, 1, None),
        ("labeled only", desk.clone(), 3, 0, Some(64)),
        ("unlabeled only", desk.clone(), 0, 3, Some(64)),
        ("standardized inputs", standardized.clone(), 2, 2, Some(64)),
        (
            "per-frame label injection",
            ModelConfig {
                label_injection: LabelInjection::PerFrame,
                ..desk.clone()
            },
            2,
            2,
            Some(64),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (name, cfg, n_l, n_u, sample) in cases {
        let e = grad_case(cfg, n_l, n_u, sample, 1e-5).map_err(|m| format!("{name}: {m}"))?;
        worst = worst.max(e);
    }
    // the training variance scales the loss by 1e4, which puts h = 1e-5 in
    // the roundoff regime; a wider step checks the same path
    let training = ModelConfig {
        output_variance: 1e-4,
        ..standardized
    };
    let wide = grad_case(training, 2, 2, Some(64), 1e-4).map_err(|m| format!("output variance 1e-4: {m}"))?;
    let elapsed = started.elapsed();
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "max relative error {worst:.2e} over 5 desk paths (h=1e-5), {wide:.2e} at output variance 1e-4 (h=1e-4)"
    ))
}

// ---- objective identities ----------------------------------------------

fn objective_identities() -> Check {
    ensure(kl_gaussian(&GaussianPosterior::standard(8)) == 0.0, || "KL(N(0,I) ‖ N(0,I)) ≠ 0".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_kl: f64 = 0.0;
    for _ in 0..10 {
        let d = rng.random_range(1..=8);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let log_variance: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.0)).collect();
        let exact = kl_gaussian(&GaussianPosterior {
            mean: mean.clone(),
            log_variance: log_variance.clone(),
        });
        let mc = kl_monte_carlo(&mean, &log_variance, 400_000, &mut rng);
        worst_kl = worst_kl.max((mc - exact).abs() / exact);
    }
    ensure(worst_kl <= 0.01, || format!("Monte-Carlo KL off by {:.2}%", 100.0 * worst_kl))?;

    // classifier forced one-hot onto class 1 through a dominant output bias
    let model = Model::new(ModelConfig::desk()).map_err(err)?;
    let mut params = model.init_params(3);
    params.get_mut("cls.out.w").ok_or("no classifier output weights")?.value_mut().fill(0.0);
    let mut bias = params.get_mut("cls.out.b").ok_or("no classifier output bias")?.value_mut();
    bias[[0, 0]] = -1000.0;
    bias[[0, 1]] = 1000.0;
    bias[[0, 2]] = -1000.0;
    let mut rs = RngStream::new(5);
    let width = model.config().sequence_dim();
    let latent = model.config().latent_dim;
    let x = Array2::from_shape_fn((16, width), |_| 0.5 + 0.2 * rs.normal());
    let noise = LossNoise::draw(&mut rs, 0, 16, latent);
    let empty = Array2::zeros((0, width));
    let u = evaluate(&model, &params, &Batch::new(empty.clone(), vec![], x.clone()), 0.0, &noise).map_err(err)?;
    let as_labeled = LossNoise {
        labeled: noise.unlabeled.clone(),
        unlabeled: Array2::zeros((0, latent)),
    };
    let l = evaluate(&model, &params, &Batch::new(x, vec![1; 16], empty), 0.0, &as_labeled).map_err(err)?;
    let gap = (u.unlabeled_term - l.labeled_term).abs();
    ensure(gap <= 1e-9, || format!("U − L = {gap:.3e} under a one-hot classifier"))?;

    let mut entropy_checked = 0;
    for i in 0..10_000 {
        let k = rng.random_range(1..=12);
        let sharp = [1.0, 20.0, 700.0][i % 3];
        let w: Vec<f64> = (0..k).map(|_| (sharp * rng.random::<f64>()).exp()).collect();
        let s: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|v| v / s).collect();
        if i % 7 == 0 {
            p.iter_mut().for_each(|v| *v = 0.0);
            p[rng.random_range(0..k)] = 1.0;
        }
        let h = ClassPosterior { probabilities: p }.entropy();
        ensure(h >= 0.0 && h <= (k as f64).ln() + 1e-12, || format!("entropy {h} outside [0, ln {k}]"))?;
        entropy_checked += 1;
    }
    Ok(format!(
        "KL MC worst {:.3}%, |U − L| {gap:.1e}, {entropy_checked} entropies in [0, ln k]",
        100.0 * worst_kl
    ))
}

// ---- augmentation ------------------------------------------------------

fn augmentation_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut filled = (0, 0);
    for case in 0..1000 {
        let RandomTable { table, grid, radius } = random_table(&mut rng);
        let between = augment_between(&table, &grid);
        ensure(entries(&between) == between_closure(&table, &grid), || format!("between differs, case {case}"))?;
        ensure(augment_between(&between, &grid) == between, || format!("between not idempotent, case {case}"))?;
        let dilated = augment_dilate(&table, &grid, radius);
        ensure(entries(&dilated) == dilate_closure(&table, &grid, radius), || format!("dilation differs, case {case}"))?;
        ensure(augment_dilate(&dilated, &grid, radius) == dilated, || format!("dilation not idempotent, case {case}"))?;
        filled.0 += between.len() - table.len();
        filled.1 += dilated.len() - table.len();
    }
    ensure(filled.0 > 1000 && filled.1 > 1000, || format!("rules barely exercised: {filled:?}"))?;
    Ok(format!(
        "1000 tables equal the closure oracle; {} between-filled and {} dilated windows",
        filled.0, filled.1
    ))
}

// ---- windowing and normalization ---------------------------------------

fn windowing_and_normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10_000 {
        let (n, t, stride) = (rng.random_range(0..600), rng.random_range(2..60), rng.random_range(1..12));
        let formula = if n >= t { (n - t) / stride + 1 } else { 0 };
        ensure(window_count(n, t, stride) == formula, || format!("window_count({n}, {t}, {stride})"))?;
        ensure(brute_window_count(n, t, stride) == formula, || format!("enumeration({n}, {t}, {stride})"))?;
    }
    for _ in 0..200 {
        let lens: Vec<usize> = (0..rng.random_range(1..5)).map(|_| rng.random_range(0..80)).collect();
        let (t, stride) = (rng.random_range(2..12), rng.random_range(1..5));
        let clips: Vec<MotionClip> = lens
            .iter()
            .enumerate()
            .map(|(c, &n)| {
                let frames = (0..n).map(|f| Pose { joints: vec![[c as f64, f as f64, 0.0]] }).collect();
                MotionClip::new(format!("c{c}"), 30.0, frames, None).unwrap()
            })
            .collect();
        let expected: usize = lens.iter().map(|&n| brute_window_count(n, t, stride)).sum();
        ensure(extract_windows(&clips, t, stride).map_err(err)?.len() == expected, || {
            format!("extract_windows over {lens:?}, T={t}, stride={stride}")
        })?;
    }

    let mut worst_round_trip: f64 = 0.0;
    let mut worst_barycenter: f64 = 0.0;
    for _ in 0..1000 {
        let joints = rng.random_range(1..8);
        let frames = rng.random_range(2..40);
        let spread: f64 = 10f64.powf(rng.random_range(-3.0..3.0));
        let drift = rng.random_range(-100.0..100.0);
        let poses: Vec<Pose> = (0..frames)
            .map(|t| Pose {
                joints: (0..joints)
                    .map(|_| {
                        [
                            spread * rng.random_range(-500.0..500.0) + drift * t as f64,
                            rng.random_range(-500.0..500.0) - drift * t as f64,
                            rng.random_range(-500.0..500.0) / spread,
                        ]
                    })
                    .collect(),
            })
            .collect();
        let clip = MotionClip::new("c", 30.0, poses, None).map_err(err)?;
        let (norm, spec) = normalize(&clip, BarycenterMode::None).map_err(err)?;
        let back = spec.invert(&norm);
        for (a, b) in clip.frames.iter().zip(&back.frames) {
            for (ja, jb) in a.joints.iter().zip(&b.joints) {
                for k in 0..3 {
                    worst_round_trip = worst_round_trip.max((ja[k] - jb[k]).abs() / ja[k].abs().max(1.0));
                }
            }
        }
        // centering discards each frame's xy translation and nothing else
        let (centered, spec) = normalize(&clip, BarycenterMode::FixedXy).map_err(err)?;
        let back = spec.invert(&centered);
        for ((a, b), f) in clip.frames.iter().zip(&back.frames).zip(&centered.frames) {
            let (ca, cb) = (a.xy_barycenter(), b.xy_barycenter());
            for (ja, jb) in a.joints.iter().zip(&b.joints) {
                let moved = [ja[0] - ca[0], ja[1] - ca[1], ja[2]];
                let restored = [jb[0] - cb[0], jb[1] - cb[1], jb[2]];
                for k in 0..3 {
                    worst_round_trip = worst_round_trip.max((moved[k] - restored[k]).abs() / ja[k].abs().max(1.0));
                }
            }
            let c = f.xy_barycenter();
            worst_barycenter = worst_barycenter.max((c[0] - 0.5).abs()).max((c[1] - 0.5).abs());
        }
    }
    ensure(worst_round_trip <= 1e-9, || format!("round trip error {worst_round_trip:.3e}"))?;
    ensure(worst_barycenter <= 1e-9, || format!("barycenter drift {worst_barycenter:.3e}"))?;
    Ok(format!(
        "10000 window counts, 200 clip sets; round trip {worst_round_trip:.1e}, barycenter {worst_barycenter:.1e}"
    ))
}

// ---- end-to-end --------------------------------------------------------

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = run_config(&desk_config(), &dir.path().join("run"), |_| ());
    let mut sink = io::sink();
    let started = Instant::now();
    commands::ingest(&cfg, &mut sink).map_err(err)?;
    let aug = commands::augment(&cfg, &mut sink).map_err(err)?;
    let train = commands::train(&cfg, None, &mut sink).map_err(err)?;
    let eval = commands::eval(&cfg, None, &mut sink).map_err(err)?;
    let elapsed = started.elapsed();

    let drop = train.loss_drop.unwrap_or(0.0);
    let val = eval.validation.as_ref().map(|v| v.accuracy).unwrap_or(0.0);
    let heldout = eval.heldout_ajd.unwrap_or(f64::INFINITY);
    let n = eval.samples_per_class;
    let flags = &eval.danceability.flags;
    let per_class: Vec<f64> = flags
        .chunks(n)
        .map(|c| c.iter().filter(|f| f.passed()).count() as f64 / c.len() as f64)
        .collect();
    let dance = per_class.iter().copied().fold(f64::INFINITY, f64::min);
    let recovery = eval.recovery.as_ref().map(|r| r.accuracy).unwrap_or(0.0);

    let detail = format!(
        "{} manual → {} augmented; loss drop {:.1}%, val acc {val:.3}, held-out AJD {heldout:.4}, \
         danceable per class {per_class:.2?}, spectral recovery {recovery:.3}, {elapsed:.0?}",
        aug.manual,
        aug.augmented,
        100.0 * drop
    );
    let mut missed = Vec::new();
    if drop < 0.5 {
        missed.push("loss drop < 50%");
    }
    if val < 0.8 {
        missed.push("val accuracy < 0.80");
    }
    if heldout > 0.05 {
        missed.push("held-out AJD > 0.05");
    }
    if dance < 0.8 {
        missed.push("danceability < 80%");
    }
    if recovery < 0.7 {
        missed.push("recovery < 70%");
    }
    if elapsed >= Duration::from_secs(15 * 60) {
        missed.push("slower than 15 min");
    }
    ensure(missed.is_empty(), || format!("{}: {detail}", missed.join(", ")))?;
    Ok(detail)
}

// ---- determinism -------------------------------------------------------

fn short_run(out: &Path) -> Result<(Vec<u8>, Vec<Vec<u8>>), String> {
    let cfg = run_config(&desk_config(), out, |c| {
        c.train.epochs = 3;
        c.train.max_steps_per_epoch = Some(15);
        c.generate.label = Some("High".into());
        c.generate.count = 5;
    });
    let mut sink = io::sink();
    commands::ingest(&cfg, &mut sink).map_err(err)?;
    commands::augment(&cfg, &mut sink).map_err(err)?;
    commands::train(&cfg, None, &mut sink).map_err(err)?;
    let manifest = commands::generate(&cfg, None, &mut sink).map_err(err)?;
    let log = fs::read(out.join("train_log.jsonl")).map_err(err)?;
    let generated = manifest.files.iter().map(fs::read).collect::<Result<Vec<_>, _>>().map_err(err)?;
    Ok((log, generated))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let (log_a, gen_a) = short_run(&dir.path().join("a"))?;
    let (log_b, gen_b) = short_run(&dir.path().join("b"))?;
    ensure(log_a.len() > 0 && gen_a.len() == 5, || "short run produced no artifacts".into())?;
    ensure(log_a == log_b, || "training logs differ".into())?;
    ensure(gen_a == gen_b, || "generated sequences differ".into())?;
    Ok(format!(
        "training logs ({} bytes) and {} generated files bit-identical",
        log_a.len(),
        gen_a.len()
    ))
}

// ---- AJD ---------------------------------------------------------------

fn ajd_pseudometric() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_ref: f64 = 0.0;
    for case in 0..1000 {
        let (n, t, j) = (rng.random_range(1..4), rng.random_range(2..8), rng.random_range(1..6));
        let draw = |rng: &mut ChaCha8Rng| (0..n).map(|_| random_sequence(rng, t, j)).collect::<Vec<_>>();
        let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let ab = ajd(&a, &b).map_err(err)?;
        let (ba, ac, bc) = (ajd(&b, &a).map_err(err)?, ajd(&a, &c).map_err(err)?, ajd(&b, &c).map_err(err)?);
        worst_ref = worst_ref.max((ab - ajd_reference(&a, &b)).abs());
        ensure(ab >= 0.0, || format!("negative distance, case {case}"))?;
        ensure(ajd(&a, &a).map_err(err)? == 0.0, || format!("d(a, a) ≠ 0, case {case}"))?;
        ensure((ab - ba).abs() <= 1e-12, || format!("asymmetric, case {case}"))?;
        ensure(ac <= ab + bc + 1e-12, || format!("triangle inequality, case {case}"))?;
    }
    ensure(worst_ref <= 1e-12, || format!("reference mismatch {worst_ref:.3e}"))?;
    Ok(format!("1000 triples; reference agreement {worst_ref:.1e}"))
}

// ---- service -----------------------------------------------------------

const SERVICE_RUN: &str = r#"
seed = 4
[data]
synthetic = true
seq_len = 8
[data.synth]
clips = 3
frames_per_clip = 90
joints = 3
"#;

fn service_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut cfg = RunConfig::from_toml(SERVICE_RUN).map_err(err)?;
    cfg.out = dir.path().join("run");
    let cfg = cfg.resolve().map_err(err)?;
    commands::ingest(&cfg, &mut io::sink()).map_err(err)?;
    let paths = cfg.paths();
    let state = SessionState::open(ServiceConfig {
        dataset: Some(paths.dataset.clone()),
        labels: Some(paths.labels.clone()),
        ..ServiceConfig::default()
    })
    .map_err(err)?;

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(err)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(err)?;
        let base = format!("http://{}", listener.local_addr().map_err(err)?);
        tokio::spawn(serve_on(listener, state));
        let client = reqwest::Client::new();

        let mut tasks = Vec::new();
        for w in 0..50usize {
            let client = client.clone();
            let url = format!("{base}/api/label");
            tasks.push(tokio::spawn(async move {
                let mut acked = Vec::new();
                let mut conflicts = 0;
                for i in 0..4usize {
                    // shared windows with differing labels force real conflicts
                    let start = (w * 3 + i * 7) % 80;
                    let clip = format!("synth0{}", (w + i) % 3);
                    let r = client
                        .post(&url)
                        .json(&json!({"clip": clip, "start": start, "label": w % 3}))
                        .send()
                        .await
                        .map_err(err)?;
                    let status = r.status();
                    let body: Value = r.json().await.map_err(err)?;
                    if status.is_success() {
                        let label = body["record"]["label"].as_u64().ok_or("reply without a label")? as usize;
                        acked.push((clip, start, label, status.as_u16()));
                    } else if status.as_u16() == 409 {
                        conflicts += 1;
                    } else {
                        return Err(format!("unexpected {status}: {body}"));
                    }
                }
                Ok::<_, String>((acked, conflicts))
            }));
        }
        let mut acked = Vec::new();
        let mut conflicts = 0;
        for t in tasks {
            let (a, c) = t.await.map_err(err)??;
            acked.extend(a);
            conflicts += c;
        }

        let table = read_table_csv(&paths.labels, 8, 3).map_err(|e| format!("label CSV does not parse: {e}"))?;
        let mut expected = BTreeMap::new();
        for (clip, start, label, _) in &acked {
            let stored = table
                .get(clip, *start)
                .ok_or_else(|| format!("acknowledged {clip}@{start} missing from the CSV"))?;
            ensure(stored.label.value() == *label, || format!("{clip}@{start} stored with another label"))?;
            expected.insert((clip.clone(), *start), *label);
        }
        ensure(table.len() == expected.len(), || "CSV holds unacknowledged rows".into())?;
        let created = acked.iter().filter(|a| a.3 == 201).count();
        ensure(created == table.len(), || format!("{created} created vs {} rows", table.len()))?;

        let info: Value = client
            .get(format!("{base}/api/dataset/info"))
            .send()
            .await
            .map_err(err)?
            .json()
            .await
            .map_err(err)?;
        ensure(info["schema_version"] == SCHEMA_VERSION, || "missing schema_version".into())?;
        let stats = &info["label_stats"];
        let counts: Vec<usize> = serde_json::from_value(stats["counts"].clone()).map_err(err)?;
        ensure(stats["total"] == table.len(), || format!("stats total {} vs {}", stats["total"], table.len()))?;
        ensure(counts == table.histogram().counts, || format!("stats counts {counts:?}"))?;
        ensure(conflicts > 0, || "no conflicting writes were exercised".into())?;
        Ok(format!(
            "50 writers: {} acknowledged, {conflicts} conflicts, {} CSV rows, stats consistent",
            acked.len(),
            table.len()
        ))
    })
}

// ---- driver ------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("gradient correctness", gradient_correctness),
        ("objective identities", objective_identities),
        ("augmentation oracle equivalence", augmentation_oracle),
        ("windowing and normalization", windowing_and_normalization),
        ("end-to-end synthetic run", end_to_end),
        ("determinism", determinism),
        ("AJD pseudometric", ajd_pseudometric),
        ("service round trip", service_round_trip),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.1?}]", started.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{:.1?}]", started.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
