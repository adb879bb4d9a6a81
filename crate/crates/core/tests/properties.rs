#[path = "common/oracles.rs"]
mod oracles;

use effort_core::labels::{augment_between, augment_dilate};
use effort_core::metrics::ajd;
use effort_core::model::{ClassPosterior, GaussianPosterior};
use effort_core::motion::{
    extract_windows, normalize, window_count, BarycenterMode, MotionClip, Pose,
};
use effort_core::objective::kl_gaussian;
use oracles::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn window_count_matches_enumeration(n in 0usize..500, t in 2usize..60, stride in 1usize..12) {
        prop_assert_eq!(window_count(n, t, stride), brute_window_count(n, t, stride));
        if n >= t {
            prop_assert_eq!(window_count(n, t, stride), (n - t) / stride + 1);
        }
    }

    #[test]
    fn windows_stay_inside_their_clip(
        lens in prop::collection::vec(0usize..60, 1..5),
        t in 2usize..10,
        stride in 1usize..4,
    ) {
        let clips: Vec<MotionClip> = lens
            .iter()
            .enumerate()
            .map(|(c, &n)| {
                let frames = (0..n).map(|f| Pose { joints: vec![[c as f64, f as f64, 0.0]] }).collect();
                MotionClip::new(format!("c{c}"), 30.0, frames, None).unwrap()
            })
            .collect();
        let windows = extract_windows(&clips, t, stride).unwrap();
        let expected: usize = lens.iter().map(|&n| brute_window_count(n, t, stride)).sum();
        prop_assert_eq!(windows.len(), expected);
        for w in &windows {
            let c: usize = w.clip_id[1..].parse().unwrap();
            prop_assert_eq!(w.len(), t);
            for (i, p) in w.poses.iter().enumerate() {
                prop_assert_eq!(p.joints[0], [c as f64, (w.start_frame + i) as f64, 0.0]);
            }
        }
    }

    #[test]
    fn normalization_round_trips_into_the_unit_box(
        coords in prop::collection::vec(-500.0f64..500.0, 3 * 4 * 2..3 * 4 * 30),
        spread in 1e-3f64..1e3,
    ) {
        let joints = 4;
        let frames: Vec<Pose> = coords
            .chunks_exact(3 * joints)
            .map(|f| Pose { joints: f.chunks_exact(3).map(|j| [j[0] * spread, j[1], j[2] / spread]).collect() })
            .collect();
        let clip = MotionClip::new("c", 30.0, frames, None).unwrap();
        let (norm, spec) = normalize(&clip, BarycenterMode::None).unwrap();
        for v in norm.frames.iter().flat_map(|f| f.joints.iter().flatten()) {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(v), "{v}");
        }
        let back = spec.invert(&norm);
        for (a, b) in clip.frames.iter().zip(&back.frames) {
            for (ja, jb) in a.joints.iter().zip(&b.joints) {
                for k in 0..3 {
                    let tol = 1e-9 * ja[k].abs().max(1.0);
                    prop_assert!((ja[k] - jb[k]).abs() <= tol, "{} vs {}", ja[k], jb[k]);
                }
            }
        }
    }

    #[test]
    fn fixed_xy_barycenter_is_constant(
        coords in prop::collection::vec(-50.0f64..50.0, 3 * 5 * 2..3 * 5 * 30),
        drift in -100.0f64..100.0,
    ) {
        let frames: Vec<Pose> = coords
            .chunks_exact(15)
            .enumerate()
            .map(|(t, f)| Pose {
                joints: f.chunks_exact(3).map(|j| [j[0] + drift * t as f64, j[1] - drift * t as f64, j[2]]).collect(),
            })
            .collect();
        let clip = MotionClip::new("c", 30.0, frames, None).unwrap();
        let (norm, _) = normalize(&clip, BarycenterMode::FixedXy).unwrap();
        for f in &norm.frames {
            let b = f.xy_barycenter();
            prop_assert!((b[0] - 0.5).abs() < 1e-9 && (b[1] - 0.5).abs() < 1e-9, "{b:?}");
            for v in f.joints.iter().flatten() {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(v), "{v}");
            }
        }
    }
}

#[test]
fn augmentation_equals_brute_force_closure() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut filled = (0, 0);
    for case in 0..1000 {
        let RandomTable { table, grid, radius } = random_table(&mut rng);

        let between = augment_between(&table, &grid);
        assert_eq!(entries(&between), between_closure(&table, &grid), "between, case {case}");
        assert_eq!(augment_between(&between, &grid), between, "between idempotence, case {case}");

        let dilated = augment_dilate(&table, &grid, radius);
        assert_eq!(entries(&dilated), dilate_closure(&table, &grid, radius), "dilate, case {case}");
        assert_eq!(augment_dilate(&dilated, &grid, radius), dilated, "dilate idempotence, case {case}");

        filled.0 += between.len() - table.len();
        filled.1 += dilated.len() - table.len();
    }
    // the generator must actually exercise both rules
    assert!(filled.0 > 1000 && filled.1 > 1000, "{filled:?}");
}

#[test]
fn ajd_is_a_pseudometric() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let (n, t, j) = (rng.random_range(1..4), rng.random_range(2..8), rng.random_range(1..6));
        let draw = |rng: &mut ChaCha8Rng| (0..n).map(|_| random_sequence(rng, t, j)).collect::<Vec<_>>();
        let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let ab = ajd(&a, &b).unwrap();
        assert!((ab - ajd_reference(&a, &b)).abs() < 1e-12);
        assert!(ab >= 0.0);
        assert_eq!(ajd(&a, &a).unwrap(), 0.0);
        assert!((ab - ajd(&b, &a).unwrap()).abs() < 1e-12);
        assert!(ajd(&a, &c).unwrap() <= ab + ajd(&b, &c).unwrap() + 1e-12);
    }
}

#[test]
fn kl_matches_monte_carlo() {
    assert_eq!(kl_gaussian(&GaussianPosterior::standard(8)), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let d = rng.random_range(1..=8);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let log_variance: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.0)).collect();
        let exact = kl_gaussian(&GaussianPosterior {
            mean: mean.clone(),
            log_variance: log_variance.clone(),
        });
        let mc = kl_monte_carlo(&mean, &log_variance, 400_000, &mut rng);
        assert!((mc - exact).abs() <= 0.01 * exact, "exact {exact} vs mc {mc}");
    }
}

#[test]
fn entropy_stays_within_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..10_000 {
        let k = rng.random_range(1..=12);
        // mix of smooth, peaked and exactly one-hot distributions
        let sharp = [1.0, 20.0, 700.0][i % 3];
        let w: Vec<f64> = (0..k).map(|_| (sharp * rng.random::<f64>()).exp()).collect();
        let s: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|v| v / s).collect();
        if i % 7 == 0 {
            p.iter_mut().for_each(|v| *v = 0.0);
            p[rng.random_range(0..k)] = 1.0;
        }
        let h = ClassPosterior { probabilities: p }.entropy();
        assert!(h >= 0.0 && h <= (k as f64).ln() + 1e-12, "k={k} h={h}");
    }
}
