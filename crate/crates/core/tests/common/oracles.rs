//! Brute-force reference implementations used by the property and
//! acceptance suites. They deliberately avoid the library's own helpers so
//! a shared bug cannot cancel out.

#![allow(dead_code)]

use std::collections::BTreeSet;

use chrono::{DateTime, TimeZone, Utc};
use effort_core::labels::{EffortLabel, LabelRecord, LabelSource, LabelTable, WindowGrid};
use effort_core::motion::{Pose, Sequence};
use rand::Rng;
use rand_distr::StandardNormal;

/// `(clip, start, label, source)`.
pub type Entry = (String, usize, usize, LabelSource);

pub fn entries(table: &LabelTable) -> BTreeSet<Entry> {
    table
        .records()
        .map(|r| (r.clip_id.clone(), r.start_frame, r.label.value(), r.source))
        .collect()
}

pub fn brute_window_count(frames: usize, seq_len: usize, stride: usize) -> usize {
    (0..frames).filter(|&a| a % stride == 0 && a + seq_len <= frames).count()
}

fn on_grid(grid: &WindowGrid, clip: &str, w: usize) -> bool {
    let n = grid.clip_frames[clip];
    w % grid.stride == 0 && w + grid.seq_len <= n
}

fn in_clip<'a>(table: &'a LabelTable, clip: &'a str) -> impl Iterator<Item = &'a LabelRecord> {
    table.records().filter(move |r| r.clip_id == clip)
}

/// Every empty grid window enclosed by a same-label manual pair at most
/// `T` apart, kept only when all such pairs agree.
pub fn between_closure(table: &LabelTable, grid: &WindowGrid) -> BTreeSet<Entry> {
    let t = table.seq_len();
    let mut out = entries(table);
    for (clip, &n) in &grid.clip_frames {
        for w in 0..n {
            if !on_grid(grid, clip, w) || table.get(clip, w).is_some() {
                continue;
            }
            let mut labels = BTreeSet::new();
            for a in in_clip(table, clip).filter(|r| r.source == LabelSource::Manual) {
                for b in in_clip(table, clip).filter(|r| r.source == LabelSource::Manual) {
                    let enclosed = a.start_frame < w && w < b.start_frame;
                    if enclosed && b.start_frame - a.start_frame <= t && a.label == b.label {
                        labels.insert(a.label.value());
                    }
                }
            }
            if labels.len() == 1 {
                let label = *labels.iter().next().unwrap();
                out.insert((clip.clone(), w, label, LabelSource::BetweenFill));
            }
        }
    }
    out
}

/// Every empty grid window within `radius` of a non-dilation record takes
/// the label of its nearest such record, unless the nearest ones disagree.
pub fn dilate_closure(table: &LabelTable, grid: &WindowGrid, radius: usize) -> BTreeSet<Entry> {
    let mut out = entries(table);
    for (clip, &n) in &grid.clip_frames {
        for w in 0..n {
            if !on_grid(grid, clip, w) || table.get(clip, w).is_some() {
                continue;
            }
            let near: Vec<(usize, usize)> = in_clip(table, clip)
                .filter(|r| r.source != LabelSource::Dilation)
                .map(|r| (r.start_frame.abs_diff(w), r.label.value()))
                .filter(|&(d, _)| d >= 1 && d <= radius)
                .collect();
            let Some(best) = near.iter().map(|&(d, _)| d).min() else {
                continue;
            };
            let labels: BTreeSet<usize> = near.iter().filter(|&&(d, _)| d == best).map(|&(_, l)| l).collect();
            if labels.len() == 1 {
                let label = *labels.iter().next().unwrap();
                out.insert((clip.clone(), w, label, LabelSource::Dilation));
            }
        }
    }
    out
}

pub struct RandomTable {
    pub table: LabelTable,
    pub grid: WindowGrid,
    pub radius: usize,
}

fn random_time(rng: &mut impl Rng) -> DateTime<Utc> {
    Utc.timestamp_opt(1_700_000_000 + rng.random_range(0..1_000_000), 0).unwrap()
}

/// Small clips, dense labels and all three sources, so conflicts and ties
/// are common.
pub fn random_table(rng: &mut impl Rng) -> RandomTable {
    let seq_len = rng.random_range(2..=12);
    let stride = rng.random_range(1..=3);
    let classes = rng.random_range(2..=3);
    let clips: Vec<(String, usize)> = (0..rng.random_range(1..=3))
        .map(|c| (format!("c{c}"), rng.random_range(seq_len..=80)))
        .collect();
    let mut table = LabelTable::new(seq_len, classes);
    for (clip, n) in &clips {
        for _ in 0..rng.random_range(0..=12) {
            let start = rng.random_range(0..*n);
            if table.get(clip, start).is_some() {
                continue;
            }
            let source = match rng.random_range(0..10) {
                0 | 1 => LabelSource::BetweenFill,
                2 | 3 => LabelSource::Dilation,
                _ => LabelSource::Manual,
            };
            let record = LabelRecord {
                clip_id: clip.clone(),
                start_frame: start,
                seq_len,
                label: EffortLabel::new(rng.random_range(0..classes), classes).unwrap(),
                source,
                created_at: random_time(rng),
            };
            table.insert(record).unwrap();
        }
    }
    RandomTable {
        table,
        grid: WindowGrid::new(seq_len, stride, clips),
        radius: rng.random_range(0..=8),
    }
}

pub fn random_sequence(rng: &mut impl Rng, frames: usize, joints: usize) -> Sequence {
    Sequence {
        clip_id: "r".into(),
        start_frame: 0,
        poses: (0..frames)
            .map(|_| Pose {
                joints: (0..joints).map(|_| [rng.random(), rng.random(), rng.random()]).collect(),
            })
            .collect(),
    }
}

/// Mean Euclidean joint distance over every sequence, frame and joint.
pub fn ajd_reference(a: &[Sequence], b: &[Sequence]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (sa, sb) in a.iter().zip(b) {
        for (pa, pb) in sa.poses.iter().zip(&sb.poses) {
            for (ja, jb) in pa.joints.iter().zip(&pb.joints) {
                let d2: f64 = (0..3).map(|k| (ja[k] - jb[k]).powi(2)).sum();
                total += d2.sqrt();
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Monte-Carlo `E_q[ln q(z) − ln p(z)]` for a diagonal Gaussian `q` against
/// the standard normal `p`.
pub fn kl_monte_carlo(mean: &[f64], log_variance: &[f64], samples: usize, rng: &mut impl Rng) -> f64 {
    let mut acc = 0.0;
    for _ in 0..samples {
        let mut log_ratio = 0.0;
        for (m, lv) in mean.iter().zip(log_variance) {
            let e: f64 = rng.sample(StandardNormal);
            let z = m + (0.5 * lv).exp() * e;
            // ln q − ln p; the 2π constants cancel
            log_ratio += -0.5 * lv - 0.5 * e * e + 0.5 * z * z;
        }
        acc += log_ratio;
    }
    acc / samples as f64
}
