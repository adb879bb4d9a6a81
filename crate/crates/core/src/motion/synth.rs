//! Synthetic skeleton motion with class-specific tempo.
//!
//! Joints form a binary tree (`parent(j) = (j − 1) / 2`). Every bone swings
//! about a horizontal axis with angle `A · a(t) · sin(θ(t) + φ_j)`, where the
//! phase `θ` advances at the class angular frequency `ω_c` (slightly
//! modulated) and `a(t)` is a slow amplitude envelope. Bone lengths are
//! constant before sensor noise. Each clip carries one class (`clip mod k`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{window_starts, MotionClip, Pose};
use crate::diff::RngStream;
use crate::error::{Error, Result};
use crate::labels::{EffortLabel, LabelRecord, LabelSource, LabelTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub clips: usize,
    pub frames_per_clip: usize,
    pub joints: usize,
    pub classes: usize,
    pub seed: u64,
    pub fps: f64,
    /// Window length used for the ground-truth label table.
    pub seq_len: usize,
    pub stride: usize,
    /// Angular frequencies (radians per frame) of the slowest and fastest
    /// class; intermediate classes are evenly spaced.
    pub min_frequency: f64,
    pub max_frequency: f64,
    /// Standard deviation of additive coordinate noise.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clips: 6,
            frames_per_clip: 2000,
            joints: 5,
            classes: 3,
            seed: 0,
            fps: 35.0,
            seq_len: 20,
            stride: 1,
            min_frequency: 0.5,
            max_frequency: 1.5,
            noise: 0.003,
        }
    }
}

impl SynthConfig {
    pub fn class_frequencies(&self) -> Vec<f64> {
        let k = self.classes;
        (0..k)
            .map(|c| {
                self.min_frequency + c as f64 * (self.max_frequency - self.min_frequency) / (k - 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub clips: Vec<MotionClip>,
    /// Ground truth for every window of the configured grid.
    pub labels: LabelTable,
    pub clip_classes: Vec<usize>,
    pub class_frequencies: Vec<f64>,
}

fn parent(j: usize) -> usize {
    (j - 1) / 2
}

fn depth(j: usize) -> u32 {
    (j + 1).ilog2()
}

fn rest_bone(j: usize) -> [f64; 3] {
    if j == 1 {
        return [0.0, 0.0, 0.5];
    }
    let azimuth = j as f64 * 2.399_963;
    let elevation: f64 = if j % 2 == 0 { -0.6 } else { 0.4 };
    let len = 0.45 * 0.75f64.powi(depth(j) as i32 - 1);
    [
        len * elevation.cos() * azimuth.cos(),
        len * elevation.cos() * azimuth.sin(),
        len * elevation.sin(),
    ]
}

fn rotate(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    // Rodrigues; `axis` is unit length
    let (s, c) = angle.sin_cos();
    let dot = v[0] * axis[0] + v[1] * axis[1] + v[2] * axis[2];
    let cross = [
        axis[1] * v[2] - axis[2] * v[1],
        axis[2] * v[0] - axis[0] * v[2],
        axis[0] * v[1] - axis[1] * v[0],
    ];
    [0, 1, 2].map(|i| v[i] * c + cross[i] * s + axis[i] * dot * (1.0 - c))
}

fn swing_axis(rest: [f64; 3]) -> [f64; 3] {
    // horizontal, perpendicular to the bone
    let h = (rest[0] * rest[0] + rest[1] * rest[1]).sqrt();
    if h < 1e-9 {
        [1.0, 0.0, 0.0]
    } else {
        [-rest[1] / h, rest[0] / h, 0.0]
    }
}

pub fn skeleton_edges(joints: usize) -> Vec<(usize, usize)> {
    (1..joints).map(|j| (parent(j), j)).collect()
}

fn synth_clip(cfg: &SynthConfig, index: usize, omega: f64) -> MotionClip {
    let mut rng = RngStream::substream(cfg.seed, index as u64);
    let j_count = cfg.joints;
    let tempo_period = 300.0 + 400.0 * rng.uniform();
    let tempo_phase = 2.0 * PI * rng.uniform();
    let env_period = 300.0 + 400.0 * rng.uniform();
    let env_phase = 2.0 * PI * rng.uniform();
    let heading_period = 500.0 + 500.0 * rng.uniform();
    let heading_phase = 2.0 * PI * rng.uniform();
    let mut theta = 2.0 * PI * rng.uniform();

    let rests: Vec<[f64; 3]> = (0..j_count).map(|j| if j == 0 { [0.0; 3] } else { rest_bone(j) }).collect();
    let axes: Vec<[f64; 3]> = rests.iter().map(|r| swing_axis(*r)).collect();
    let amplitude = |j: usize| if j == 1 { 0.15 } else { 0.5 };
    let joint_phase = |j: usize| 0.9 * j as f64;

    let mut frames = Vec::with_capacity(cfg.frames_per_clip);
    for t in 0..cfg.frames_per_clip {
        let tf = t as f64;
        let envelope = 1.0 + 0.25 * (2.0 * PI * tf / env_period + env_phase).sin();
        let heading = 0.3 * (2.0 * PI * tf / heading_period + heading_phase).sin();
        let mut pos = vec![[0.0; 3]; j_count];
        pos[0] = [0.0, 0.0, 1.0 + 0.04 * envelope * theta.sin()];
        for j in 1..j_count {
            let angle = amplitude(j) * envelope * (theta + joint_phase(j)).sin();
            let bone = rotate(rotate(rests[j], axes[j], angle), [0.0, 0.0, 1.0], heading);
            let p = pos[parent(j)];
            pos[j] = [p[0] + bone[0], p[1] + bone[1], p[2] + bone[2]];
        }
        for p in &mut pos {
            for v in p.iter_mut() {
                *v += cfg.noise * rng.normal();
            }
        }
        frames.push(Pose { joints: pos });
        theta += omega * (1.0 + 0.04 * (2.0 * PI * tf / tempo_period + tempo_phase).sin());
    }

    MotionClip {
        id: format!("synth{index:02}"),
        fps: cfg.fps,
        frames,
        skeleton: Some(skeleton_edges(j_count)),
    }
}

/// Generates clips and ground-truth labels for every window.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.classes < 2 {
        return Err(Error::Precondition("synthetic data needs at least 2 classes".into()));
    }
    if cfg.joints == 0 || cfg.clips == 0 {
        return Err(Error::Precondition("synthetic data needs joints and clips".into()));
    }
    let freqs = cfg.class_frequencies();
    let mut clips = Vec::with_capacity(cfg.clips);
    let mut clip_classes = Vec::with_capacity(cfg.clips);
    let mut labels = LabelTable::new(cfg.seq_len, cfg.classes);
    for i in 0..cfg.clips {
        let class = i % cfg.classes;
        let clip = synth_clip(cfg, i, freqs[class]);
        let label = EffortLabel::new(class, cfg.classes)?;
        for start in window_starts(clip.len(), cfg.seq_len, cfg.stride) {
            labels.insert(LabelRecord {
                source: LabelSource::Manual,
                created_at: chrono::DateTime::UNIX_EPOCH,
                ..LabelRecord::manual(clip.id.clone(), start, cfg.seq_len, label)
            })?;
        }
        clips.push(clip);
        clip_classes.push(class);
    }
    Ok(SynthDataset {
        clips,
        labels,
        clip_classes,
        class_frequencies: freqs,
    })
}
