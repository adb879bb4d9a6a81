//! Dominant-frequency estimation of joint motion.
//!
//! Used as an independent oracle for the synthetic data, where each class
//! oscillates at its own angular frequency.

use std::f64::consts::PI;

use super::Sequence;

const GRID_MIN: f64 = 0.05;
const GRID_STEP: f64 = 0.005;

/// Angular frequency (radians per frame) maximizing the summed periodogram
/// of mean-removed per-coordinate joint velocities.
pub fn dominant_frequency(seq: &Sequence) -> f64 {
    dominant_frequency_flat(&seq.to_flat(), seq.joint_count())
}

/// Same as [`dominant_frequency`] on a `(frame, joint, xyz)` flat buffer.
pub fn dominant_frequency_flat(flat: &[f64], joints: usize) -> f64 {
    let width = 3 * joints;
    let frames = flat.len() / width;
    if frames < 3 {
        return 0.0;
    }
    let steps = frames - 1;
    let mut signals: Vec<Vec<f64>> = Vec::with_capacity(width);
    for c in 0..width {
        let mut v: Vec<f64> = (0..steps)
            .map(|t| flat[(t + 1) * width + c] - flat[t * width + c])
            .collect();
        let mean = v.iter().sum::<f64>() / steps as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        signals.push(v);
    }

    let mut best = (GRID_MIN, f64::NEG_INFINITY);
    let mut omega = GRID_MIN;
    while omega <= PI {
        let power: f64 = signals
            .iter()
            .map(|v| {
                let (re, im) = v.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, x)| {
                    let phase = omega * t as f64;
                    (re + x * phase.cos(), im - x * phase.sin())
                });
                re * re + im * im
            })
            .sum();
        if power > best.1 {
            best = (omega, power);
        }
        omega += GRID_STEP;
    }
    best.0
}

/// Assigns the class whose reference frequency is nearest the dominant
/// frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOracle {
    pub class_frequencies: Vec<f64>,
}

impl SpectralOracle {
    pub fn new(class_frequencies: Vec<f64>) -> Self {
        Self { class_frequencies }
    }

    pub fn classify(&self, seq: &Sequence) -> usize {
        self.nearest(dominant_frequency(seq))
    }

    pub fn classify_flat(&self, flat: &[f64], joints: usize) -> usize {
        self.nearest(dominant_frequency_flat(flat, joints))
    }

    fn nearest(&self, omega: f64) -> usize {
        self.class_frequencies
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - omega).abs().total_cmp(&(b.1 - omega).abs()))
            .map(|(i, _)| i)
            .expect("oracle has no classes")
    }
}
