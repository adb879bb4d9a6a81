//! Reconstruction error and mechanical danceability proxies.

use serde::{Deserialize, Serialize};

use crate::diff::Mat;
use crate::error::{Error, Result};
use crate::motion::Sequence;
use crate::trainer::confusion;

fn joint_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Average joint distance: the mean over sequences, frames and joints of
/// the Euclidean distance between matching joints.
pub fn ajd(originals: &[Sequence], reconstructions: &[Sequence]) -> Result<f64> {
    if originals.len() != reconstructions.len() {
        return Err(Error::Precondition(format!(
            "{} originals but {} reconstructions",
            originals.len(),
            reconstructions.len()
        )));
    }
    if originals.is_empty() {
        return Err(Error::Precondition("AJD of an empty list".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (a, b)) in originals.iter().zip(reconstructions).enumerate() {
        if a.len() != b.len() || a.joint_count() != b.joint_count() {
            return Err(Error::Precondition(format!(
                "pair {i}: {}×{} against {}×{}",
                a.len(),
                a.joint_count(),
                b.len(),
                b.joint_count()
            )));
        }
        for (p, q) in a.poses.iter().zip(&b.poses) {
            for (u, v) in p.joints.iter().zip(&q.joints) {
                sum += joint_distance(u, v);
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// [`ajd`] over flattened batches (`N × T·3J`).
pub fn ajd_flat(originals: &Mat, reconstructions: &Mat) -> Result<f64> {
    if originals.dim() != reconstructions.dim() || originals.ncols() % 3 != 0 {
        return Err(Error::Precondition(format!(
            "batch shapes {:?} and {:?} do not match",
            originals.dim(),
            reconstructions.dim()
        )));
    }
    if originals.is_empty() {
        return Err(Error::Precondition("AJD of an empty batch".into()));
    }
    let mut sum = 0.0;
    for (a, b) in originals.rows().into_iter().zip(reconstructions.rows()) {
        let (a, b) = (a.as_slice().expect("row-major"), b.as_slice().expect("row-major"));
        for (u, v) in a.chunks_exact(3).zip(b.chunks_exact(3)) {
            sum += ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
        }
    }
    Ok(sum / (originals.len() / 3) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DanceabilityThresholds {
    /// Largest allowed relative standard deviation of any bone's length.
    pub bone_rel_sd: f64,
    /// Largest allowed per-frame displacement of any joint.
    pub max_displacement: f64,
    /// Coordinates must stay inside `[−margin, 1 + margin]`.
    pub box_margin: f64,
}

impl Default for DanceabilityThresholds {
    fn default() -> Self {
        Self {
            bone_rel_sd: 0.05,
            max_displacement: 0.25,
            box_margin: 0.25,
        }
    }
}

/// Raw statistics behind the danceability flags of one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceStats {
    pub bone_rel_sd: f64,
    pub max_displacement: f64,
    pub min_coordinate: f64,
    pub max_coordinate: f64,
}

fn check_edges(edges: &[(usize, usize)], joints: usize) -> Result<()> {
    match edges.iter().find(|(a, b)| *a >= joints || *b >= joints || a == b) {
        Some(e) => Err(Error::Precondition(format!("invalid skeleton edge {e:?} for {joints} joints"))),
        None => Ok(()),
    }
}

pub fn sequence_stats(seq: &Sequence, edges: &[(usize, usize)]) -> Result<SequenceStats> {
    check_edges(edges, seq.joint_count())?;
    let mut bone_rel_sd: f64 = 0.0;
    for &(a, b) in edges {
        let lengths: Vec<f64> = seq.poses.iter().map(|p| joint_distance(&p.joints[a], &p.joints[b])).collect();
        let n = lengths.len() as f64;
        let mean = lengths.iter().sum::<f64>() / n;
        let sd = (lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt();
        let rel = if mean > 0.0 { sd / mean } else if sd > 0.0 { f64::INFINITY } else { 0.0 };
        bone_rel_sd = bone_rel_sd.max(rel);
    }
    let mut max_displacement: f64 = 0.0;
    for w in seq.poses.windows(2) {
        for (u, v) in w[0].joints.iter().zip(&w[1].joints) {
            max_displacement = max_displacement.max(joint_distance(u, v));
        }
    }
    let coords = seq.poses.iter().flat_map(|p| p.joints.iter().flatten().copied());
    let (min_coordinate, max_coordinate) =
        coords.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(SequenceStats {
        bone_rel_sd,
        max_displacement,
        min_coordinate,
        max_coordinate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanceabilityFlags {
    pub bone_length_stable: bool,
    pub velocity_continuous: bool,
    pub within_box: bool,
}

impl DanceabilityFlags {
    pub fn passed(&self) -> bool {
        self.bone_length_stable && self.velocity_continuous && self.within_box
    }
}

impl DanceabilityThresholds {
    pub fn flags(&self, s: &SequenceStats) -> DanceabilityFlags {
        DanceabilityFlags {
            bone_length_stable: s.bone_rel_sd < self.bone_rel_sd,
            velocity_continuous: s.max_displacement < self.max_displacement,
            within_box: s.min_coordinate >= -self.box_margin && s.max_coordinate <= 1.0 + self.box_margin,
        }
    }

    /// Thresholds under which at least a `quantile` fraction of `sequences`
    /// pass each of the bone and velocity checks.
    pub fn calibrate(
        sequences: &[Sequence],
        edges: &[(usize, usize)],
        quantile: f64,
        box_margin: f64,
    ) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::InsufficientData("no calibration sequences".into()));
        }
        if !(quantile > 0.0 && quantile <= 1.0) {
            return Err(Error::Precondition(format!("quantile {quantile} outside (0, 1]")));
        }
        let stats = sequences.iter().map(|s| sequence_stats(s, edges)).collect::<Result<Vec<_>>>()?;
        // nearest-rank quantile, nudged up so the strict comparison admits it
        let cut = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            let rank = ((quantile * v.len() as f64).ceil() as usize).clamp(1, v.len());
            let q = v[rank - 1];
            q + q.abs() * 1e-9 + f64::MIN_POSITIVE
        };
        Ok(Self {
            bone_rel_sd: cut(stats.iter().map(|s| s.bone_rel_sd).collect()),
            max_displacement: cut(stats.iter().map(|s| s.max_displacement).collect()),
            box_margin,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DanceabilityReport {
    pub flags: Vec<DanceabilityFlags>,
    pub stats: Vec<SequenceStats>,
    /// Fraction of sequences passing all three checks.
    pub pass_rate: f64,
    pub bone_pass_rate: f64,
    pub velocity_pass_rate: f64,
    pub box_pass_rate: f64,
    pub thresholds: DanceabilityThresholds,
}

pub fn danceability(
    sequences: &[Sequence],
    edges: &[(usize, usize)],
    thresholds: &DanceabilityThresholds,
) -> Result<DanceabilityReport> {
    let stats = sequences.iter().map(|s| sequence_stats(s, edges)).collect::<Result<Vec<_>>>()?;
    let flags: Vec<DanceabilityFlags> = stats.iter().map(|s| thresholds.flags(s)).collect();
    let rate = |f: &dyn Fn(&DanceabilityFlags) -> bool| {
        if flags.is_empty() {
            0.0
        } else {
            flags.iter().filter(|x| f(x)).count() as f64 / flags.len() as f64
        }
    };
    Ok(DanceabilityReport {
        pass_rate: rate(&|f| f.passed()),
        bone_pass_rate: rate(&|f| f.bone_length_stable),
        velocity_pass_rate: rate(&|f| f.velocity_continuous),
        box_pass_rate: rate(&|f| f.within_box),
        flags,
        stats,
        thresholds: *thresholds,
    })
}

/// Confusion of intended against recovered labels for generated sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Rows = intended label, columns = recovered label, rows sum to 1.
    pub confusion: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
    /// Fraction of all sequences whose recovered label equals the intended one.
    pub accuracy: f64,
}

impl RecoveryReport {
    pub fn mean_diagonal(&self) -> f64 {
        let k = self.confusion.len();
        (0..k).map(|c| self.confusion[c][c]).sum::<f64>() / k as f64
    }

    pub fn to_csv(&self) -> String {
        confusion_csv(&self.confusion)
    }
}

/// `generated[c]` holds the sequences generated for intended class `c`.
pub fn effort_recovery<F>(generated: &[Vec<Sequence>], mut oracle: F) -> Result<RecoveryReport>
where
    F: FnMut(&Sequence) -> usize,
{
    let k = generated.len();
    let mut truth = Vec::new();
    let mut recovered = Vec::new();
    for (c, seqs) in generated.iter().enumerate() {
        for s in seqs {
            let r = oracle(s);
            if r >= k {
                return Err(Error::UnknownClass(r));
            }
            truth.push(c);
            recovered.push(r);
        }
    }
    let eval = confusion(&truth, &recovered, k);
    Ok(RecoveryReport {
        confusion: eval.confusion,
        counts: eval.counts,
        accuracy: eval.accuracy,
    })
}

/// Header row `intended,0,1,…` followed by one row per intended class.
pub fn confusion_csv(matrix: &[Vec<f64>]) -> String {
    let k = matrix.len();
    let mut out = String::from("intended");
    for c in 0..k {
        out.push_str(&format!(",{c}"));
    }
    out.push('\n');
    for (r, row) in matrix.iter().enumerate() {
        out.push_str(&r.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
