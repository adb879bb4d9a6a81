//! Keypoint motion data: clips, windows, normalization, splits and
//! synthetic oscillatory motion.

mod cache;
mod io;
mod normalize;
mod spectral;
mod split;
mod synth;
mod window;

pub use cache::{ClipSummary, DatasetCache, DatasetSummary, CLIPS_FILE, SUMMARY_FILE};
pub use io::{load_clips, save_clips, ClipFormat, LoadOptions};
pub use normalize::{normalize, normalize_dataset, BarycenterMode, NormalizationSpec};
pub use spectral::{dominant_frequency, dominant_frequency_flat, SpectralOracle};
pub use split::{split, Partition, PoolFractions, SplitAssignment, SplitFractions};
pub use synth::{skeleton_edges, synth_dataset, SynthConfig, SynthDataset};
pub use window::{
    extract_windows, sequences_to_batch, window_count, window_starts, Dataset, WindowRef,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One frame: `J` joints in 3D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose {
    pub joints: Vec<[f64; 3]>,
}

impl Pose {
    pub fn new(joints: Vec<[f64; 3]>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Schema("pose has no joints".into()));
        }
        if joints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Schema("pose has non-finite coordinates".into()));
        }
        Ok(Self { joints })
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// `(x, y)` mean over joints.
    pub fn xy_barycenter(&self) -> [f64; 2] {
        let n = self.joints.len() as f64;
        let (sx, sy) = self
            .joints
            .iter()
            .fold((0.0, 0.0), |(sx, sy), j| (sx + j[0], sy + j[1]));
        [sx / n, sy / n]
    }
}

/// A continuous recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionClip {
    pub id: String,
    pub fps: f64,
    pub frames: Vec<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<Vec<(usize, usize)>>,
}

impl MotionClip {
    pub fn new(
        id: impl Into<String>,
        fps: f64,
        frames: Vec<Pose>,
        skeleton: Option<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        let clip = Self {
            id: id.into(),
            fps,
            frames,
            skeleton,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Schema(format!("clip {}: fps must be > 0", self.id)));
        }
        let j = self.joint_count();
        for (i, f) in self.frames.iter().enumerate() {
            if f.joint_count() != j {
                return Err(Error::Schema(format!(
                    "clip {}: frame {i} has {} joints, expected {j}",
                    self.id,
                    f.joint_count()
                )));
            }
            if f.joints.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "clip {}: frame {i} has non-finite coordinates",
                    self.id
                )));
            }
        }
        if let Some(edges) = &self.skeleton {
            if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= j || b >= j) {
                return Err(Error::Schema(format!(
                    "clip {}: skeleton edge ({a}, {b}) outside {j} joints",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.frames.first().map_or(0, Pose::joint_count)
    }
}

/// `T` consecutive poses from one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub clip_id: String,
    pub start_frame: usize,
    pub poses: Vec<Pose>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.poses.first().map_or(0, Pose::joint_count)
    }

    /// Row-major `(frame, joint, xyz)` flattening.
    pub fn to_flat(&self) -> Vec<f64> {
        self.poses
            .iter()
            .flat_map(|p| p.joints.iter().flatten().copied())
            .collect()
    }

    /// Inverse of [`Sequence::to_flat`].
    pub fn from_flat(
        clip_id: impl Into<String>,
        start_frame: usize,
        joints: usize,
        flat: &[f64],
    ) -> Self {
        assert!(joints > 0 && flat.len() % (3 * joints) == 0);
        let poses = flat
            .chunks_exact(3 * joints)
            .map(|frame| Pose {
                joints: frame.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            })
            .collect();
        Self {
            clip_id: clip_id.into(),
            start_frame,
            poses,
        }
    }
}

/// Stable window identifier used in persisted split assignments.
pub fn window_id(clip_id: &str, start_frame: usize) -> String {
    format!("{clip_id}@{start_frame}")
}
