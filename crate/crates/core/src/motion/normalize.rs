use serde::{Deserialize, Serialize};

use super::{MotionClip, Pose};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarycenterMode {
    /// Subtract the per-frame `(x, y)` joint barycenter; it then maps to
    /// `(0.5, 0.5)` for every frame.
    FixedXy,
    None,
}

/// Affine map `y = scale · (x − b_t) + offset`, where `b_t` is the per-frame
/// xy barycenter under [`BarycenterMode::FixedXy`] and zero otherwise. A
/// single scale keeps relative proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub scale: f64,
    pub offset: [f64; 3],
    pub barycenter_mode: BarycenterMode,
}

impl NormalizationSpec {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: [0.0; 3],
            barycenter_mode: BarycenterMode::None,
        }
    }

    /// Fits one map over every frame of every clip.
    pub fn fit(clips: &[MotionClip], mode: BarycenterMode) -> Result<Self> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for frame in clips.iter().flat_map(|c| &c.frames) {
            let b = match mode {
                BarycenterMode::FixedXy => frame.xy_barycenter(),
                BarycenterMode::None => [0.0, 0.0],
            };
            for j in &frame.joints {
                let p = [j[0] - b[0], j[1] - b[1], j[2]];
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
                any = true;
            }
        }
        if !any {
            return Err(Error::Precondition("cannot normalize an empty clip set".into()));
        }

        match mode {
            BarycenterMode::None => {
                let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
                if extent <= 0.0 {
                    return Err(Error::DegenerateExtent(
                        "all coordinates identical".into(),
                    ));
                }
                let scale = 1.0 / extent;
                Ok(Self {
                    scale,
                    offset: [-lo[0] * scale, -lo[1] * scale, -lo[2] * scale],
                    barycenter_mode: mode,
                })
            }
            BarycenterMode::FixedXy => {
                // xy is centred on the barycenter, so the box half-width is
                // the largest |deviation| along x or y.
                let half_x = lo[0].abs().max(hi[0].abs());
                let half_y = lo[1].abs().max(hi[1].abs());
                let extent = (2.0 * half_x).max(2.0 * half_y).max(hi[2] - lo[2]);
                if extent <= 0.0 {
                    return Err(Error::DegenerateExtent(
                        "all coordinates identical".into(),
                    ));
                }
                let scale = 1.0 / extent;
                Ok(Self {
                    scale,
                    offset: [0.5, 0.5, -lo[2] * scale],
                    barycenter_mode: mode,
                })
            }
        }
    }

    pub fn apply_pose(&self, pose: &Pose) -> Pose {
        let b = match self.barycenter_mode {
            BarycenterMode::FixedXy => pose.xy_barycenter(),
            BarycenterMode::None => [0.0, 0.0],
        };
        Pose {
            joints: pose
                .joints
                .iter()
                .map(|j| {
                    [
                        self.scale * (j[0] - b[0]) + self.offset[0],
                        self.scale * (j[1] - b[1]) + self.offset[1],
                        self.scale * j[2] + self.offset[2],
                    ]
                })
                .collect(),
        }
    }

    /// Inverse of the affine part. Under `FixedXy` the per-frame barycenter
    /// trajectory is not recoverable; the result has its barycenter at the
    /// preimage of the fixed point.
    pub fn invert_pose(&self, pose: &Pose) -> Pose {
        Pose {
            joints: pose
                .joints
                .iter()
                .map(|j| {
                    [
                        (j[0] - self.offset[0]) / self.scale,
                        (j[1] - self.offset[1]) / self.scale,
                        (j[2] - self.offset[2]) / self.scale,
                    ]
                })
                .collect(),
        }
    }

    pub fn apply(&self, clip: &MotionClip) -> MotionClip {
        MotionClip {
            frames: clip.frames.iter().map(|f| self.apply_pose(f)).collect(),
            ..clip.clone()
        }
    }

    pub fn invert(&self, clip: &MotionClip) -> MotionClip {
        MotionClip {
            frames: clip.frames.iter().map(|f| self.invert_pose(f)).collect(),
            ..clip.clone()
        }
    }
}

/// Normalizes a single clip into the unit box.
pub fn normalize(clip: &MotionClip, mode: BarycenterMode) -> Result<(MotionClip, NormalizationSpec)> {
    if clip.is_empty() {
        return Err(Error::Precondition(format!("clip {} is empty", clip.id)));
    }
    let spec = NormalizationSpec::fit(std::slice::from_ref(clip), mode)?;
    Ok((spec.apply(clip), spec))
}

/// Normalizes all clips with one dataset-wide map.
pub fn normalize_dataset(
    clips: &[MotionClip],
    mode: BarycenterMode,
) -> Result<(Vec<MotionClip>, NormalizationSpec)> {
    let spec = NormalizationSpec::fit(clips, mode)?;
    Ok((clips.iter().map(|c| spec.apply(c)).collect(), spec))
}
