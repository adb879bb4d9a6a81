use ndarray::Array2;

use super::{MotionClip, Sequence};
use crate::diff::Mat;
use crate::error::{Error, Result};

/// `⌊(n − T)/stride⌋ + 1` windows for `n ≥ T`, otherwise none.
pub fn window_count(frames: usize, seq_len: usize, stride: usize) -> usize {
    if frames < seq_len || stride == 0 {
        0
    } else {
        (frames - seq_len) / stride + 1
    }
}

pub fn window_starts(frames: usize, seq_len: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..window_count(frames, seq_len, stride)).map(move |i| i * stride)
}

fn check_window_args(seq_len: usize, stride: usize) -> Result<()> {
    if seq_len < 2 {
        return Err(Error::Precondition(format!("window length {seq_len} < 2")));
    }
    if stride < 1 {
        return Err(Error::Precondition("stride must be ≥ 1".into()));
    }
    Ok(())
}

/// Sliding windows over each clip independently; windows never cross clips.
pub fn extract_windows(clips: &[MotionClip], seq_len: usize, stride: usize) -> Result<Vec<Sequence>> {
    check_window_args(seq_len, stride)?;
    Ok(clips
        .iter()
        .flat_map(|clip| {
            window_starts(clip.len(), seq_len, stride).map(move |start| Sequence {
                clip_id: clip.id.clone(),
                start_frame: start,
                poses: clip.frames[start..start + seq_len].to_vec(),
            })
        })
        .collect())
}

/// Index of a window inside a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WindowRef {
    pub clip: usize,
    pub start: usize,
}

/// Clips plus their window grid. Windows are referenced, not copied, so
/// large datasets stay cheap to batch.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub clips: Vec<MotionClip>,
    pub seq_len: usize,
    pub stride: usize,
    pub windows: Vec<WindowRef>,
}

impl Dataset {
    pub fn new(clips: Vec<MotionClip>, seq_len: usize, stride: usize) -> Result<Self> {
        check_window_args(seq_len, stride)?;
        let joints = clips.first().map_or(0, MotionClip::joint_count);
        if let Some(c) = clips.iter().find(|c| c.joint_count() != joints) {
            return Err(Error::Schema(format!(
                "clip {} has {} joints, expected {joints}",
                c.id,
                c.joint_count()
            )));
        }
        let windows = clips
            .iter()
            .enumerate()
            .flat_map(|(ci, c)| {
                window_starts(c.len(), seq_len, stride).map(move |start| WindowRef { clip: ci, start })
            })
            .collect();
        Ok(Self {
            clips,
            seq_len,
            stride,
            windows,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.clips.first().map_or(0, MotionClip::joint_count)
    }

    pub fn frame_count(&self) -> usize {
        self.clips.iter().map(MotionClip::len).sum()
    }

    pub fn clip_index(&self, clip_id: &str) -> Option<usize> {
        self.clips.iter().position(|c| c.id == clip_id)
    }

    /// Resolves `(clip_id, start)` to a window on the grid.
    pub fn find(&self, clip_id: &str, start: usize) -> Option<WindowRef> {
        let clip = self.clip_index(clip_id)?;
        let c = &self.clips[clip];
        (start % self.stride == 0 && start + self.seq_len <= c.len())
            .then_some(WindowRef { clip, start })
    }

    pub fn clip_id(&self, w: WindowRef) -> &str {
        &self.clips[w.clip].id
    }

    pub fn sequence(&self, w: WindowRef) -> Sequence {
        let c = &self.clips[w.clip];
        Sequence {
            clip_id: c.id.clone(),
            start_frame: w.start,
            poses: c.frames[w.start..w.start + self.seq_len].to_vec(),
        }
    }

    /// `B × (T·3J)` matrix with one flattened window per row.
    pub fn batch(&self, windows: &[WindowRef]) -> Mat {
        let width = self.seq_len * 3 * self.joint_count();
        let mut m = Array2::zeros((windows.len(), width));
        for (mut row, w) in m.rows_mut().into_iter().zip(windows) {
            let frames = &self.clips[w.clip].frames[w.start..w.start + self.seq_len];
            for (dst, src) in row
                .iter_mut()
                .zip(frames.iter().flat_map(|f| f.joints.iter().flatten()))
            {
                *dst = *src;
            }
        }
        m
    }
}

/// Stacks sequences into a batch matrix.
pub fn sequences_to_batch(seqs: &[&Sequence]) -> Mat {
    let width = seqs.first().map_or(0, |s| s.len() * 3 * s.joint_count());
    let mut m = Array2::zeros((seqs.len(), width));
    for (mut row, s) in m.rows_mut().into_iter().zip(seqs) {
        let flat = s.to_flat();
        assert_eq!(flat.len(), width, "sequences of different shapes");
        row.assign(&ndarray::ArrayView1::from(&flat));
    }
    m
}
