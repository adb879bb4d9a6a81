//! On-disk cache of a normalized dataset: `clips.json` plus a
//! `dataset.json` summary that pins the window grid and class names.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{window_count, Dataset, MotionClip, NormalizationSpec};
use crate::error::{Error, Result};

pub const CLIPS_FILE: &str = "clips.json";
pub const SUMMARY_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSummary {
    pub id: String,
    pub frames: usize,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub clips: usize,
    pub frames: usize,
    pub joints: usize,
    pub fps: f64,
    pub seq_len: usize,
    pub stride: usize,
    pub window_count: usize,
    pub classes: usize,
    pub class_names: Vec<String>,
    pub skeleton: Vec<(usize, usize)>,
    pub normalization: NormalizationSpec,
    /// Class tempos of synthetic data, used by the spectral oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_frequencies: Option<Vec<f64>>,
    pub clip_list: Vec<ClipSummary>,
    pub clips_sha256: String,
}

#[derive(Debug, Clone)]
pub struct DatasetCache {
    pub summary: DatasetSummary,
    pub clips: Vec<MotionClip>,
}

fn clips_json(clips: &[MotionClip]) -> Result<String> {
    Ok(serde_json::to_string(clips)?)
}

fn sha256(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl DatasetCache {
    /// `clips` must already be normalized by `normalization`.
    pub fn new(
        clips: Vec<MotionClip>,
        normalization: NormalizationSpec,
        seq_len: usize,
        stride: usize,
        class_names: Vec<String>,
        class_frequencies: Option<Vec<f64>>,
    ) -> Result<Self> {
        let ds = Dataset::new(clips, seq_len, stride)?;
        if ds.clips.is_empty() {
            return Err(Error::Precondition("dataset has no clips".into()));
        }
        if class_names.len() < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        let first = &ds.clips[0];
        let skeleton = first.skeleton.clone().unwrap_or_default();
        let clip_list = ds
            .clips
            .iter()
            .map(|c| ClipSummary {
                id: c.id.clone(),
                frames: c.len(),
                windows: window_count(c.len(), seq_len, stride),
            })
            .collect();
        let summary = DatasetSummary {
            clips: ds.clips.len(),
            frames: ds.frame_count(),
            joints: ds.joint_count(),
            fps: first.fps,
            seq_len,
            stride,
            window_count: ds.windows.len(),
            classes: class_names.len(),
            class_names,
            skeleton,
            normalization,
            class_frequencies,
            clip_list,
            clips_sha256: sha256(&clips_json(&ds.clips)?),
        };
        Ok(Self {
            summary,
            clips: ds.clips,
        })
    }

    /// Writes both files into `dir`; returns the summary path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let clips = dir.join(CLIPS_FILE);
        fs::write(&clips, clips_json(&self.clips)?).map_err(|e| Error::io(&clips, e))?;
        let path = dir.join(SUMMARY_FILE);
        let text = serde_json::to_string_pretty(&self.summary)? + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Loads `dir`, checking the clip hash and the summary counts.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let summary: DatasetSummary = serde_json::from_str(&text)?;
        let clips_path = dir.join(CLIPS_FILE);
        let raw = fs::read_to_string(&clips_path).map_err(|e| Error::io(&clips_path, e))?;
        if sha256(&raw) != summary.clips_sha256 {
            return Err(Error::Schema(format!("{} does not match its summary hash", clips_path.display())));
        }
        let clips: Vec<MotionClip> = serde_json::from_str(&raw)?;
        for c in &clips {
            c.validate()?;
        }
        let cache = Self::new(
            clips,
            summary.normalization,
            summary.seq_len,
            summary.stride,
            summary.class_names.clone(),
            summary.class_frequencies.clone(),
        )?;
        if cache.summary.window_count != summary.window_count || cache.summary.joints != summary.joints {
            return Err(Error::Schema(format!("{} disagrees with its clips", path.display())));
        }
        Ok(Self { summary, ..cache })
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::new(self.clips.clone(), self.summary.seq_len, self.summary.stride)
            .expect("cache was validated on construction")
    }
}
