//! CSV, JSON and raw binary clip files.
//!
//! - CSV: one clip per file, header `j0x,j0y,j0z,j1x,...`, one row per frame.
//! - JSON: an array of clips `{id, fps, frames: [[[x, y, z], ...], ...], skeleton?}`.
//! - Binary: one clip per file; magic `EFMO`, then `J: u32`, `frames: u32`,
//!   `fps: f32` and `frames · J · 3` little-endian `f32` values.

use std::fs;
use std::path::{Path, PathBuf};

use super::{MotionClip, Pose};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"EFMO";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipFormat {
    Csv,
    Json,
    Binary,
}

impl ClipFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            "bin" | "raw" => Some(Self::Binary),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Binary => "bin",
        }
    }
}

impl std::str::FromStr for ClipFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "bin" | "binary" | "raw" | "raw-binary" => Ok(Self::Binary),
            other => Err(Error::Config(format!("unknown clip format {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Frame rate for formats without fps metadata (CSV).
    pub fps: f64,
    pub skeleton: Option<Vec<(usize, usize)>>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            fps: 35.0,
            skeleton: None,
        }
    }
}

/// Loads clips from a file or from every matching file of a directory
/// (sorted by name).
pub fn load_clips(path: &Path, format: ClipFormat, options: &LoadOptions) -> Result<Vec<MotionClip>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let files: Vec<PathBuf> = if meta.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| ClipFormat::from_path(p) == Some(format))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::parse(
                path.display().to_string(),
                format!("no .{} files", format.extension()),
            ));
        }
        files
    } else {
        vec![path.to_path_buf()]
    };

    let mut clips = Vec::new();
    for file in files {
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let stem = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("clip")
            .to_string();
        match format {
            ClipFormat::Csv => clips.push(parse_csv(&bytes, &file, stem, options)?),
            ClipFormat::Json => clips.extend(parse_json(&bytes, &file)?),
            ClipFormat::Binary => clips.push(parse_binary(&bytes, &file, stem, options)?),
        }
    }
    Ok(clips)
}

fn parse_csv(bytes: &[u8], file: &Path, id: String, options: &LoadOptions) -> Result<MotionClip> {
    let loc = |row: usize| format!("{} row {row}", file.display());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(loc(0), e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::parse(loc(0), "empty file"));
    }
    if headers.len() % 3 != 0 {
        return Err(Error::Schema(format!(
            "{}: {} columns is not a multiple of 3",
            file.display(),
            headers.len()
        )));
    }
    let joints = headers.len() / 3;
    let mut frames = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => Error::Schema(format!(
                "{}: row {row} has a different joint count",
                file.display()
            )),
            _ => Error::parse(loc(row), e.to_string()),
        })?;
        let values = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(loc(row), e.to_string()))?;
        let pose = Pose::new(values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
            .map_err(|e| Error::parse(loc(row), e.to_string()))?;
        debug_assert_eq!(pose.joint_count(), joints);
        frames.push(pose);
    }
    if frames.is_empty() {
        return Err(Error::parse(loc(1), "no frames"));
    }
    MotionClip::new(id, options.fps, frames, options.skeleton.clone())
}

fn parse_json(bytes: &[u8], file: &Path) -> Result<Vec<MotionClip>> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::parse(file.display().to_string(), "empty file"));
    }
    let clips: Vec<MotionClip> = serde_json::from_slice(bytes).map_err(|e| {
        Error::parse(
            format!("{} line {} column {}", file.display(), e.line(), e.column()),
            e.to_string(),
        )
    })?;
    for clip in &clips {
        clip.validate()?;
    }
    Ok(clips)
}

fn parse_binary(bytes: &[u8], file: &Path, id: String, options: &LoadOptions) -> Result<MotionClip> {
    let loc = |offset: usize| format!("{} offset {offset}", file.display());
    if bytes.len() < 16 {
        return Err(Error::parse(loc(0), "truncated header"));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(Error::parse(loc(0), "bad magic"));
    }
    let joints = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let fps = f32::from_le_bytes(bytes[12..16].try_into().unwrap()) as f64;
    if joints == 0 {
        return Err(Error::Schema(format!("{}: zero joints", file.display())));
    }
    let expected = count * joints * 3 * 4;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(Error::parse(
            loc(16 + body.len().min(expected)),
            format!("expected {expected} data bytes, found {}", body.len()),
        ));
    }
    if count == 0 {
        return Err(Error::parse(loc(16), "no frames"));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let frames = values
        .chunks_exact(joints * 3)
        .map(|f| Pose {
            joints: f.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
        .collect();
    MotionClip::new(id, fps, frames, options.skeleton.clone())
}

pub fn clip_to_csv(clip: &MotionClip) -> String {
    let j = clip.joint_count();
    let mut out = (0..j)
        .flat_map(|i| [format!("j{i}x"), format!("j{i}y"), format!("j{i}z")])
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for f in &clip.frames {
        let row: Vec<String> = f.joints.iter().flatten().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn clip_to_binary(clip: &MotionClip) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + clip.len() * clip.joint_count() * 12);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(clip.joint_count() as u32).to_le_bytes());
    out.extend_from_slice(&(clip.len() as u32).to_le_bytes());
    out.extend_from_slice(&(clip.fps as f32).to_le_bytes());
    for v in clip.frames.iter().flat_map(|f| f.joints.iter().flatten()) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Writes clips. JSON writes one file at `path`; CSV and binary write one
/// file per clip into the directory `path`, named by clip id.
pub fn save_clips(path: &Path, format: ClipFormat, clips: &[MotionClip]) -> Result<Vec<PathBuf>> {
    match format {
        ClipFormat::Json => {
            let text = serde_json::to_string(clips)?;
            fs::write(path, text).map_err(|e| Error::io(path, e))?;
            Ok(vec![path.to_path_buf()])
        }
        ClipFormat::Csv | ClipFormat::Binary => {
            fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
            clips
                .iter()
                .map(|c| {
                    let file = path.join(format!("{}.{}", c.id, format.extension()));
                    let bytes = match format {
                        ClipFormat::Csv => clip_to_csv(c).into_bytes(),
                        _ => clip_to_binary(c),
                    };
                    fs::write(&file, bytes).map_err(|e| Error::io(&file, e))?;
                    Ok(file)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(id: &str, frames: usize, joints: usize) -> MotionClip {
        let frames = (0..frames)
            .map(|t| Pose {
                joints: (0..joints)
                    .map(|j| [t as f64 * 0.5, j as f64, -0.25])
                    .collect(),
            })
            .collect();
        MotionClip::new(id, 35.0, frames, None).unwrap()
    }

    #[test]
    fn csv_shape_is_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let c = clip("dance", 100, 53);
        let files = save_clips(dir.path(), ClipFormat::Csv, &[c.clone()]).unwrap();
        let back = load_clips(&files[0], ClipFormat::Csv, &LoadOptions::default()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].len(), 100);
        assert_eq!(back[0].joint_count(), 53);
        assert_eq!(back[0].frames, c.frames);
        assert_eq!(back[0].id, "dance");
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        for (name, fmt) in [("e.csv", ClipFormat::Csv), ("e.json", ClipFormat::Json), ("e.bin", ClipFormat::Binary)] {
            let p = dir.path().join(name);
            fs::write(&p, "").unwrap();
            let err = load_clips(&p, fmt, &LoadOptions::default()).unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "{name}: {err}");
        }
    }

    #[test]
    fn json_keeps_clip_order_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clips.json");
        save_clips(&p, ClipFormat::Json, &[clip("a", 40, 4), clip("b", 60, 4)]).unwrap();
        let back = load_clips(&p, ClipFormat::Json, &LoadOptions::default()).unwrap();
        assert_eq!(back.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(back.iter().map(MotionClip::len).sum::<usize>(), 100);
    }

    #[test]
    fn inconsistent_joint_count_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "j0x,j0y,j0z,j1x,j1y,j1z\n1,2,3,4,5,6\n1,2,3\n").unwrap();
        let err = load_clips(&p, ClipFormat::Csv, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");

        let p = dir.path().join("bad.json");
        fs::write(&p, r#"[{"id":"x","fps":30,"frames":[[[0,0,0]],[[0,0,0],[1,1,1]]]}]"#).unwrap();
        let err = load_clips(&p, ClipFormat::Json, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn malformed_csv_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "j0x,j0y,j0z\n1,2,3\n1,oops,3\n").unwrap();
        match load_clips(&p, ClipFormat::Csv, &LoadOptions::default()).unwrap_err() {
            Error::Parse { location, .. } => assert!(location.ends_with("row 2"), "{location}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn binary_round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let c = clip("b", 12, 3);
        let files = save_clips(dir.path(), ClipFormat::Binary, &[c.clone()]).unwrap();
        let back = load_clips(&files[0], ClipFormat::Binary, &LoadOptions::default()).unwrap();
        assert_eq!(back[0].fps, 35.0);
        assert_eq!(back[0].frames, c.frames);

        let mut bytes = fs::read(&files[0]).unwrap();
        bytes.truncate(bytes.len() - 2);
        fs::write(&files[0], &bytes).unwrap();
        assert!(load_clips(&files[0], ClipFormat::Binary, &LoadOptions::default()).is_err());
    }

    #[test]
    fn directory_loading_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        save_clips(dir.path(), ClipFormat::Csv, &[clip("b", 5, 2), clip("a", 7, 2)]).unwrap();
        let back = load_clips(dir.path(), ClipFormat::Csv, &LoadOptions::default()).unwrap();
        assert_eq!(back[0].id, "a");
        assert_eq!(back[1].len(), 5);
    }
}
