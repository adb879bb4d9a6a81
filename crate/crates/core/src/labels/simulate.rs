//! Simulated annotator for synthetic data with known labels.

use chrono::{DateTime, Duration};

use super::{LabelRecord, LabelSource, LabelTable, WindowGrid};
use crate::diff::RngStream;
use crate::error::{Error, Result};

/// Picks `⌈fraction · windows⌉` manual labels from `truth`, placed as runs
/// of `run_length` back-to-back windows (starts `s, s + T, s + 2T, …`)
/// at random positions, the way an annotator steps through a clip.
pub fn simulate_manual_labels(
    truth: &LabelTable,
    grid: &WindowGrid,
    fraction: f64,
    run_length: usize,
    seed: u64,
) -> Result<LabelTable> {
    if !(fraction > 0.0 && fraction <= 1.0) || run_length == 0 {
        return Err(Error::Precondition("fraction must be in (0, 1] and run_length ≥ 1".into()));
    }
    let total = grid.window_total();
    let target = ((fraction * total as f64).ceil() as usize).min(total);
    let clips: Vec<(&String, usize)> = grid
        .clip_frames
        .iter()
        .filter(|(_, &n)| n >= grid.seq_len)
        .map(|(id, &n)| (id, n))
        .collect();
    if clips.is_empty() {
        return Err(Error::Precondition("no clip is long enough for one window".into()));
    }

    let mut rng = RngStream::new(seed);
    let mut out = LabelTable::new(truth.seq_len(), truth.classes());
    let mut attempts = 0;
    while out.len() < target {
        attempts += 1;
        if attempts > 100 * target + 1000 {
            break;
        }
        let (clip, frames) = clips[((rng.uniform() * clips.len() as f64) as usize).min(clips.len() - 1)];
        let last = frames - grid.seq_len;
        let s = ((rng.uniform() * (last / grid.stride + 1) as f64) as usize).min(last / grid.stride) * grid.stride;
        for i in 0..run_length {
            let start = s + i * grid.seq_len;
            if out.len() >= target || !grid.is_valid(clip, start) || out.get(clip, start).is_some() {
                break;
            }
            let Some(rec) = truth.get(clip, start) else { break };
            out.insert(LabelRecord {
                source: LabelSource::Manual,
                created_at: DateTime::UNIX_EPOCH + Duration::seconds(out.len() as i64),
                ..LabelRecord::manual(clip.clone(), start, truth.seq_len(), rec.label)
            })?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::EffortLabel;

    fn truth(frames: usize) -> (LabelTable, WindowGrid) {
        let grid = WindowGrid::new(10, 1, [("a".to_string(), frames), ("b".to_string(), frames)]);
        let mut t = LabelTable::new(10, 2);
        for (ci, clip) in ["a", "b"].iter().enumerate() {
            for s in 0..=frames - 10 {
                t.insert(LabelRecord::manual(*clip, s, 10, EffortLabel::new(ci, 2).unwrap())).unwrap();
            }
        }
        (t, grid)
    }

    #[test]
    fn count_runs_and_truthfulness() {
        let (t, grid) = truth(500);
        let m = simulate_manual_labels(&t, &grid, 0.02, 4, 9).unwrap();
        assert_eq!(m.len(), (0.02f64 * 982.0).ceil() as usize);
        for r in m.records() {
            assert_eq!(r.label, t.get(&r.clip_id, r.start_frame).unwrap().label);
            assert_eq!(r.source, LabelSource::Manual);
        }
        // most records have a neighbour one window length away
        let paired = m
            .records()
            .filter(|r| {
                m.get(&r.clip_id, r.start_frame + 10).is_some()
                    || r.start_frame >= 10 && m.get(&r.clip_id, r.start_frame - 10).is_some()
            })
            .count();
        assert!(paired * 2 > m.len());
    }

    #[test]
    fn deterministic() {
        let (t, grid) = truth(300);
        let a = simulate_manual_labels(&t, &grid, 0.05, 3, 1).unwrap();
        let b = simulate_manual_labels(&t, &grid, 0.05, 3, 1).unwrap();
        assert_eq!(a, b);
    }
}
