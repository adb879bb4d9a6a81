//! Label augmentation.
//!
//! - Between-fill: two manual windows of one clip at starts `a < b` with the
//!   same label and `b − a ≤ T` cover every pose of any window starting in
//!   `(a, b)`, which inherits their label.
//! - Dilation: every non-dilation record spreads its label to windows
//!   starting within `±radius` frames.
//!
//! Neither rule overwrites an existing record. A window reached by candidates
//! that disagree (between-fill), or by equally near candidates that disagree
//! (dilation, where the nearest source wins), stays unlabeled.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};

use super::{EffortLabel, LabelRecord, LabelSource, LabelTable};
use crate::motion::{window_count, Dataset};

/// Valid window starts per clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowGrid {
    pub seq_len: usize,
    pub stride: usize,
    pub clip_frames: BTreeMap<String, usize>,
}

impl WindowGrid {
    pub fn new(seq_len: usize, stride: usize, clip_frames: impl IntoIterator<Item = (String, usize)>) -> Self {
        Self {
            seq_len,
            stride,
            clip_frames: clip_frames.into_iter().collect(),
        }
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        Self::new(
            ds.seq_len,
            ds.stride,
            ds.clips.iter().map(|c| (c.id.clone(), c.len())),
        )
    }

    pub fn is_valid(&self, clip_id: &str, start: usize) -> bool {
        self.clip_frames.get(clip_id).is_some_and(|&n| {
            start % self.stride == 0 && start / self.stride < window_count(n, self.seq_len, self.stride)
        })
    }

    pub fn window_total(&self) -> usize {
        self.clip_frames
            .values()
            .map(|&n| window_count(n, self.seq_len, self.stride))
            .sum()
    }
}

/// Augmented records carry the newest timestamp of their sources so reruns
/// are reproducible.
fn augmented(
    clip_id: &str,
    start: usize,
    seq_len: usize,
    label: EffortLabel,
    source: LabelSource,
    created_at: DateTime<Utc>,
) -> LabelRecord {
    LabelRecord {
        clip_id: clip_id.to_string(),
        start_frame: start,
        seq_len,
        label,
        source,
        created_at,
    }
}

type Candidates = BTreeMap<EffortLabel, DateTime<Utc>>;

fn add_candidate(c: &mut Candidates, label: EffortLabel, at: DateTime<Utc>) {
    let e = c.entry(label).or_insert(at);
    *e = (*e).max(at);
}

fn unique(c: &Candidates) -> Option<(EffortLabel, DateTime<Utc>)> {
    (c.len() == 1).then(|| c.iter().next().map(|(l, t)| (*l, *t)).unwrap())
}

pub fn augment_between(table: &LabelTable, grid: &WindowGrid) -> LabelTable {
    let seq_len = table.seq_len();
    let mut out = table.clone();
    for clip in table.clip_ids() {
        let manual: Vec<&LabelRecord> = table
            .records_in_clip(clip)
            .filter(|r| r.source == LabelSource::Manual)
            .collect();
        let mut candidates: BTreeMap<usize, Candidates> = BTreeMap::new();
        for (i, a) in manual.iter().enumerate() {
            for b in manual[i + 1..]
                .iter()
                .take_while(|b| b.start_frame - a.start_frame <= seq_len)
            {
                if a.label != b.label {
                    continue;
                }
                let at = a.created_at.max(b.created_at);
                for w in a.start_frame + 1..b.start_frame {
                    add_candidate(candidates.entry(w).or_default(), a.label, at);
                }
            }
        }
        for (w, labels) in candidates {
            let Some((label, at)) = unique(&labels).filter(|_| grid.is_valid(clip, w)) else {
                continue;
            };
            out.insert(augmented(clip, w, seq_len, label, LabelSource::BetweenFill, at))
                .expect("augmented record is valid for its own table");
        }
    }
    out
}

pub fn augment_dilate(table: &LabelTable, grid: &WindowGrid, radius: usize) -> LabelTable {
    let seq_len = table.seq_len();
    let mut out = table.clone();
    for clip in table.clip_ids() {
        // window -> (distance, labels at that distance)
        let mut nearest: BTreeMap<usize, (usize, Candidates)> = BTreeMap::new();
        for src in table
            .records_in_clip(clip)
            .filter(|r| r.source != LabelSource::Dilation)
        {
            let a = src.start_frame;
            for w in a.saturating_sub(radius)..=a + radius {
                if w == a {
                    continue;
                }
                let d = w.abs_diff(a);
                let entry = nearest.entry(w).or_insert((d, Candidates::new()));
                if d < entry.0 {
                    *entry = (d, Candidates::new());
                }
                if d == entry.0 {
                    add_candidate(&mut entry.1, src.label, src.created_at);
                }
            }
        }
        for (w, (_, labels)) in nearest {
            let Some((label, at)) = unique(&labels).filter(|_| grid.is_valid(clip, w)) else {
                continue;
            };
            out.insert(augmented(clip, w, seq_len, label, LabelSource::Dilation, at))
                .expect("augmented record is valid for its own table");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(frames: usize, seq_len: usize) -> WindowGrid {
        WindowGrid::new(seq_len, 1, [("c".to_string(), frames)])
    }

    fn table(entries: &[(usize, usize)], seq_len: usize) -> LabelTable {
        let mut t = LabelTable::new(seq_len, 3);
        for &(start, label) in entries {
            t.insert(LabelRecord::manual("c", start, seq_len, EffortLabel::new(label, 3).unwrap()))
                .unwrap();
        }
        t
    }

    fn starts(t: &LabelTable) -> Vec<usize> {
        t.records().map(|r| r.start_frame).collect()
    }

    #[test]
    fn back_to_back_same_label_fills_between() {
        let out = augment_between(&table(&[(0, 0), (40, 0)], 40), &grid(200, 40));
        assert_eq!(out.len(), 41);
        assert_eq!(out.count_by_source(LabelSource::BetweenFill), 39);
        assert!(out.records().all(|r| r.label.value() == 0));
    }

    #[test]
    fn different_labels_or_wide_gap_do_not_fill() {
        let g = grid(200, 40);
        assert_eq!(augment_between(&table(&[(0, 0), (40, 2)], 40), &g).len(), 2);
        assert_eq!(augment_between(&table(&[(0, 0), (100, 0)], 40), &g).len(), 2);
    }

    #[test]
    fn dilation_radius_and_clamping() {
        let g = grid(200, 40);
        let out = augment_dilate(&table(&[(50, 1)], 40), &g, 6);
        assert_eq!(starts(&out), (44..=56).collect::<Vec<_>>());

        let out = augment_dilate(&table(&[(2, 1)], 40), &g, 6);
        assert_eq!(starts(&out), (0..=8).collect::<Vec<_>>());

        // last valid start is 160
        let out = augment_dilate(&table(&[(158, 1)], 40), &g, 6);
        assert_eq!(starts(&out), (152..=160).collect::<Vec<_>>());
    }

    #[test]
    fn dilation_is_idempotent_and_keeps_manual() {
        let g = grid(300, 20);
        let t = table(&[(10, 0), (18, 1), (100, 2)], 20);
        let once = augment_dilate(&t, &g, 6);
        let twice = augment_dilate(&once, &g, 6);
        assert_eq!(once, twice);
        // 14 is equidistant from 10 (label 0) and 18 (label 1)
        assert!(once.get("c", 14).is_none());
        assert_eq!(once.get("c", 13).unwrap().label.value(), 0);
        assert_eq!(once.get("c", 15).unwrap().label.value(), 1);
        for r in t.records() {
            assert_eq!(once.get(&r.clip_id, r.start_frame), Some(r));
        }
    }

    #[test]
    fn radius_zero_without_pairs_changes_nothing() {
        let g = grid(300, 20);
        let t = table(&[(10, 0), (100, 2)], 20);
        let out = augment_dilate(&augment_between(&t, &g), &g, 0);
        assert_eq!(out, t);
    }
}
