use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{window_id, Dataset, WindowRef};
use crate::diff::RngStream;
use crate::error::{Error, Result};
use crate::labels::LabelTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    LabeledTrain,
    LabeledVal,
    LabeledTest,
    UnlabeledTrain,
    UnlabeledVal,
    UnlabeledTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl PoolFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Self {
        Self { train, val, test }
    }

    fn validate(&self, pool: &str) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Precondition(format!("{pool} fractions must lie in [0, 1]")));
        }
        if all.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::Precondition(format!("{pool} fractions sum above 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub labeled: PoolFractions,
    pub unlabeled: PoolFractions,
}

impl Default for SplitFractions {
    /// 79/5/3 of the labeled pool; most of the unlabeled pool trains and a
    /// small remainder is held out.
    fn default() -> Self {
        Self {
            labeled: PoolFractions::new(0.79, 0.05, 0.03),
            unlabeled: PoolFractions::new(0.9775, 0.0, 0.0225),
        }
    }
}

/// `window_id → partition`; unassigned windows are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub fractions: SplitFractions,
    pub assignments: BTreeMap<String, Partition>,
}

impl SplitAssignment {
    pub fn count(&self, p: Partition) -> usize {
        self.assignments.values().filter(|&&q| q == p).count()
    }

    pub fn ids(&self, p: Partition) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &q)| q == p)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn partition_of(&self, clip_id: &str, start: usize) -> Option<Partition> {
        self.assignments.get(&window_id(clip_id, start)).copied()
    }

    /// Windows of partition `p`, resolved against `ds`, in dataset order.
    pub fn refs(&self, ds: &Dataset, p: Partition) -> Vec<WindowRef> {
        ds.windows
            .iter()
            .copied()
            .filter(|w| self.partition_of(ds.clip_id(*w), w.start) == Some(p))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn part_sizes(n: usize, f: &PoolFractions, require_each: bool, pool: &str) -> Result<[usize; 3]> {
    let size = |frac: f64| {
        let k = (frac * n as f64).round() as usize;
        if require_each && frac > 0.0 {
            k.max(1)
        } else {
            k
        }
    };
    let mut sizes = [size(f.train), size(f.val), size(f.test)];
    let total: usize = sizes.iter().sum();
    if total > n {
        if require_each && (sizes[1] + sizes[2] + usize::from(f.train > 0.0)) > n {
            return Err(Error::InsufficientData(format!(
                "{n} {pool} windows cannot fill the requested partitions"
            )));
        }
        // rounding overflow is taken from train
        sizes[0] -= total - n;
    }
    Ok(sizes)
}

/// Deterministic partition of labeled and unlabeled windows.
pub fn split(
    dataset: &Dataset,
    labels: &LabelTable,
    fractions: &SplitFractions,
    seed: u64,
) -> Result<SplitAssignment> {
    fractions.labeled.validate("labeled")?;
    fractions.unlabeled.validate("unlabeled")?;

    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for &w in &dataset.windows {
        let clip = dataset.clip_id(w);
        let id = window_id(clip, w.start);
        if labels.get(clip, w.start).is_some() {
            labeled.push(id);
        } else {
            unlabeled.push(id);
        }
    }

    let mut assignments = BTreeMap::new();
    let pools = [
        (labeled, &fractions.labeled, true, [Partition::LabeledTrain, Partition::LabeledVal, Partition::LabeledTest]),
        (unlabeled, &fractions.unlabeled, false, [Partition::UnlabeledTrain, Partition::UnlabeledVal, Partition::UnlabeledTest]),
    ];
    for (stream, (mut ids, f, require_each, parts)) in pools.into_iter().enumerate() {
        let name = if require_each { "labeled" } else { "unlabeled" };
        let sizes = part_sizes(ids.len(), f, require_each, name)?;
        ids.sort();
        ids.shuffle(&mut RngStream::substream(seed, stream as u64));
        // val and test are drawn first so their sizes are exact
        let mut it = ids.into_iter();
        for (part, size) in [(parts[1], sizes[1]), (parts[2], sizes[2]), (parts[0], sizes[0])] {
            for id in it.by_ref().take(size) {
                assignments.insert(id, part);
            }
        }
    }

    Ok(SplitAssignment {
        seed,
        fractions: *fractions,
        assignments,
    })
}
