use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ManifestRecord, TrainingError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Record indices per split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Split label per record index.
    pub fn assignment(&self, n: usize) -> Vec<Option<Split>> {
        let mut out = vec![None; n];
        for split in [Split::Train, Split::Val, Split::Test] {
            for &i in self.get(split) {
                out[i] = Some(split);
            }
        }
        out
    }
}

/// Seeded shuffle of `0..n` sliced into train, val and test. Val and test
/// sizes are `floor(n·fraction)`; train takes the remainder.
pub fn split_dataset(n: usize, fractions: [f64; 3], seed: u64) -> Result<SplitIndices, TrainingError> {
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(TrainingError::InvalidConfig(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    // The slack keeps exact products such as 0.29 * 100 from flooring down.
    let size = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
    let (val, test) = (size(fractions[1]), size(fractions[2]));
    if val == 0 || test == 0 || val + test >= n {
        return Err(TrainingError::TooSmall(format!(
            "{n} records cannot fill three splits with fractions {fractions:?}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_len = n - val - test;
    Ok(SplitIndices {
        train: order[..train_len].to_vec(),
        val: order[train_len..train_len + val].to_vec(),
        test: order[train_len + val..].to_vec(),
    })
}

/// Use the manifest's own assignment when every record carries one, else
/// split with [`split_dataset`].
pub fn split_records(
    records: &[ManifestRecord],
    fractions: [f64; 3],
    seed: u64,
) -> Result<SplitIndices, TrainingError> {
    if !records.is_empty() && records.iter().all(|r| r.split.is_some()) {
        let pick = |s: Split| {
            (0..records.len())
                .filter(|&i| records[i].split == Some(s))
                .collect::<Vec<_>>()
        };
        let out = SplitIndices {
            train: pick(Split::Train),
            val: pick(Split::Val),
            test: pick(Split::Test),
        };
        for s in [Split::Train, Split::Val, Split::Test] {
            if out.get(s).is_empty() {
                return Err(TrainingError::EmptySplit(s.name()));
            }
        }
        return Ok(out);
    }
    split_dataset(records.len(), fractions, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_records_split_eight_one_one() {
        for seed in 0..20 {
            let s = split_dataset(10, [0.8, 0.1, 0.1], seed).unwrap();
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            split_dataset(57, [0.8, 0.1, 0.1], 3).unwrap(),
            split_dataset(57, [0.8, 0.1, 0.1], 3).unwrap()
        );
        assert_ne!(
            split_dataset(57, [0.8, 0.1, 0.1], 3).unwrap(),
            split_dataset(57, [0.8, 0.1, 0.1], 4).unwrap()
        );
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            split_dataset(2, [0.8, 0.1, 0.1], 0),
            Err(TrainingError::TooSmall(_))
        ));
        assert!(matches!(
            split_dataset(10, [0.5, 0.5, 0.0], 0),
            Err(TrainingError::InvalidConfig(_))
        ));
    }

    proptest! {
        #[test]
        fn partition(n in 10usize..400, seed in any::<u64>()) {
            let s = split_dataset(n, [0.8, 0.1, 0.1], seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(s.val.len(), n / 10);
            prop_assert_eq!(s.test.len(), n / 10);
        }
    }
}
