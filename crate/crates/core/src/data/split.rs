use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitPolicy {
    /// Random 2:1 split of individual samples.
    Ratio2To1Samples,
    /// Random ~70/30 split of whole segments.
    Ratio70To30Segments,
}

impl SplitPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitPolicy::Ratio2To1Samples => "ratio_2_1_samples",
            SplitPolicy::Ratio70To30Segments => "ratio_70_30_segments",
        }
    }
}

impl fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ratio_2_1_samples" => Ok(SplitPolicy::Ratio2To1Samples),
            "ratio_70_30_segments" => Ok(SplitPolicy::Ratio70To30Segments),
            other => Err(Error::Config(format!(
                "unknown split policy `{other}` (expected ratio_2_1_samples or ratio_70_30_segments)"
            ))),
        }
    }
}

/// Train/test membership of each input index, in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits by group key. Items sharing a key always land together; keys are
/// shuffled in first-appearance order and the first `round(fraction · groups)`
/// go to train.
pub fn split_groups(keys: &[Option<&str>], train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if keys.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset"));
    }
    let mut groups: Vec<Option<&str>> = Vec::new();
    for k in keys {
        if !groups.contains(k) {
            groups.push(*k);
        }
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * groups.len() as f64).round() as usize;
    let mut is_train = vec![false; groups.len()];
    for &g in &order[..n_train] {
        is_train[g] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, k) in keys.iter().enumerate() {
        let g = groups.iter().position(|x| x == k).unwrap();
        if is_train[g] { train.push(i) } else { test.push(i) }
    }
    Ok(SplitIndices { train, test })
}

pub fn split_indices(samples: &[Sample], policy: SplitPolicy, seed: u64) -> Result<SplitIndices> {
    match policy {
        SplitPolicy::Ratio2To1Samples => {
            let labels: Vec<String> = (0..samples.len()).map(|i| i.to_string()).collect();
            let keys: Vec<Option<&str>> = labels.iter().map(|l| Some(l.as_str())).collect();
            split_groups(&keys, 2.0 / 3.0, seed)
        }
        SplitPolicy::Ratio70To30Segments => {
            let keys: Vec<Option<&str>> = samples.iter().map(|s| s.segment_id.as_deref()).collect();
            split_groups(&keys, 0.7, seed)
        }
    }
}

/// Deterministic, disjoint and exhaustive `(train, test)` partition.
pub fn split_dataset(samples: Vec<Sample>, policy: SplitPolicy, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let idx = split_indices(&samples, policy, seed)?;
    let mut is_train = vec![false; samples.len()];
    idx.train.iter().for_each(|&i| is_train[i] = true);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, t) in samples.into_iter().zip(is_train) {
        if t { train.push(s) } else { test.push(s) }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn keys(n: usize, per: usize) -> Vec<String> {
        (0..n * per).map(|i| format!("seg{}", i / per)).collect()
    }

    #[test]
    fn three_hundred_samples_split_two_to_one() {
        let labels: Vec<String> = (0..300).map(|i| i.to_string()).collect();
        let k: Vec<Option<&str>> = labels.iter().map(|l| Some(l.as_str())).collect();
        let s = split_groups(&k, 2.0 / 3.0, 5).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (200, 100));
    }

    #[test]
    fn ten_segments_split_seven_three() {
        let labels = keys(10, 4);
        let k: Vec<Option<&str>> = labels.iter().map(|l| Some(l.as_str())).collect();
        let s = split_groups(&k, 0.7, 9).unwrap();
        let segs = |idx: &[usize]| {
            let mut v: Vec<&str> = idx.iter().map(|&i| labels[i].as_str()).collect();
            v.dedup();
            v.len()
        };
        assert_eq!((segs(&s.train), segs(&s.test)), (7, 3));
    }

    #[test]
    fn unknown_policy_and_empty_input_fail() {
        assert!("ratio_1_1".parse::<SplitPolicy>().is_err());
        assert_eq!("ratio-70-30-segments".parse::<SplitPolicy>().unwrap(), SplitPolicy::Ratio70To30Segments);
        assert!(split_groups(&[], 0.7, 0).is_err());
    }

    proptest! {
        #[test]
        fn splits_are_deterministic_disjoint_exhaustive(
            n_seg in 1usize..15, per in 1usize..6, seed in any::<u64>(), by_segment in any::<bool>(),
        ) {
            let labels = if by_segment {
                keys(n_seg, per)
            } else {
                (0..n_seg * per).map(|i| i.to_string()).collect()
            };
            let k: Vec<Option<&str>> = labels.iter().map(|l| Some(l.as_str())).collect();
            let frac = if by_segment { 0.7 } else { 2.0 / 3.0 };
            let a = split_groups(&k, frac, seed).unwrap();
            prop_assert_eq!(&a, &split_groups(&k, frac, seed).unwrap());
            let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for &i in &a.train {
                for &j in &a.test {
                    prop_assert_ne!(k[i], k[j]);
                }
            }
        }
    }
}
