use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

impl FromStr for SplitCounts {
    type Err = Error;

    /// `"155,20,20"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| invalid(format!("bad split counts {s:?}: {e}")))?;
        match parts[..] {
            [train, val, test] => Ok(SplitCounts { train, val, test }),
            _ => Err(invalid(format!("split counts need three values, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn lookup(&self) -> HashMap<&str, Split> {
        [(&self.train, Split::Train), (&self.val, Split::Val), (&self.test, Split::Test)]
            .into_iter()
            .flat_map(|(ids, s)| ids.iter().map(move |i| (i.as_str(), s)))
            .collect()
    }
}

/// Seeded Fisher-Yates permutation of `image_ids`, then the first
/// `counts.train` go to train, the next `counts.val` to val, the rest to test.
pub fn shuffle_split(image_ids: &[String], seed: u64, counts: SplitCounts) -> Result<SplitAssignment> {
    if counts.total() != image_ids.len() {
        return Err(invalid(format!(
            "split counts {}+{}+{} = {} do not match {} images",
            counts.train,
            counts.val,
            counts.test,
            counts.total(),
            image_ids.len()
        )));
    }
    let mut ids = image_ids.to_vec();
    SplitMix64::new(seed).shuffle(&mut ids);
    let test = ids.split_off(counts.train + counts.val);
    let val = ids.split_off(counts.train);
    Ok(SplitAssignment { train: ids, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img_{i:03}")).collect()
    }

    #[test]
    fn reported_split_sizes() {
        let a = shuffle_split(&ids(195), 1, SplitCounts { train: 155, val: 20, test: 20 }).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (155, 20, 20));
        let mut all: Vec<_> = a.train.iter().chain(&a.val).chain(&a.test).cloned().collect();
        all.sort();
        assert_eq!(all, ids(195));
    }

    #[test]
    fn all_train() {
        let a = shuffle_split(&ids(7), 3, SplitCounts { train: 7, val: 0, test: 0 }).unwrap();
        assert_eq!(a.train.len(), 7);
        assert!(a.val.is_empty() && a.test.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let c = SplitCounts { train: 30, val: 5, test: 5 };
        assert_eq!(shuffle_split(&ids(40), 9, c).unwrap(), shuffle_split(&ids(40), 9, c).unwrap());
        assert_ne!(shuffle_split(&ids(40), 9, c).unwrap(), shuffle_split(&ids(40), 10, c).unwrap());
    }

    #[test]
    fn count_mismatch_rejected() {
        assert!(shuffle_split(&ids(10), 0, SplitCounts { train: 5, val: 2, test: 2 }).is_err());
    }

    #[test]
    fn parse_counts() {
        assert_eq!("155,20,20".parse::<SplitCounts>().unwrap(), SplitCounts { train: 155, val: 20, test: 20 });
        assert!("1,2".parse::<SplitCounts>().is_err());
        assert!("a,b,c".parse::<SplitCounts>().is_err());
    }
}
