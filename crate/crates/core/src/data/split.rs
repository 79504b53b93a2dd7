use std::collections::HashSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed for drawing the UCF101 validation subset from `trainlist01.txt`.
pub const UCF101_VAL_SEED: u64 = 101;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Bair,
    Kth,
    Ucf101,
    Synthetic,
}

impl DatasetKind {
    pub fn channels(self) -> usize {
        match self {
            DatasetKind::Kth => 1,
            _ => 3,
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bair" => Ok(DatasetKind::Bair),
            "kth" => Ok(DatasetKind::Kth),
            "ucf101" => Ok(DatasetKind::Ucf101),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(Error::Dataset(format!("unknown dataset '{other}'"))),
        }
    }
}

/// Disjoint index sets covering every video once.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    /// True when the three sets are disjoint and together equal `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Sequences 0–255 test, 256–2559 validation, the rest training.
pub fn split_bair(count: usize) -> Splits {
    let mut s = Splits::default();
    for i in 0..count {
        match i {
            0..=255 => s.test.push(i),
            256..=2559 => s.val.push(i),
            _ => s.train.push(i),
        }
    }
    s
}

/// Persons 1–15 train, 16 validation, 17–25 test. `persons[i]` is the
/// subject of video `i`.
pub fn split_kth(persons: &[u32]) -> Result<Splits> {
    let mut s = Splits::default();
    for (i, &p) in persons.iter().enumerate() {
        match p {
            1..=15 => s.train.push(i),
            16 => s.val.push(i),
            17..=25 => s.test.push(i),
            _ => return Err(Error::Dataset(format!("KTH person id {p} outside 1..=25"))),
        }
    }
    Ok(s)
}

/// Videos named in `testlist` are test; 5% of `trainlist` (drawn with
/// [`UCF101_VAL_SEED`]) are validation; the remaining trainlist entries are
/// training. `names[i]` is the list entry of video `i`.
pub fn split_ucf101(names: &[String], trainlist: &[String], testlist: &[String]) -> Result<Splits> {
    let test: HashSet<&str> = testlist.iter().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(UCF101_VAL_SEED);
    let n_val = (trainlist.len() as f64 * 0.05).round() as usize;
    let val: HashSet<&str> = sample(&mut rng, trainlist.len(), n_val)
        .into_iter()
        .map(|i| trainlist[i].as_str())
        .collect();
    let train: HashSet<&str> = trainlist.iter().map(String::as_str).collect();
    let mut s = Splits::default();
    for (i, name) in names.iter().enumerate() {
        let n = name.as_str();
        if test.contains(n) {
            s.test.push(i);
        } else if val.contains(n) {
            s.val.push(i);
        } else if train.contains(n) {
            s.train.push(i);
        } else {
            return Err(Error::Dataset(format!("video '{name}' is in neither list")));
        }
    }
    Ok(s)
}

/// `i % 8 == 6` validation, `i % 8 == 7` test, otherwise training.
pub fn split_synthetic(count: usize) -> Splits {
    let mut s = Splits::default();
    for i in 0..count {
        match i % 8 {
            6 => s.val.push(i),
            7 => s.test.push(i),
            _ => s.train.push(i),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bair_ranges() {
        let s = split_bair(6000);
        assert!(s.test.contains(&100));
        assert!(s.val.contains(&1000));
        assert!(s.train.contains(&5000));
        assert!(s.is_partition_of(6000));
    }

    #[test]
    fn kth_person_sixteen_is_validation() {
        let persons: Vec<u32> = (1..=25).collect();
        let s = split_kth(&persons).unwrap();
        assert_eq!(s.val, vec![15]);
        assert_eq!(s.train.len(), 15);
        assert_eq!(s.test.len(), 9);
        assert!(split_kth(&[26]).is_err());
    }

    #[test]
    fn ucf_validation_is_five_percent_and_fixed() {
        let train: Vec<String> = (0..200).map(|i| format!("v_train_{i}.avi")).collect();
        let test: Vec<String> = (0..50).map(|i| format!("v_test_{i}.avi")).collect();
        let names: Vec<String> = train.iter().chain(&test).cloned().collect();
        let a = split_ucf101(&names, &train, &test).unwrap();
        let b = split_ucf101(&names, &train, &test).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.val.len(), 10);
        assert_eq!(a.test.len(), 50);
        assert!(a.is_partition_of(names.len()));
    }

    #[test]
    fn unknown_dataset_errors() {
        assert!(matches!("imagenet".parse::<DatasetKind>(), Err(Error::Dataset(_))));
        assert_eq!("KTH".parse::<DatasetKind>().unwrap().channels(), 1);
    }

    proptest! {
        #[test]
        fn splits_partition(n in 0usize..4000) {
            prop_assert!(split_bair(n).is_partition_of(n));
            prop_assert!(split_synthetic(n).is_partition_of(n));
        }

        #[test]
        fn kth_partition(persons in proptest::collection::vec(1u32..=25, 0..200)) {
            let s = split_kth(&persons).unwrap();
            prop_assert!(s.is_partition_of(persons.len()));
        }
    }
}
