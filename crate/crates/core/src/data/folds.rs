use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

const MIN_IDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// `k` independently shuffled train/validation/test splits of `ids`.
///
/// Train and validation sizes are `floor(p * n)`; the remainder goes to test,
/// so 101 ids split 40/10/51 under `(0.4, 0.1, 0.5)`.
pub fn make_folds(ids: &[String], k: usize, proportions: (f64, f64, f64), seed: u64) -> Result<Vec<FoldSplit>, DataError> {
    if ids.len() < MIN_IDS {
        return Err(DataError::Config(format!("{} ids, need at least {MIN_IDS}", ids.len())));
    }
    if k == 0 {
        return Err(DataError::Config("fold count must be positive".into()));
    }
    let (pt, pv, ps) = proportions;
    if [pt, pv, ps].iter().any(|p| !(0.0..=1.0).contains(p)) || (pt + pv + ps - 1.0).abs() > 1e-9 {
        return Err(DataError::Config(format!("proportions {proportions:?} must be in [0, 1] and sum to 1")));
    }
    let n = ids.len();
    let n_train = (pt * n as f64 + 1e-9).floor() as usize;
    let n_val = (pv * n as f64 + 1e-9).floor() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..k)
        .map(|fold_index| {
            let mut order = ids.to_vec();
            order.shuffle(&mut rng);
            let test = order.split_off(n_train + n_val);
            let val = order.split_off(n_train);
            FoldSplit { fold_index, train: order, val, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id{i}")).collect()
    }

    #[test]
    fn sizes() {
        for f in make_folds(&ids(100), 4, (0.4, 0.1, 0.5), 1).unwrap() {
            assert_eq!((f.train.len(), f.val.len(), f.test.len()), (40, 10, 50));
        }
        let f = &make_folds(&ids(101), 4, (0.4, 0.1, 0.5), 1).unwrap()[0];
        assert_eq!((f.train.len(), f.val.len(), f.test.len()), (40, 10, 51));
    }

    #[test]
    fn seeded_and_independent() {
        let a = make_folds(&ids(50), 4, (0.4, 0.1, 0.5), 7).unwrap();
        assert_eq!(a, make_folds(&ids(50), 4, (0.4, 0.1, 0.5), 7).unwrap());
        assert_ne!(a[0].test, a[1].test);
        assert_ne!(a, make_folds(&ids(50), 4, (0.4, 0.1, 0.5), 8).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(make_folds(&ids(9), 4, (0.4, 0.1, 0.5), 0).is_err());
        assert!(make_folds(&ids(20), 4, (0.4, 0.1, 0.4), 0).is_err());
        assert!(make_folds(&ids(20), 0, (0.4, 0.1, 0.5), 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_the_ids(n in 10usize..300, seed in any::<u64>()) {
            let all = ids(n);
            for f in make_folds(&all, 4, (0.4, 0.1, 0.5), seed).unwrap() {
                let mut seen = HashSet::new();
                for id in f.train.iter().chain(&f.val).chain(&f.test) {
                    prop_assert!(seen.insert(id.clone()));
                }
                prop_assert_eq!(seen.len(), n);
                prop_assert!(f.train.len() as f64 <= 0.4 * n as f64 + 1e-9 && f.train.len() as f64 > 0.4 * n as f64 - 1.0);
            }
        }
    }
}
