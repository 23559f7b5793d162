use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Source sentence id to fold index in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, sentence_id: &str) -> Option<usize> {
        self.folds.get(sentence_id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.folds.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

fn check(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(CoreError::Config(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(CoreError::Config(format!("{n} sentences cannot fill {k} folds")));
    }
    Ok(())
}

/// Uniform random partition of sentences into `k` folds whose sizes differ
/// by at most one. Deterministic for a fixed seed.
pub fn assign_folds(sentence_ids: &BTreeSet<String>, k: usize, seed: u64) -> Result<FoldAssignment> {
    let strata = sentence_ids.iter().map(|s| (s.clone(), String::new())).collect();
    assign_folds_stratified(&strata, k, seed)
}

/// Like [`assign_folds`], but shuffles within each stratum and deals the
/// strata out in turn so every stratum is spread evenly over the folds.
pub fn assign_folds_stratified(strata: &BTreeMap<String, String>, k: usize, seed: u64) -> Result<FoldAssignment> {
    check(strata.len(), k)?;
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, stratum) in strata {
        groups.entry(stratum.as_str()).or_default().push(id.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = BTreeMap::new();
    let mut next = 0usize;
    for ids in groups.values_mut() {
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            folds.insert(id.to_string(), next % k);
            next += 1;
        }
    }
    Ok(FoldAssignment { k, seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> BTreeSet<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn hundred_sentences_ten_folds() {
        let a = assign_folds(&ids(100), 10, 7).unwrap();
        assert_eq!(a.fold_sizes(), vec![10; 10]);
    }

    #[test]
    fn same_seed_same_assignment() {
        assert_eq!(assign_folds(&ids(57), 10, 3).unwrap(), assign_folds(&ids(57), 10, 3).unwrap());
        assert_ne!(assign_folds(&ids(57), 10, 3).unwrap(), assign_folds(&ids(57), 10, 4).unwrap());
    }

    #[test]
    fn too_few_sentences() {
        assert!(matches!(assign_folds(&ids(9), 10, 1), Err(CoreError::Config(_))));
        assert!(assign_folds(&ids(9), 1, 1).is_err());
    }

    #[test]
    fn stratified_spreads_each_stratum() {
        let strata: BTreeMap<String, String> = (0..40)
            .map(|i| (format!("s{i}"), if i < 20 { "en-da" } else { "en-de" }.to_string()))
            .collect();
        let a = assign_folds_stratified(&strata, 10, 11).unwrap();
        for lang in ["en-da", "en-de"] {
            let mut per_fold = vec![0; 10];
            for (id, l) in &strata {
                if l == lang {
                    per_fold[a.fold_of(id).unwrap()] += 1;
                }
            }
            assert_eq!(per_fold, vec![2; 10]);
        }
    }

    proptest! {
        #[test]
        fn balanced_partition(n in 10usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let all = ids(n);
            let a = assign_folds(&all, k, seed).unwrap();
            let keys: BTreeSet<String> = a.folds.keys().cloned().collect();
            prop_assert_eq!(keys, all);
            let sizes = a.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
