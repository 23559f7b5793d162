use serde::{Deserialize, Serialize};

use crate::error::{Result, StatsError};

use super::permutation::{paired_permutation_test, Sidedness};

/// Paired held-out log-likelihood differences `extended - baseline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaLlh {
    pub deltas: Vec<f64>,
    pub mean: f64,
    /// Mean difference within each fold, indexed by fold.
    pub fold_means: Vec<f64>,
    pub p_value: Option<f64>,
}

/// Which paired units enter the significance test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestUnit {
    #[default]
    Sample,
    Fold,
}

pub fn delta_llh(extended: &[f64], baseline: &[f64], folds: &[usize]) -> Result<DeltaLlh> {
    if extended.len() != baseline.len() || folds.len() != extended.len() {
        return Err(StatsError::Contract(format!(
            "paired vectors of length {} and {} with {} fold labels",
            extended.len(),
            baseline.len(),
            folds.len()
        )));
    }
    if extended.is_empty() {
        return Err(StatsError::Contract("no paired samples".into()));
    }
    let deltas: Vec<f64> = extended.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (d, &f) in deltas.iter().zip(folds) {
        sums[f] += d;
        counts[f] += 1;
    }
    let fold_means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect();
    Ok(DeltaLlh {
        deltas,
        mean,
        fold_means,
        p_value: None,
    })
}

impl DeltaLlh {
    pub fn with_test(mut self, n_perm: usize, seed: u64, sides: Sidedness, unit: TestUnit) -> Self {
        let p = match unit {
            TestUnit::Sample => paired_permutation_test(&self.deltas, n_perm, seed, sides),
            TestUnit::Fold => {
                let units: Vec<f64> = self.fold_means.iter().copied().filter(|m| m.is_finite()).collect();
                paired_permutation_test(&units, n_perm, seed, sides)
            }
        };
        self.p_value = Some(p);
        self
    }
}

/// Conventional significance stars.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}
