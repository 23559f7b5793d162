use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, Scaling};
use crate::error::{Result, StatsError};
use crate::regression::{fit_mixed, fit_ols, heldout_loglik, FitResult, MixedOptions, ModelKind, Predictive};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Predictor columns, in order. An empty list fits the intercept (and
    /// random intercepts) only.
    pub columns: Vec<String>,
    pub predictive: Predictive,
    pub mixed: MixedOptions,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, columns: Vec<String>) -> Self {
        ModelSpec {
            kind,
            columns,
            predictive: Predictive::default(),
            mixed: MixedOptions::default(),
        }
    }

    pub fn fit(&self, design: &DesignMatrix) -> Result<FitResult> {
        match self.kind {
            ModelKind::Ols => fit_ols(design),
            ModelKind::Mixed => fit_mixed(design, &self.mixed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFit {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub scaling: Scaling,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Held-out log-likelihood of every row, in the row order of the input.
    pub llh: Vec<f64>,
    pub fold_totals: Vec<f64>,
    pub fits: Vec<FoldFit>,
}

impl CvResult {
    pub fn total(&self) -> f64 {
        self.llh.iter().sum()
    }
}

/// Fits `spec` on all folds but one and scores the held-out fold, for every
/// fold. Predictors are standardized with moments of the training part.
///
/// `units` names the sampling unit (the source sentence) of every row; a
/// unit found on both sides of a split is an error.
pub fn cross_validate(design: &DesignMatrix, folds: &[usize], units: &[String], spec: &ModelSpec) -> Result<CvResult> {
    let n = design.nrows();
    if folds.len() != n || units.len() != n {
        return Err(StatsError::Contract(format!(
            "{n} rows, {} fold labels, {} unit labels",
            folds.len(),
            units.len()
        )));
    }
    let selected = if spec.columns == design.columns {
        design.clone()
    } else {
        design.select(&spec.columns)?
    };
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let per_fold: Vec<Result<(Vec<usize>, Vec<f64>, FoldFit)>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == fold).collect();
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != fold).collect();
            if train.is_empty() {
                return Err(StatsError::Fold {
                    fold,
                    detail: "training part is empty".into(),
                });
            }
            let train_units: BTreeSet<&str> = train.iter().map(|&i| units[i].as_str()).collect();
            if let Some(&i) = test.iter().find(|&&i| train_units.contains(units[i].as_str())) {
                return Err(StatsError::Fold {
                    fold,
                    detail: format!("unit {} appears in both training and test rows", units[i]),
                });
            }
            let train_d = selected.subset_rows(&train);
            let test_d = selected.subset_rows(&test);
            let scaling = Scaling::fit(&train_d).map_err(|e| fold_error(fold, e))?;
            let fit = spec.fit(&scaling.apply(&train_d)?).map_err(|e| fold_error(fold, e))?;
            let llh = heldout_loglik(&fit, &scaling.apply(&test_d)?, spec.predictive)?;
            Ok((
                test.clone(),
                llh,
                FoldFit {
                    fold,
                    n_train: train.len(),
                    n_test: test.len(),
                    scaling,
                    fit,
                },
            ))
        })
        .collect();

    let mut llh = vec![f64::NAN; n];
    let mut fold_totals = Vec::with_capacity(k);
    let mut fits = Vec::with_capacity(k);
    for r in per_fold {
        let (rows, vals, fit) = r?;
        fold_totals.push(vals.iter().sum());
        for (i, v) in rows.into_iter().zip(vals) {
            llh[i] = v;
        }
        fits.push(fit);
    }
    Ok(CvResult { llh, fold_totals, fits })
}

fn fold_error(fold: usize, e: StatsError) -> StatsError {
    match e {
        StatsError::Fold { .. } => e,
        other => StatsError::Fold {
            fold,
            detail: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::GroupFactor;

    fn toy(n: usize) -> (DesignMatrix, Vec<usize>, Vec<String>) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 0.731).sin(), (i as f64 * 1.37).cos()]).collect();
        let y: Vec<f64> = rows.iter().enumerate().map(|(i, r)| 2.0 + r[0] + 0.3 * ((i * 7919) % 13) as f64 / 13.0).collect();
        let part = (0..n).map(|i| format!("p{}", i % 3)).collect();
        let d = DesignMatrix::from_rows(vec!["a".into(), "b".into()], &rows, y, vec![GroupFactor::new("participant", part)]).unwrap();
        let units: Vec<String> = (0..n).map(|i| format!("s{}", i / 4)).collect();
        let folds = (0..n).map(|i| (i / 4) % 10).collect();
        (d, folds, units)
    }

    #[test]
    fn every_row_scored_once() {
        let (d, folds, units) = toy(1000);
        let r = cross_validate(&d, &folds, &units, &ModelSpec::new(ModelKind::Ols, d.columns.clone())).unwrap();
        assert_eq!(r.llh.len(), 1000);
        assert!(r.llh.iter().all(|v| v.is_finite()));
        let total: f64 = r.fold_totals.iter().sum();
        assert!((total - r.total()).abs() < 1e-9 * total.abs());
    }

    #[test]
    fn leakage_is_rejected() {
        let (d, mut folds, units) = toy(200);
        folds[0] = 3; // row 0 shares unit s0 with rows 1..3 in fold 0
        let err = cross_validate(&d, &folds, &units, &ModelSpec::new(ModelKind::Ols, vec!["a".into()])).unwrap_err();
        assert!(matches!(err, StatsError::Fold { .. }), "{err}");
    }

    #[test]
    fn empty_training_part() {
        let (d, _, units) = toy(40);
        let folds = vec![0; 40];
        assert!(cross_validate(&d, &folds, &units, &ModelSpec::new(ModelKind::Ols, vec![])).is_err());
    }

    #[test]
    fn mixed_spec_runs() {
        let (d, folds, units) = toy(400);
        let r = cross_validate(&d, &folds, &units, &ModelSpec::new(ModelKind::Mixed, vec!["a".into()])).unwrap();
        assert_eq!(r.fits.len(), 10);
        assert!(r.llh.iter().all(|v| v.is_finite()));
    }
}
