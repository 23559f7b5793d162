//! Ordinary least squares and crossed random-intercept models, plus
//! per-sample held-out scoring of a fitted model.

mod mixed;
mod ols;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Result, StatsError};

pub use mixed::{fit_mixed, mixed_loglik_at, MixedOptions};
pub use ols::fit_ols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ols,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomIntercept {
    pub factor: String,
    pub variance: f64,
    /// Predicted intercept for every level seen in training.
    pub predictions: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after each accepted optimizer step.
    pub loglik_trace: Vec<f64>,
    pub dropped_factors: Vec<String>,
    /// Factors whose variance was set to exactly zero at the boundary.
    pub boundary_factors: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub n_obs: usize,
    pub coefficients: Vec<Coefficient>,
    /// Residual variance. For OLS this is RSS/(n-p); for the mixed model the
    /// maximum-likelihood estimate.
    pub sigma2: f64,
    pub random_effects: Vec<RandomIntercept>,
    /// Maximized training log-likelihood.
    pub loglik: f64,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }

    pub fn variance_of(&self, factor: &str) -> Option<f64> {
        self.random_effects.iter().find(|r| r.factor == factor).map(|r| r.variance)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results always serialize")
    }

    pub fn from_json(text: &str) -> Result<FitResult> {
        serde_json::from_str(text).map_err(|e| StatsError::Contract(format!("malformed fit result: {e}")))
    }
}

/// How group intercepts enter the predictive density of a held-out row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictive {
    /// Seen groups contribute their predicted intercept; an unseen group
    /// contributes zero mean and its variance component.
    #[default]
    Conditional,
    /// Every variance component is added and no intercept is predicted.
    Marginal,
}

pub fn gaussian_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

/// Log density of every held-out row under `fit`.
pub fn heldout_loglik(fit: &FitResult, heldout: &DesignMatrix, mode: Predictive) -> Result<Vec<f64>> {
    let names = heldout.coefficient_names();
    let fitted: Vec<&str> = fit.coefficients.iter().map(|c| c.name.as_str()).collect();
    if names.iter().map(String::as_str).ne(fitted.iter().copied()) {
        return Err(StatsError::Contract(format!(
            "held-out columns [{}] differ from fitted [{}]",
            names.join(", "),
            fitted.join(", ")
        )));
    }
    if !(fit.sigma2 > 0.0) {
        return Err(StatsError::Numerical(format!("residual variance {} is not positive", fit.sigma2)));
    }
    let labels = fit
        .random_effects
        .iter()
        .map(|re| {
            heldout
                .group(&re.factor)
                .map(|g| (re, &g.labels))
                .ok_or_else(|| StatsError::Contract(format!("held-out rows lack factor {}", re.factor)))
        })
        .collect::<Result<Vec<_>>>()?;
    let beta = fit.estimates();
    let mut out = Vec::with_capacity(heldout.nrows());
    for i in 0..heldout.nrows() {
        let mut mean = beta[0];
        for j in 0..heldout.ncols() {
            mean += beta[j + 1] * heldout.x[(i, j)];
        }
        let mut var = fit.sigma2;
        for (re, labels) in &labels {
            match mode {
                Predictive::Marginal => var += re.variance,
                Predictive::Conditional => match re.predictions.get(&labels[i]) {
                    Some(b) => mean += b,
                    None => var += re.variance,
                },
            }
        }
        out.push(gaussian_logpdf(heldout.y[i], mean, var));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::GroupFactor;

    fn toy_fit() -> FitResult {
        FitResult {
            model: ModelKind::Mixed,
            n_obs: 10,
            coefficients: vec![
                Coefficient {
                    name: "(Intercept)".into(),
                    estimate: 1.0,
                    std_error: 0.1,
                },
                Coefficient {
                    name: "x".into(),
                    estimate: 2.0,
                    std_error: 0.1,
                },
            ],
            sigma2: 0.5,
            random_effects: vec![RandomIntercept {
                factor: "participant".into(),
                variance: 0.25,
                predictions: BTreeMap::from([("p1".to_string(), 0.3)]),
            }],
            loglik: -1.0,
            diagnostics: FitDiagnostics::default(),
        }
    }

    fn heldout(rows: &[(f64, f64, &str)]) -> DesignMatrix {
        DesignMatrix::from_rows(
            vec!["x".into()],
            &rows.iter().map(|r| vec![r.0]).collect::<Vec<_>>(),
            rows.iter().map(|r| r.1).collect(),
            vec![GroupFactor::new("participant", rows.iter().map(|r| r.2.to_string()).collect())],
        )
        .unwrap()
    }

    #[test]
    fn zero_residual_unit_variance() {
        assert!((gaussian_logpdf(3.0, 3.0, 1.0) + 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn seen_and_unseen_groups() {
        let fit = toy_fit();
        let h = heldout(&[(0.5, 2.0, "p1"), (0.5, 2.0, "p9")]);
        let ll = heldout_loglik(&fit, &h, Predictive::Conditional).unwrap();
        // seen: mean 1 + 1 + 0.3, var 0.5; unseen: mean 2, var 0.75
        let want0 = -0.5 * (2.0 * PI * 0.5).ln() - (2.0f64 - 2.3).powi(2) / 1.0;
        let want1 = -0.5 * (2.0 * PI * 0.75).ln();
        assert!((ll[0] - want0).abs() < 1e-14);
        assert!((ll[1] - want1).abs() < 1e-14);
        let m = heldout_loglik(&fit, &h, Predictive::Marginal).unwrap();
        assert!((m[0] - want1).abs() < 1e-14);
    }

    #[test]
    fn row_order_does_not_matter() {
        let fit = toy_fit();
        let h = heldout(&[(0.1, 1.0, "p1"), (-0.4, 2.5, "p2"), (1.3, 0.2, "p1")]);
        let mut a = heldout_loglik(&fit, &h, Predictive::Conditional).unwrap();
        let mut b = heldout_loglik(&fit, &h.subset_rows(&[2, 0, 1]), Predictive::Conditional).unwrap();
        let total_a: f64 = a.iter().sum();
        let total_b: f64 = b.iter().sum();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert!((total_a - total_b).abs() < 1e-12);
    }

    #[test]
    fn column_mismatch_is_rejected() {
        let fit = toy_fit();
        let h = DesignMatrix::from_rows(
            vec!["z".into()],
            &[vec![1.0]],
            vec![1.0],
            vec![GroupFactor::new("participant", vec!["p1".into()])],
        )
        .unwrap();
        assert!(matches!(heldout_loglik(&fit, &h, Predictive::Conditional), Err(StatsError::Contract(_))));
    }

    #[test]
    fn json_round_trip() {
        let fit = toy_fit();
        assert_eq!(FitResult::from_json(&fit.to_json()).unwrap(), fit);
    }
}
