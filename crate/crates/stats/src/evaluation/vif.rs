use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Result, StatsError};

pub const VIF_WARN: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vif {
    pub column: String,
    /// `f64::INFINITY` when the column is an exact combination of the others.
    pub value: f64,
    pub flagged: bool,
}

/// `1 / (1 - R^2)` of each predictor regressed (with intercept) on the rest.
pub fn vif(design: &DesignMatrix) -> Result<Vec<Vif>> {
    let p = design.ncols();
    if p < 2 {
        return Err(StatsError::Contract(format!("VIF needs at least two predictors, got {p}")));
    }
    let n = design.nrows();
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let target: DVector<f64> = design.x.column(j).into_owned();
        let mut others = DMatrix::zeros(n, p);
        others.column_mut(0).fill(1.0);
        for (c, k) in (1..).zip((0..p).filter(|&k| k != j)) {
            others.column_mut(c).copy_from(&design.x.column(k));
        }
        let mean = target.mean();
        let tss: f64 = target.iter().map(|v| (v - mean).powi(2)).sum();
        let value = if tss <= 0.0 {
            f64::INFINITY
        } else {
            let svd = others.clone().svd(true, true);
            let coef = svd
                .solve(&target, 1e-12 * svd.singular_values.max())
                .map_err(|e| StatsError::Numerical(e.to_string()))?;
            let rss = (&target - &others * coef).norm_squared();
            let one_minus_r2 = rss / tss;
            if one_minus_r2 < 1e-12 {
                f64::INFINITY
            } else {
                1.0 / one_minus_r2
            }
        };
        out.push(Vif {
            column: design.columns[j].clone(),
            value,
            flagged: value > VIF_WARN,
        });
    }
    Ok(out)
}
