//! Design matrices and predictor scaling.
//!
//! A [`DesignMatrix`] stores predictors without the intercept; every model
//! in this crate adds the intercept itself as its first coefficient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StatsError};

pub const INTERCEPT: &str = "(Intercept)";

/// Labels of one grouping factor, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFactor {
    pub name: String,
    pub labels: Vec<String>,
}

impl GroupFactor {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Self {
        GroupFactor {
            name: name.into(),
            labels,
        }
    }

    /// Sorted distinct labels.
    pub fn levels(&self) -> Vec<String> {
        let mut v = self.labels.clone();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub groups: Vec<GroupFactor>,
}

impl DesignMatrix {
    pub fn new(columns: Vec<String>, x: DMatrix<f64>, y: DVector<f64>, groups: Vec<GroupFactor>) -> Result<Self> {
        if x.ncols() != columns.len() {
            return Err(StatsError::Contract(format!(
                "{} column names for {} columns",
                columns.len(),
                x.ncols()
            )));
        }
        if x.nrows() != y.len() {
            return Err(StatsError::Contract(format!("{} rows but {} responses", x.nrows(), y.len())));
        }
        for g in &groups {
            if g.labels.len() != y.len() {
                return Err(StatsError::Contract(format!(
                    "factor {} has {} labels for {} rows",
                    g.name,
                    g.labels.len(),
                    y.len()
                )));
            }
        }
        if let Some((r, c)) = first_non_finite(&x) {
            return Err(StatsError::Contract(format!("non-finite value in column {} row {r}", columns[c])));
        }
        if let Some(r) = y.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::Contract(format!("non-finite response in row {r}")));
        }
        Ok(DesignMatrix { columns, x, y, groups })
    }

    /// Builds from row-major predictor rows.
    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>], y: Vec<f64>, groups: Vec<GroupFactor>) -> Result<Self> {
        let p = columns.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(StatsError::Contract(format!("row {bad} has {} values, expected {p}", rows[bad].len())));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        DesignMatrix::new(columns, x, DVector::from_vec(y), groups)
    }

    pub fn nrows(&self) -> usize {
        self.y.len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn group(&self, name: &str) -> Option<&GroupFactor> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Predictors with the intercept column prepended.
    pub fn with_intercept(&self) -> DMatrix<f64> {
        let n = self.nrows();
        let mut m = DMatrix::zeros(n, self.ncols() + 1);
        m.column_mut(0).fill(1.0);
        m.columns_mut(1, self.ncols()).copy_from(&self.x);
        m
    }

    /// Column names including the intercept.
    pub fn coefficient_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_string()).chain(self.columns.iter().cloned()).collect()
    }

    /// Keeps the named predictor columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<DesignMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| StatsError::Contract(format!("no predictor named {n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DesignMatrix {
            columns: names.to_vec(),
            x: self.x.select_columns(&idx),
            y: self.y.clone(),
            groups: self.groups.clone(),
        })
    }

    pub fn subset_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            columns: self.columns.clone(),
            x: self.x.select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r])),
            groups: self
                .groups
                .iter()
                .map(|g| GroupFactor::new(g.name.clone(), rows.iter().map(|&r| g.labels[r].clone()).collect()))
                .collect(),
        }
    }
}

fn first_non_finite(x: &DMatrix<f64>) -> Option<(usize, usize)> {
    for c in 0..x.ncols() {
        for r in 0..x.nrows() {
            if !x[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

/// Means and sample standard deviations (ddof = 1) learned on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Scaling {
    pub fn fit(train: &DesignMatrix) -> Result<Scaling> {
        let n = train.nrows();
        if n < 2 {
            return Err(StatsError::Config(format!("cannot scale predictors from {n} rows")));
        }
        let mut means = Vec::with_capacity(train.ncols());
        let mut sds = Vec::with_capacity(train.ncols());
        for (j, name) in train.columns.iter().enumerate() {
            let col = train.x.column(j);
            let mean = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            if !(sd > 1e-12 * mean.abs().max(1.0)) {
                return Err(StatsError::Config(format!("predictor {name} has zero variance")));
            }
            means.push(mean);
            sds.push(sd);
        }
        Ok(Scaling {
            columns: train.columns.clone(),
            means,
            sds,
        })
    }

    pub fn apply(&self, m: &DesignMatrix) -> Result<DesignMatrix> {
        if m.columns != self.columns {
            return Err(StatsError::Contract(format!(
                "scaling learned on [{}] applied to [{}]",
                self.columns.join(", "),
                m.columns.join(", ")
            )));
        }
        let mut out = m.clone();
        for j in 0..self.columns.len() {
            let (mu, sd) = (self.means[j], self.sds[j]);
            out.x.column_mut(j).apply(|v| *v = (*v - mu) / sd);
        }
        Ok(out)
    }
}

/// Scales `train` and `apply_to` with moments learned on `train`.
pub fn standardize(train: &DesignMatrix, apply_to: &DesignMatrix) -> Result<(DesignMatrix, DesignMatrix, Scaling)> {
    let s = Scaling::fit(train)?;
    Ok((s.apply(train)?, s.apply(apply_to)?, s))
}
