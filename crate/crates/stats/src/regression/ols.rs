use nalgebra::{DMatrix, DVector};

use crate::design::DesignMatrix;
use crate::error::{Result, StatsError};

use super::{Coefficient, FitDiagnostics, FitResult, ModelKind};

/// Relative size below which a diagonal entry of R marks a dependent column.
const RANK_TOL: f64 = 1e-10;

/// Least squares through a thin QR factorization; returns `(beta, rss, R)`.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<(DVector<f64>, f64, DMatrix<f64>)> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(StatsError::Contract(format!("{n} rows for {p} coefficients")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let dependent: Vec<String> = (0..p)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * x.column(j).norm().max(f64::MIN_POSITIVE))
        .map(|j| names[j].clone())
        .collect();
    if !dependent.is_empty() {
        return Err(StatsError::RankDeficient { columns: dependent });
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, p).into_owned();
    let beta = r
        .solve_upper_triangular(&head)
        .ok_or_else(|| StatsError::Numerical("triangular solve failed".into()))?;
    let resid = y - x * &beta;
    Ok((beta, resid.norm_squared(), r))
}

/// `(R^T R)^{-1}` from the upper-triangular factor.
pub(crate) fn inverse_gram(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = r.nrows();
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| StatsError::Numerical("singular R factor".into()))?;
    Ok(&rinv * rinv.transpose())
}

pub fn fit_ols(design: &DesignMatrix) -> Result<FitResult> {
    let names = design.coefficient_names();
    let x = design.with_intercept();
    let (n, p) = x.shape();
    let (beta, rss, r) = least_squares(&x, &design.y, &names)?;
    let sigma2 = rss / (n - p) as f64;
    let cov = inverse_gram(&r)?;
    let coefficients = names
        .into_iter()
        .enumerate()
        .map(|(j, name)| Coefficient {
            name,
            estimate: beta[j],
            std_error: (sigma2 * cov[(j, j)]).sqrt(),
        })
        .collect();
    let nf = n as f64;
    let loglik = -0.5 * nf * ((2.0 * std::f64::consts::PI * rss / nf).ln() + 1.0);
    Ok(FitResult {
        model: ModelKind::Ols,
        n_obs: n,
        coefficients,
        sigma2,
        random_effects: Vec::new(),
        loglik,
        diagnostics: FitDiagnostics {
            converged: true,
            ..FitDiagnostics::default()
        },
    })
}
