//! Crossed random intercepts fitted by maximum likelihood.
//!
//! With relative standard deviations `theta_f = sigma_f / sigma` and the
//! diagonal scaling `Lambda` they induce, the penalized system
//!
//! ```text
//! [ Lambda Z'Z Lambda + I   Lambda Z'X ] [u]   [ Lambda Z'y ]
//! [ X'Z Lambda              X'X        ] [b] = [ X'y        ]
//! ```
//!
//! gives the conditional modes `u` and fixed effects `b`. The penalized
//! residual sum of squares is `r2 = y'y - [u; b] . rhs` and the profiled
//! deviance is `logdet(Lambda Z'Z Lambda + I) + n (1 + ln(2 pi r2 / n))`.
//! Everything is assembled from sufficient statistics computed once, so a
//! deviance evaluation costs one dense Cholesky of size `q + p`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::design::DesignMatrix;
use crate::error::{Result, StatsError};

use super::ols::least_squares;
use super::{Coefficient, FitDiagnostics, FitResult, ModelKind, RandomIntercept};

/// Search box for `ln theta`.
const ETA_MIN: f64 = -12.0;
const ETA_MAX: f64 = 5.0;
const GRAD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct MixedOptions {
    /// Grouping factors to model; `None` uses every factor of the design.
    pub factors: Option<Vec<String>>,
    pub max_iter: usize,
    /// Stop once an accepted step changes the log-likelihood by less than
    /// this fraction.
    pub rel_tol: f64,
}

impl Default for MixedOptions {
    fn default() -> Self {
        MixedOptions {
            factors: None,
            max_iter: 500,
            rel_tol: 1e-8,
        }
    }
}

struct Factor {
    name: String,
    levels: Vec<String>,
    offset: usize,
}

/// Sufficient statistics of the design; `y` is centred to limit
/// cancellation in `r2`, which only moves the intercept.
struct Problem {
    n: usize,
    p: usize,
    q: usize,
    factors: Vec<Factor>,
    ztz: DMatrix<f64>,
    ztx: DMatrix<f64>,
    zty: DVector<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    y_shift: f64,
}

struct Solution {
    deviance: f64,
    r2: f64,
    u: DVector<f64>,
    beta: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Problem {
    fn new(design: &DesignMatrix, factor_names: &[String]) -> Result<Problem> {
        let x = design.with_intercept();
        let (n, p) = x.shape();
        let y_shift = design.y.mean();
        let y = design.y.map(|v| v - y_shift);

        let mut factors = Vec::new();
        let mut index_of: Vec<BTreeMap<String, usize>> = Vec::new();
        let mut q = 0;
        for name in factor_names {
            let g = design.group(name).expect("factor presence checked by caller");
            let levels = g.levels();
            index_of.push(levels.iter().enumerate().map(|(i, l)| (l.clone(), q + i)).collect());
            let count = levels.len();
            factors.push(Factor {
                name: name.clone(),
                offset: q,
                levels,
            });
            q += count;
        }
        let labels: Vec<&Vec<String>> = factor_names.iter().map(|f| &design.group(f).unwrap().labels).collect();

        let mut ztz = DMatrix::zeros(q, q);
        let mut ztx = DMatrix::zeros(q, p);
        let mut zty = DVector::zeros(q);
        let mut cols = Vec::with_capacity(factors.len());
        for i in 0..n {
            cols.clear();
            for (f, lab) in labels.iter().enumerate() {
                cols.push(index_of[f][&lab[i]]);
            }
            for &a in &cols {
                for &b in &cols {
                    ztz[(a, b)] += 1.0;
                }
                for j in 0..p {
                    ztx[(a, j)] += x[(i, j)];
                }
                zty[a] += y[i];
            }
        }
        let xt = x.transpose();
        Ok(Problem {
            n,
            p,
            q,
            factors,
            ztz,
            ztx,
            zty,
            xtx: &xt * &x,
            xty: &xt * &y,
            yty: y.norm_squared(),
            y_shift,
        })
    }

    fn lambda(&self, theta: &[f64]) -> Vec<f64> {
        let mut lam = vec![0.0; self.q];
        for (f, fac) in self.factors.iter().enumerate() {
            lam[fac.offset..fac.offset + fac.levels.len()].fill(theta[f]);
        }
        lam
    }

    fn solve(&self, theta: &[f64]) -> Result<Solution> {
        let (q, p) = (self.q, self.p);
        let lam = self.lambda(theta);
        let mut a = DMatrix::zeros(q + p, q + p);
        let mut rhs = DVector::zeros(q + p);
        for i in 0..q {
            for j in 0..q {
                a[(i, j)] = lam[i] * lam[j] * self.ztz[(i, j)];
            }
            a[(i, i)] += 1.0;
            for j in 0..p {
                let v = lam[i] * self.ztx[(i, j)];
                a[(i, q + j)] = v;
                a[(q + j, i)] = v;
            }
            rhs[i] = lam[i] * self.zty[i];
        }
        a.view_mut((q, q), (p, p)).copy_from(&self.xtx);
        rhs.rows_mut(q, p).copy_from(&self.xty);
        let chol = Cholesky::new(a).ok_or_else(|| StatsError::Numerical("penalized system is not positive definite".into()))?;
        let w = chol.solve(&rhs);
        let r2 = self.yty - w.dot(&rhs);
        if !(r2 > 0.0) {
            return Err(StatsError::Numerical(format!("penalized residual sum of squares {r2} is not positive")));
        }
        let l = chol.l_dirty();
        let logdet: f64 = (0..q).map(|i| 2.0 * l[(i, i)].ln()).sum();
        let nf = self.n as f64;
        let deviance = logdet + nf * (1.0 + (2.0 * PI * r2 / nf).ln());
        Ok(Solution {
            deviance,
            r2,
            u: w.rows(0, q).into_owned(),
            beta: w.rows(q, p).into_owned(),
            chol,
        })
    }

    fn deviance_eta(&self, eta: &[f64]) -> Result<f64> {
        let theta: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        Ok(self.solve(&theta)?.deviance)
    }

    fn gradient(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; eta.len()];
        let mut e = eta.to_vec();
        for k in 0..eta.len() {
            let lo = (eta[k] - GRAD_STEP).max(ETA_MIN);
            let hi = (eta[k] + GRAD_STEP).min(ETA_MAX);
            e[k] = hi;
            let fh = self.deviance_eta(&e)?;
            e[k] = lo;
            let fl = self.deviance_eta(&e)?;
            e[k] = eta[k];
            g[k] = (fh - fl) / (hi - lo);
        }
        Ok(g)
    }
}

struct Optimum {
    eta: Vec<f64>,
    iterations: usize,
    trace: Vec<f64>,
}

fn project(v: f64) -> f64 {
    v.clamp(ETA_MIN, ETA_MAX)
}

/// Projected BFGS on the deviance over `ln theta` with an Armijo
/// backtracking search, so the deviance never increases between steps.
fn minimize(problem: &Problem, opts: &MixedOptions) -> Result<Optimum> {
    let k = problem.factors.len();
    let mut eta = vec![0.0; k];
    let mut f = problem.deviance_eta(&eta)?;
    let mut trace = vec![-0.5 * f];
    let mut g = problem.gradient(&eta)?;
    let mut h = DMatrix::<f64>::identity(k, k);

    for it in 0..opts.max_iter {
        let free: Vec<bool> = (0..k)
            .map(|i| !((eta[i] <= ETA_MIN && g[i] > 0.0) || (eta[i] >= ETA_MAX && g[i] < 0.0)))
            .collect();
        let pg = (0..k).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg < 1e-6 {
            return Ok(Optimum {
                eta,
                iterations: it,
                trace,
            });
        }
        let gv = DVector::from_iterator(k, (0..k).map(|i| if free[i] { g[i] } else { 0.0 }));
        let mut d = -(&h * &gv);
        for i in 0..k {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        if d.dot(&gv) >= 0.0 {
            h = DMatrix::identity(k, k);
            d = -gv.clone();
        }

        let mut t = 1.0;
        let accepted = loop {
            let cand: Vec<f64> = (0..k).map(|i| project(eta[i] + t * d[i])).collect();
            let decrease: f64 = (0..k).map(|i| g[i] * (cand[i] - eta[i])).sum();
            let fc = problem.deviance_eta(&cand)?;
            if fc <= f + 1e-4 * decrease && fc <= f {
                break Some((cand, fc));
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        let Some((cand, fc)) = accepted else {
            // no descent available along the search direction
            if pg < 1e-3 {
                return Ok(Optimum {
                    eta,
                    iterations: it,
                    trace,
                });
            }
            return Err(StatsError::NonConvergence {
                iterations: it,
                last: -0.5 * f,
                trace,
            });
        };

        let g_new = problem.gradient(&cand)?;
        let s = DVector::from_iterator(k, (0..k).map(|i| cand[i] - eta[i]));
        let yv = DVector::from_iterator(k, (0..k).map(|i| g_new[i] - g[i]));
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(k, k);
            let left = &eye - rho * &s * yv.transpose();
            let right = &eye - rho * &yv * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
        }
        let rel = (f - fc) / fc.abs().max(1.0);
        eta = cand;
        f = fc;
        g = g_new;
        trace.push(-0.5 * f);
        if rel < opts.rel_tol {
            return Ok(Optimum {
                eta,
                iterations: it + 1,
                trace,
            });
        }
    }
    Err(StatsError::NonConvergence {
        iterations: opts.max_iter,
        last: -0.5 * f,
        trace,
    })
}

fn resolve_factors(design: &DesignMatrix, opts: &MixedOptions) -> Result<(Vec<String>, Vec<String>)> {
    let requested: Vec<String> = match &opts.factors {
        Some(f) => f.clone(),
        None => design.groups.iter().map(|g| g.name.clone()).collect(),
    };
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for name in requested {
        let g = design
            .group(&name)
            .ok_or_else(|| StatsError::Contract(format!("design has no grouping factor {name}")))?;
        if g.levels().len() < 2 {
            log::warn!("grouping factor {name} has fewer than two levels and is dropped");
            dropped.push(name);
        } else {
            kept.push(name);
        }
    }
    Ok((kept, dropped))
}

fn assemble(problem: &Problem, theta: &[f64], names: Vec<String>, diagnostics: FitDiagnostics) -> Result<FitResult> {
    let sol = problem.solve(theta)?;
    let (q, p, n) = (problem.q, problem.p, problem.n as f64);
    let sigma2 = sol.r2 / n;

    // covariance of the fixed effects: sigma2 (L_XX L_XX')^{-1}
    let l = sol.chol.l();
    let lxx = l.view((q, q), (p, p)).into_owned();
    let lxx_inv = lxx
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| StatsError::Numerical("singular fixed-effect block".into()))?;
    let cov = lxx_inv.transpose() * &lxx_inv;

    let mut beta = sol.beta.clone();
    beta[0] += problem.y_shift;
    let coefficients = names
        .into_iter()
        .enumerate()
        .map(|(j, name)| Coefficient {
            name,
            estimate: beta[j],
            std_error: (sigma2 * cov[(j, j)]).sqrt(),
        })
        .collect();

    let lam = problem.lambda(theta);
    let random_effects = problem
        .factors
        .iter()
        .zip(theta)
        .map(|(fac, th)| RandomIntercept {
            factor: fac.name.clone(),
            variance: th * th * sigma2,
            predictions: fac
                .levels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.clone(), lam[fac.offset + i] * sol.u[fac.offset + i]))
                .collect(),
        })
        .collect();
    Ok(FitResult {
        model: ModelKind::Mixed,
        n_obs: problem.n,
        coefficients,
        sigma2,
        random_effects,
        loglik: -0.5 * sol.deviance,
        diagnostics,
    })
}

fn check_rank(design: &DesignMatrix) -> Result<Vec<String>> {
    let names = design.coefficient_names();
    least_squares(&design.with_intercept(), &design.y, &names)?;
    Ok(names)
}

/// Maximum-likelihood fit of random intercepts for each grouping factor.
///
/// A factor with a single level is dropped with a warning. A variance whose
/// optimum lies on the lower edge of the search box, or whose removal costs
/// less likelihood than the convergence tolerance, is set to exactly zero.
pub fn fit_mixed(design: &DesignMatrix, opts: &MixedOptions) -> Result<FitResult> {
    let names = check_rank(design)?;
    let (kept, dropped) = resolve_factors(design, opts)?;
    let problem = Problem::new(design, &kept)?;
    let mut diagnostics = FitDiagnostics {
        warnings: dropped
            .iter()
            .map(|d| format!("factor {d} has a single level and was dropped"))
            .collect(),
        dropped_factors: dropped,
        ..FitDiagnostics::default()
    };
    if kept.is_empty() {
        diagnostics.converged = true;
        let fit = assemble(&problem, &[], names, diagnostics)?;
        return Ok(fit);
    }

    let opt = minimize(&problem, opts)?;
    let mut theta: Vec<f64> = opt.eta.iter().map(|e| e.exp()).collect();
    let dev_opt = problem.solve(&theta)?.deviance;
    for f in 0..theta.len() {
        let mut trial = theta.clone();
        trial[f] = 0.0;
        let dev0 = problem.solve(&trial)?.deviance;
        if opt.eta[f] <= ETA_MIN || dev0 - dev_opt <= opts.rel_tol * dev_opt.abs().max(1.0) {
            theta = trial;
            diagnostics.boundary_factors.push(kept[f].clone());
        }
    }
    diagnostics.iterations = opt.iterations;
    diagnostics.converged = true;
    diagnostics.loglik_trace = opt.trace;
    let fit = assemble(&problem, &theta, names, diagnostics)?;
    if let Some(&last) = fit.diagnostics.loglik_trace.last() {
        debug_assert!(fit.loglik >= last - 1e-8 * last.abs().max(1.0));
    }
    Ok(fit)
}

/// Log-likelihood with every variance ratio held at `theta` (one per
/// grouping factor of the design, in design order).
pub fn mixed_loglik_at(design: &DesignMatrix, theta: &[f64]) -> Result<f64> {
    let names: Vec<String> = design.groups.iter().map(|g| g.name.clone()).collect();
    if theta.len() != names.len() {
        return Err(StatsError::Contract(format!("{} ratios for {} factors", theta.len(), names.len())));
    }
    let problem = Problem::new(design, &names)?;
    Ok(-0.5 * problem.solve(theta)?.deviance)
}
