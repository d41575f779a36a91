//! Euclidean projection onto the probability simplex `{y >= 0, sum y = 1}`.
//!
//! [`project_simplex_newton`] shifts `g` to `v = g - mean(g) + 1/n` and finds
//! the root of the piecewise-linear `f(s) = mean((s - v)_+) - s` with Newton
//! steps from `s = 0`; the projection is then `(v - s)_+`.
//! [`project_simplex_sort`] is the classic sort-and-threshold method and
//! serves as the fallback when Newton stalls.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexSolverConfig {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SimplexSolverConfig {
    fn default() -> Self {
        SimplexSolverConfig {
            newton_tol: 1e-10,
            newton_max_iter: 100,
        }
    }
}

impl SimplexSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.newton_tol.is_nan() || self.newton_tol <= 0.0 || self.newton_max_iter == 0 {
            return Err(Error::InvalidInput(format!(
                "simplex solver needs newton_tol > 0 and newton_max_iter >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Outcome of the Newton root-find, exposed for diagnostics and tests.
#[derive(Debug, Clone, PartialEq)]
pub enum NewtonOutcome {
    Converged { root: f64, iterations: usize },
    Stalled,
}

/// Runs the Newton iteration on the shifted vector `v`.
pub fn newton_root(v: &[f64], cfg: &SimplexSolverConfig) -> NewtonOutcome {
    let n = v.len() as f64;
    let mut s = 0.0f64;
    let mut prev = f64::NAN;
    for it in 0..cfg.newton_max_iter {
        let mut excess = 0.0;
        let mut active = 0usize;
        for &vi in v {
            if s > vi {
                excess += s - vi;
                active += 1;
            }
        }
        let f = excess / n - s;
        if f.abs() <= cfg.newton_tol {
            return NewtonOutcome::Converged {
                root: s,
                iterations: it,
            };
        }
        let df = active as f64 / n - 1.0;
        if df == 0.0 || s == prev || !f.is_finite() {
            return NewtonOutcome::Stalled;
        }
        prev = s;
        s -= f / df;
    }
    NewtonOutcome::Stalled
}

pub fn project_simplex_newton(g: &[f64], cfg: &SimplexSolverConfig) -> Result<Vec<f64>> {
    let n = g.len();
    if n == 0 {
        return Err(Error::InvalidInput("cannot project an empty vector".into()));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("simplex projection input is not finite".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let nf = n as f64;
    let shift = g.iter().sum::<f64>() / nf - 1.0 / nf;
    let v: Vec<f64> = g.iter().map(|x| x - shift).collect();
    match newton_root(&v, cfg) {
        NewtonOutcome::Converged { root, .. } => Ok(v.iter().map(|vi| (vi - root).max(0.0)).collect()),
        NewtonOutcome::Stalled => {
            let y = project_simplex_sort(g);
            let sum: f64 = y.iter().sum();
            if y.iter().all(|x| x.is_finite()) && (sum - 1.0).abs() < 1e-8 {
                Ok(y)
            } else {
                Err(Error::Numeric("simplex projection failed".into()))
            }
        }
    }
}

pub fn project_simplex_sort(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    if n <= 1 {
        return vec![1.0; n];
    }
    let mut u = g.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    g.iter().map(|x| (x - theta).max(0.0)).collect()
}
