//! The DSTL model and its alternating minimization.
//!
//! Objective, with `W^v` and `C^v` column-orthonormal and `Y` column-stochastic:
//!
//! ```text
//! sum_v ||X^v - W^v (S^v + H^v)||_F^2 + l1 ||S||_1 + l2 ||H||_tnn
//!     + l3 sum_v ||H^v - C^v Y||_F^2
//! ```
//!
//! where `S` and `H` are the slim tensors stacked from the per-view `k × n`
//! blocks. Each iteration updates `W, C, S, H, Y` in that order, every block
//! by its exact minimizer with the others held fixed, so the objective never
//! increases. Iteration starts from the all-zero state; the first `W` and
//! `C` updates see a zero Procrustes target and fall back to `[I_k; 0]`.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::linalg::{
    nuclear_norm, orthonormality_error, procrustes_max_trace, singular_value_threshold,
    soft_threshold,
};
use crate::simplex::{project_simplex_newton, SimplexSolverConfig};
use crate::slimtensor::{stack_rotate, tensor_nuclear_norm, tubal_shrinkage};

/// Model variant: the full model or one of the three ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    #[serde(rename = "full")]
    Full,
    /// No sparse part: `S` stays zero and the `l1` term is dropped.
    #[serde(rename = "no_S")]
    NoS,
    /// Per-view matrix nuclear norms replace the tensor nuclear norm.
    #[serde(rename = "matrix_nuclear")]
    MatrixNuclear,
    /// No alignment indicator: `C`, `Y` and the `l3` term are dropped.
    #[serde(rename = "no_Y")]
    NoY,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoS, Variant::MatrixNuclear, Variant::NoY];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoS => "no_S",
            Variant::MatrixNuclear => "matrix_nuclear",
            Variant::NoY => "no_Y",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub k: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Hyperparams {
    /// Defaults for latent dimension `k`: `l3 = 1e-4`, `epsilon = 1e-4`,
    /// 100 iterations.
    pub fn new(k: usize) -> Self {
        Hyperparams {
            lambda1: 0.1,
            lambda2: 0.1,
            lambda3: 1e-4,
            k,
            epsilon: 1e-4,
            max_iter: 100,
            seed: 0,
            variant: Variant::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, val) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(val >= 0.0 && val.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} = {val} must be finite and >= 0")));
            }
        }
        if self.k == 0 {
            return Err(Error::InvalidInput("k must be >= 1".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidInput(format!("epsilon = {} must be > 0", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be >= 1".into()));
        }
        Ok(())
    }

    fn alignment_weight(&self) -> f64 {
        match self.variant {
            Variant::NoY => 0.0,
            _ => self.lambda3,
        }
    }
}

/// Complete iterate of the alternating solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// `d_v × k` bases.
    pub w: Vec<DMatrix<f64>>,
    /// `k × n` semantic-unrelated (sparse) parts.
    pub s: Vec<DMatrix<f64>>,
    /// `k × n` semantic-related (low-rank) parts.
    pub h: Vec<DMatrix<f64>>,
    /// `k × k` rotations.
    pub c: Vec<DMatrix<f64>>,
    /// `k × n` column-stochastic indicator.
    pub y: DMatrix<f64>,
}

impl SolverState {
    pub fn zeros(ds: &MultiViewDataset, k: usize) -> Self {
        let n = ds.n_samples();
        let m = ds.n_views();
        SolverState {
            w: ds.views.iter().map(|x| DMatrix::zeros(x.nrows(), k)).collect(),
            s: vec![DMatrix::zeros(k, n); m],
            h: vec![DMatrix::zeros(k, n); m],
            c: vec![DMatrix::zeros(k, k); m],
            y: DMatrix::zeros(k, n),
        }
    }

    fn check_shapes(&self, ds: &MultiViewDataset, k: usize) -> Result<()> {
        let n = ds.n_samples();
        let m = ds.n_views();
        let lens = [self.w.len(), self.s.len(), self.h.len(), self.c.len()];
        if lens.iter().any(|l| *l != m) {
            return Err(Error::Shape(format!("state holds {lens:?} blocks for {m} views")));
        }
        for v in 0..m {
            let d = ds.views[v].nrows();
            if self.w[v].shape() != (d, k)
                || self.s[v].shape() != (k, n)
                || self.h[v].shape() != (k, n)
                || self.c[v].shape() != (k, k)
            {
                return Err(Error::Shape(format!("view {v} blocks do not match d = {d}, k = {k}, n = {n}")));
            }
        }
        if self.y.shape() != (k, n) {
            return Err(Error::Shape(format!("Y is {:?}, expected ({k}, {n})", self.y.shape())));
        }
        Ok(())
    }

    /// Worst deviation from each constraint.
    pub fn constraint_violations(&self) -> ConstraintReport {
        let w = self.w.iter().map(orthonormality_error).fold(0.0, f64::max);
        let c = self.c.iter().map(orthonormality_error).fold(0.0, f64::max);
        let mut y = self.y.iter().map(|x| (-x).max(0.0)).fold(0.0, f64::max);
        for col in self.y.column_iter() {
            y = y.max((col.sum() - 1.0).abs());
        }
        ConstraintReport { w, c, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    /// `max_v max|W^T W - I|`.
    pub w: f64,
    /// `max_v max|C^T C - I|`.
    pub c: f64,
    /// Largest negative entry or column-sum deviation of `Y`.
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    /// `||Y_t - Y_{t-1}||^2 / ||Y_{t-1}||^2`; infinite on the first iteration.
    pub delta_y: f64,
    pub elapsed_ms: f64,
}

/// The four objective terms before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub fidelity: f64,
    pub sparsity: f64,
    pub low_rank: f64,
    pub alignment: f64,
}

impl ObjectiveTerms {
    pub fn weighted(&self, hp: &Hyperparams) -> f64 {
        let mut total = self.fidelity + hp.lambda2 * self.low_rank;
        if hp.variant != Variant::NoS {
            total += hp.lambda1 * self.sparsity;
        }
        if hp.variant != Variant::NoY {
            total += hp.lambda3 * self.alignment;
        }
        total
    }
}

fn fidelity(ds: &MultiViewDataset, st: &SolverState) -> f64 {
    ds.views
        .iter()
        .enumerate()
        .map(|(v, x)| (x - &st.w[v] * (&st.s[v] + &st.h[v])).norm_squared())
        .sum()
}

fn alignment(st: &SolverState) -> f64 {
    st.h
        .iter()
        .zip(&st.c)
        .map(|(h, c)| (h - c * &st.y).norm_squared())
        .sum()
}

pub fn objective_terms(ds: &MultiViewDataset, hp: &Hyperparams, st: &SolverState) -> Result<ObjectiveTerms> {
    st.check_shapes(ds, hp.k)?;
    let low_rank = match hp.variant {
        Variant::MatrixNuclear => st.h.iter().map(nuclear_norm).sum::<Result<f64>>()?,
        _ => tensor_nuclear_norm(&stack_rotate(&st.h)?)?,
    };
    Ok(ObjectiveTerms {
        fidelity: fidelity(ds, st),
        sparsity: st.s.iter().map(|s| s.iter().map(|x| x.abs()).sum::<f64>()).sum(),
        low_rank,
        alignment: alignment(st),
    })
}

/// Objective value of `st` for the model selected by `hp.variant`.
pub fn objective(ds: &MultiViewDataset, hp: &Hyperparams, st: &SolverState) -> Result<f64> {
    Ok(objective_terms(ds, hp, st)?.weighted(hp))
}

fn projections(ds: &MultiViewDataset, st: &SolverState) -> Vec<DMatrix<f64>> {
    ds.views
        .iter()
        .zip(&st.w)
        .map(|(x, w)| w.transpose() * x)
        .collect()
}

/// `W^v = argmax Tr(W^T X^v (S^v + H^v)^T)` over orthonormal `W`.
pub fn update_w(ds: &MultiViewDataset, st: &SolverState) -> Result<Vec<DMatrix<f64>>> {
    ds.views
        .iter()
        .enumerate()
        .map(|(v, x)| procrustes_max_trace(&(x * (&st.s[v] + &st.h[v]).transpose())))
        .collect()
}

/// `C^v = argmax Tr(C^T H^v Y^T)` over orthogonal `C`.
pub fn update_c(st: &SolverState) -> Result<Vec<DMatrix<f64>>> {
    let yt = st.y.transpose();
    st.h.iter().map(|h| procrustes_max_trace(&(h * &yt))).collect()
}

fn update_s_from(proj: &[DMatrix<f64>], hp: &Hyperparams, st: &SolverState) -> Vec<DMatrix<f64>> {
    if hp.variant == Variant::NoS {
        return st.s.iter().map(|s| DMatrix::zeros(s.nrows(), s.ncols())).collect();
    }
    proj.iter()
        .zip(&st.h)
        .map(|(p, h)| soft_threshold(&(p - h), hp.lambda1 / 2.0))
        .collect()
}

/// `S^v = D_{l1/2}(W^vT X^v - H^v)`.
pub fn update_s(ds: &MultiViewDataset, hp: &Hyperparams, st: &SolverState) -> Vec<DMatrix<f64>> {
    update_s_from(&projections(ds, st), hp, st)
}

fn update_h_from(proj: &[DMatrix<f64>], hp: &Hyperparams, st: &SolverState) -> Result<Vec<DMatrix<f64>>> {
    let l3 = hp.alignment_weight();
    let q: Vec<DMatrix<f64>> = proj
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let mut q = p - &st.s[v];
            if l3 > 0.0 {
                q += &st.c[v] * &st.y * l3;
            }
            q / (1.0 + l3)
        })
        .collect();
    let rho = hp.lambda2 / (2.0 * (1.0 + l3));
    match hp.variant {
        Variant::MatrixNuclear => q.iter().map(|q| singular_value_threshold(q, rho)).collect(),
        _ => Ok(tubal_shrinkage(&stack_rotate(&q)?, rho)?.unstack()),
    }
}

/// `H = argmin l2 ||H||_tnn + (l3 + 1) ||H - Q||^2` with
/// `Q^v = (W^vT X^v - S^v + l3 C^v Y) / (l3 + 1)`.
pub fn update_h(ds: &MultiViewDataset, hp: &Hyperparams, st: &SolverState) -> Result<Vec<DMatrix<f64>>> {
    update_h_from(&projections(ds, st), hp, st)
}

/// Column-wise simplex projection of `(1/m) sum_v C^vT H^v`.
pub fn update_y(st: &SolverState, cfg: &SimplexSolverConfig) -> Result<DMatrix<f64>> {
    let m = st.h.len() as f64;
    let mut f = DMatrix::zeros(st.y.nrows(), st.y.ncols());
    for (c, h) in st.c.iter().zip(&st.h) {
        f += c.transpose() * h;
    }
    f /= m;
    let mut y = DMatrix::zeros(f.nrows(), f.ncols());
    for (j, col) in f.column_iter().enumerate() {
        let g: Vec<f64> = col.iter().copied().collect();
        let proj = project_simplex_newton(&g, cfg)?;
        y.column_mut(j).copy_from_slice(&proj);
    }
    Ok(y)
}

/// Matrix handed to k-means: `Y`, or the vertically stacked `H^v` for the
/// variant without an indicator.
pub fn embedding(st: &SolverState, variant: Variant) -> DMatrix<f64> {
    match variant {
        Variant::NoY => {
            let k = st.h[0].nrows();
            let n = st.h[0].ncols();
            let mut out = DMatrix::zeros(k * st.h.len(), n);
            for (v, h) in st.h.iter().enumerate() {
                out.view_mut((v * k, 0), (k, n)).copy_from(h);
            }
            out
        }
        _ => st.y.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Evaluate the objective every iteration (costs one extra nuclear-norm pass).
    pub compute_objective: bool,
    /// Stop once `delta_y <= epsilon`; when false exactly `max_iter` iterations run.
    pub early_stop: bool,
    pub simplex: SimplexSolverConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            compute_objective: true,
            early_stop: true,
            simplex: SimplexSolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: SolverState,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
}

impl FitResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Step-by-step driver; [`fit`] runs it to completion.
pub struct Solver<'a> {
    ds: &'a MultiViewDataset,
    hp: Hyperparams,
    opts: FitOptions,
    state: SolverState,
    iter: usize,
    started: Instant,
}

impl<'a> Solver<'a> {
    pub fn new(ds: &'a MultiViewDataset, hp: &Hyperparams, opts: &FitOptions) -> Result<Self> {
        hp.validate()?;
        opts.simplex.validate()?;
        ds.validate()?;
        let min_d = ds.dims().into_iter().min().unwrap_or(0);
        if hp.k > min_d {
            return Err(Error::InvalidInput(format!(
                "k = {} exceeds the smallest view dimension {min_d}",
                hp.k
            )));
        }
        Ok(Solver {
            ds,
            hp: hp.clone(),
            opts: opts.clone(),
            state: SolverState::zeros(ds, hp.k),
            iter: 0,
            started: Instant::now(),
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn into_state(self) -> SolverState {
        self.state
    }

    /// One pass over the five blocks.
    pub fn step(&mut self) -> Result<TraceRecord> {
        let hp = &self.hp;
        let ds = self.ds;
        let uses_y = hp.variant != Variant::NoY;
        let prev = embedding(&self.state, hp.variant);

        self.state.w = update_w(ds, &self.state)?;
        if uses_y {
            self.state.c = update_c(&self.state)?;
        }
        let proj = projections(ds, &self.state);
        self.state.s = update_s_from(&proj, hp, &self.state);
        self.state.h = update_h_from(&proj, hp, &self.state)?;
        if uses_y {
            self.state.y = update_y(&self.state, &self.opts.simplex)?;
        }

        self.iter += 1;
        let current = embedding(&self.state, hp.variant);
        let base = prev.norm_squared();
        let delta_y = if base > 0.0 {
            (&current - &prev).norm_squared() / base
        } else {
            f64::INFINITY
        };
        let objective = if self.opts.compute_objective {
            objective(ds, hp, &self.state)?
        } else {
            f64::NAN
        };
        if objective.is_nan() && self.opts.compute_objective || current.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("iterate became non-finite at iteration {}", self.iter)));
        }
        Ok(TraceRecord {
            iter: self.iter,
            objective,
            delta_y,
            elapsed_ms: self.started.elapsed().as_secs_f64() * 1e3,
        })
    }

    pub fn run(mut self) -> Result<FitResult> {
        let mut trace = Vec::with_capacity(self.hp.max_iter.min(1024));
        let mut converged = false;
        while self.iter < self.hp.max_iter {
            let rec = self.step()?;
            trace.push(rec);
            if rec.iter > 1 && rec.delta_y <= self.hp.epsilon {
                converged = true;
                if self.opts.early_stop {
                    break;
                }
            }
        }
        Ok(FitResult {
            state: self.state,
            trace,
            converged,
        })
    }
}

/// Runs the solver for `hp.variant` with default options.
pub fn fit(ds: &MultiViewDataset, hp: &Hyperparams) -> Result<FitResult> {
    fit_with_options(ds, hp, &FitOptions::default())
}

pub fn fit_with_options(ds: &MultiViewDataset, hp: &Hyperparams, opts: &FitOptions) -> Result<FitResult> {
    Solver::new(ds, hp, opts)?.run()
}
