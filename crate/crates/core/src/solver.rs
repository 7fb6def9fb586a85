//! Primal-dual interior-point solver for positivity-constrained pattern fits.
//!
//! Minimizes `F(x)` subject to `c(x) >= 0`, where `c(x) = det(rho(x))^m` on
//! the positive semidefinite cone and zero outside it. The Lagrangian is
//! `L = F - lambda c` and the perturbed complementarity `lambda c = mu` keeps
//! iterates off the boundary. Each outer iteration takes a single Newton step
//! on
//!
//! ```text
//! [ H        -J^T ] [dx     ]   [ -g + lambda J^T ]
//! [ lambda J  c   ] [dlambda] = [ mu - lambda c   ]
//! ```
//!
//! with `H = 2 A^T A - lambda B`, backtracks the step until the state stays
//! strictly positive definite, `lambda >= 0` and the KKT residual decreases,
//! then sets `mu = beta lambda c` at the new point.
//!
//! Two safeguards keep the iterates on the central path. The line search
//! measures decrease with each residual block divided by its own scale,
//! `|g|` for stationarity and `mu` for complementarity, since near the
//! boundary the two differ by orders of magnitude. And `mu` is only reduced
//! while the new point is centered, `|g - lambda J| <= centrality |g|`;
//! otherwise the next step re-centers at `mu = lambda c`. Once `mu` reaches
//! `mu_tol` it is held there while the stationarity converges.
//!
//! With `sigma_i` the probes and `Gamma_i = rho^-1 (sigma_i - sigma_N)`:
//!
//! ```text
//! J_i  = m c Tr(Gamma_i)
//! B_ij = J_i J_j / c - m c Tr(Gamma_i Gamma_j)
//! ```
//!
//! Probes are rank one, `sigma_k = |k><k|`. With `u_k = Lambda^-1/2 V^dagger |k>`
//! from the eigen-decomposition `rho = V Lambda V^dagger` and the Gram matrix
//! `G = U^dagger U`, `Tr(Gamma_i) = G_ii - G_NN` and
//! `Tr(Gamma_i Gamma_j) = |G_ij|^2 - |G_iN|^2 - |G_Nj|^2 + G_NN^2`, so a
//! derivative evaluation costs one `d x d` eigen-decomposition plus `O(N^2 d)`.
//!
//! Cost per iteration, with `M` outcomes, `N` probes, dimension `d`: the
//! objective gradient is `O(N M)` and dominates for heavily oversampled data;
//! the barrier Hessian dominates when `N < d^2`; the dense `N x N` Newton solve
//! (`O(N^3)`) dominates once `N >= d^2`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pattern::{
    objective_and_gradient, objective_hessian, rho_from_x, scaled_rho_from_x, PatternError, PatternMatrix, ProbeSet,
    WeightVector,
};
use crate::quantum::{eig_hermitian_unchecked, ComplexMatrix, DensityMatrix};

/// Smallest eigenvalue of `rho(x)` at which derivatives are still evaluated.
pub const STRICT_PD_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("uniform probe mixture is not positive definite (c = 0); enlarge or diversify the probe set")]
    InfeasibleStart,
    #[error("rho(x) is on the boundary of the PSD cone (min eigenvalue {min_eigenvalue:e})")]
    Boundary { min_eigenvalue: f64 },
    #[error("Newton system is singular even after regularization")]
    SingularSystem,
    #[error("line search stalled at step {alpha:e} (residual {residual:e})")]
    StepStalled { alpha: f64, residual: f64 },
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Initial barrier parameter.
    pub mu0: f64,
    /// Barrier reduction factor in `[0, 1]`.
    pub beta: f64,
    /// Barrier exponent in `(0, 1)`; `None` means `1/d`.
    pub m: Option<f64>,
    pub residual_tol: f64,
    pub mu_tol: f64,
    pub max_iterations: usize,
    pub backtrack_factor: f64,
    pub min_step: f64,
    pub armijo_c: f64,
    /// Relative stationarity below which a step also reduces `mu`.
    pub centrality: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mu0: 0.01,
            beta: 0.1,
            m: None,
            residual_tol: 1e-8,
            mu_tol: 1e-10,
            max_iterations: 500,
            backtrack_factor: 0.5,
            min_step: 1e-12,
            armijo_c: 1e-4,
            centrality: 0.1,
        }
    }
}

impl SolverOptions {
    /// Validate and return the barrier exponent for dimension `dim`.
    pub fn barrier_exponent(&self, dim: usize) -> Result<f64, SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidOptions(msg));
        if !(self.mu0 >= 0.0 && self.mu0.is_finite()) {
            return bad(format!("mu0 must be non-negative, got {}", self.mu0));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        for (name, v) in [
            ("residual_tol", self.residual_tol),
            ("mu_tol", self.mu_tol),
            ("min_step", self.min_step),
            ("armijo_c", self.armijo_c),
            ("centrality", self.centrality),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            ));
        }
        let m = self.m.unwrap_or(1.0 / dim as f64);
        if !(m > 0.0 && m < 1.0) {
            return bad(format!("barrier exponent m must lie in (0, 1), got {m}"));
        }
        Ok(m)
    }
}

/// `det(rho)^m` when `rho` is PSD (eigenvalues above `-1e-12`, tiny negatives
/// clamped), else 0.
pub fn constraint_value(rho: &DensityMatrix, m: f64) -> f64 {
    let eig = rho.eigen();
    if eig.min() < -1e-12 || eig.min() <= 0.0 {
        return 0.0;
    }
    (m * eig.eigenvalues.iter().map(|l| l.ln()).sum::<f64>()).exp()
}

/// Barrier constraint value, gradient and Hessian at one point.
#[derive(Debug, Clone)]
pub struct ConstraintDerivatives {
    pub value: f64,
    pub jacobian: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub rho: DensityMatrix,
    pub min_eigenvalue: f64,
}

pub fn constraint_derivatives(
    x: &WeightVector,
    probes: &ProbeSet,
    m: f64,
) -> Result<ConstraintDerivatives, SolverError> {
    let rho = rho_from_x(x, probes)?;
    let min_eigenvalue = rho.min_eigenvalue();
    // Positivity and the whitening both use S^-1 rho S^-1; the traces below
    // are invariant under the congruence.
    let scaled = scaled_rho_from_x(x, probes)?;
    let eig = eig_hermitian_unchecked(&scaled);
    let scaled_min = eig.min();
    if !(scaled_min > STRICT_PD_TOL) {
        return Err(SolverError::Boundary {
            min_eigenvalue: min_eigenvalue.min(scaled_min),
        });
    }
    let d = probes.dim();
    let n = probes.len();
    let free = n - 1;

    let inv_sqrt: Vec<f64> = eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()).collect();
    let vh = eig.eigenvectors.adjoint();
    let mut whitened = ComplexMatrix::zeros(d, n);
    for (k, ket) in probes.scaled_kets().iter().enumerate() {
        let u = &vh * ket;
        for r in 0..d {
            whitened[(r, k)] = u[r] * inv_sqrt[r];
        }
    }
    let gram = whitened.ad_mul(&whitened);
    let last = n - 1;
    let g_last = gram[(last, last)].re;

    let log_det = eig.eigenvalues.iter().map(|l| l.ln()).sum::<f64>() + probes.log_det_scale();
    let value = (m * log_det).exp();
    let tr_gamma: Vec<f64> = (0..free).map(|i| gram[(i, i)].re - g_last).collect();
    let jacobian = DVector::from_iterator(free, tr_gamma.iter().map(|t| m * value * t));

    let sq = |z: Complex64| z.norm_sqr();
    let mut hessian = DMatrix::zeros(free, free);
    for i in 0..free {
        for j in 0..=i {
            let tr_gg = sq(gram[(i, j)]) - sq(gram[(i, last)]) - sq(gram[(last, j)])
                + g_last * g_last;
            // J_i J_j / c - m c Tr(Gamma_i Gamma_j), written without dividing by c
            let b = m * value * (m * tr_gamma[i] * tr_gamma[j] - tr_gg);
            hessian[(i, j)] = b;
            hessian[(j, i)] = b;
        }
    }
    Ok(ConstraintDerivatives {
        value,
        jacobian,
        hessian,
        rho,
        min_eigenvalue,
    })
}

/// Euclidean norm of `(g - lambda J, lambda c - mu)`.
pub fn kkt_residual(g: &DVector<f64>, j: &DVector<f64>, c: f64, lambda: f64, mu: f64) -> f64 {
    let stationarity = (g - j * lambda).norm_squared();
    let complementarity = lambda * c - mu;
    (stationarity + complementarity * complementarity).sqrt()
}

/// Primal-dual iterate with everything evaluated at `x`.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: WeightVector,
    pub lambda: f64,
    pub mu: f64,
    pub objective: f64,
    pub gradient: DVector<f64>,
    pub constraint: ConstraintDerivatives,
    pub residual: f64,
}

impl SolverState {
    pub fn evaluate(
        x: WeightVector,
        lambda: f64,
        mu: f64,
        probes: &ProbeSet,
        patterns: &PatternMatrix,
        m: f64,
    ) -> Result<Self, SolverError> {
        let constraint = constraint_derivatives(&x, probes, m)?;
        let (objective, gradient) = objective_and_gradient(&x, patterns)?;
        let residual = kkt_residual(&gradient, &constraint.jacobian, constraint.value, lambda, mu);
        Ok(Self {
            x,
            lambda,
            mu,
            objective,
            gradient,
            constraint,
            residual,
        })
    }

    pub fn c(&self) -> f64 {
        self.constraint.value
    }

    /// `|g - lambda J|`.
    pub fn stationarity(&self) -> f64 {
        (&self.gradient - &self.constraint.jacobian * self.lambda).norm()
    }

    pub fn set_mu(&mut self, mu: f64) {
        self.mu = mu;
        self.residual = kkt_residual(
            &self.gradient,
            &self.constraint.jacobian,
            self.constraint.value,
            self.lambda,
            mu,
        );
    }
}

fn solve_bordered(
    h: &DMatrix<f64>,
    j: &DVector<f64>,
    c: f64,
    lambda: f64,
    rhs: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = j.len();
    let mut k = DMatrix::zeros(n + 1, n + 1);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    for i in 0..n {
        k[(i, n)] = -j[i];
        k[(n, i)] = lambda * j[i];
    }
    k[(n, n)] = c;
    let sol = k.clone().lu().solve(rhs)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let back = (&k * &sol - rhs).norm();
    let scale = rhs.norm() + k.amax() * sol.amax();
    if back > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    Some(sol)
}

/// Solve the bordered Newton system for `(dx, dlambda)`. A singular system is
/// retried with `H + delta I`, `delta = 1e-12 (1 + max|H|)` growing tenfold up
/// to `1e-6 (1 + max|H|)`.
pub fn newton_step(
    h: &DMatrix<f64>,
    j: &DVector<f64>,
    c: f64,
    lambda: f64,
    g: &DVector<f64>,
    mu: f64,
) -> Result<(DVector<f64>, f64), SolverError> {
    let n = j.len();
    if h.nrows() != n || h.ncols() != n || g.len() != n {
        return Err(SolverError::InvalidOptions(format!(
            "Newton system shapes disagree: H {}x{}, J {}, g {}",
            h.nrows(),
            h.ncols(),
            n,
            g.len()
        )));
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(&(j * lambda - g));
    rhs[n] = mu - lambda * c;

    let split = |sol: DVector<f64>| (sol.rows(0, n).clone_owned(), sol[n]);
    if let Some(sol) = solve_bordered(h, j, c, lambda, &rhs) {
        return Ok(split(sol));
    }
    let scale = 1.0 + h.amax();
    let mut delta = 1e-12;
    while delta <= 1e-6 * (1.0 + 1e-9) {
        let shifted = h + DMatrix::identity(n, n) * (delta * scale);
        if let Some(sol) = solve_bordered(&shifted, j, c, lambda, &rhs) {
            return Ok(split(sol));
        }
        delta *= 10.0;
    }
    Err(SolverError::SingularSystem)
}

fn stationarity_scale(state: &SolverState) -> f64 {
    state
        .gradient
        .norm()
        .max(state.constraint.jacobian.norm() * state.lambda)
}

/// Residual with each block divided by its scale at `state`, frozen for one
/// line search.
fn scaled_merit(state: &SolverState) -> impl Fn(&SolverState) -> f64 {
    let inverse = |v: f64| if v > 0.0 { 1.0 / v } else { 1.0 };
    let ws = inverse(stationarity_scale(state));
    let wc = inverse(if state.mu > 0.0 { state.mu } else { state.lambda * state.c() });
    move |s: &SolverState| {
        let a = s.stationarity() * ws;
        let b = (s.lambda * s.c() - s.mu) * wc;
        a.hypot(b)
    }
}

/// Backtracking from `alpha = 1` by `backtrack_factor` until `rho` stays
/// positive definite, `lambda >= 0` and
/// `merit_new <= (1 - armijo_c alpha) merit_old` at fixed `mu`, where the
/// merit divides each residual block by its size at `state`.
/// A zero direction is accepted unchanged with `alpha = 1`.
pub fn line_search(
    state: &SolverState,
    dx: &DVector<f64>,
    dlambda: f64,
    probes: &ProbeSet,
    patterns: &PatternMatrix,
    options: &SolverOptions,
    m: f64,
) -> Result<(f64, SolverState), SolverError> {
    if dlambda == 0.0 && dx.iter().all(|v| *v == 0.0) {
        return Ok((1.0, state.clone()));
    }
    let merit = scaled_merit(state);
    let merit0 = merit(state);
    let mut alpha = 1.0;
    while alpha >= options.min_step {
        let lambda = state.lambda + alpha * dlambda;
        if lambda >= 0.0 {
            let x = &state.x + dx * alpha;
            match SolverState::evaluate(x, lambda, state.mu, probes, patterns, m) {
                Ok(trial) => {
                    if merit(&trial) <= (1.0 - options.armijo_c * alpha) * merit0 {
                        return Ok((alpha, trial));
                    }
                }
                Err(SolverError::Boundary { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        alpha *= options.backtrack_factor;
    }
    Err(SolverError::StepStalled {
        alpha,
        residual: state.residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Stalled,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::Stalled => "stalled",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub objective: f64,
    pub residual: f64,
    pub mu: f64,
    /// Step length that produced this iterate (0 for the starting point).
    pub alpha: f64,
    pub c: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    records: Vec<IterationRecord>,
}

impl ConvergenceTrace {
    pub fn push(&mut self, record: IterationRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// CSV with columns `k, F, log10_residual, mu, alpha, c, min_eig`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["k", "F", "log10_residual", "mu", "alpha", "c", "min_eig"])?;
        for r in &self.records {
            wtr.serialize((
                r.k,
                r.objective,
                r.residual.log10(),
                r.mu,
                r.alpha,
                r.c,
                r.min_eigenvalue,
            ))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: WeightVector,
    pub rho: DensityMatrix,
    pub lambda: f64,
    pub mu: f64,
    pub objective: f64,
    pub residual: f64,
    pub status: SolveStatus,
    /// Number of accepted Newton steps.
    pub iterations: usize,
    pub trace: ConvergenceTrace,
}

fn record(state: &SolverState, k: usize, alpha: f64) -> IterationRecord {
    IterationRecord {
        k,
        objective: state.objective,
        residual: state.residual,
        mu: state.mu,
        alpha,
        c: state.c(),
        min_eigenvalue: state.constraint.min_eigenvalue,
    }
}

/// Fit `patterns` with a positive semidefinite mixture of `probes`.
///
/// Starts from the uniform mixture `x_i = 1/N` with `lambda = mu0 / c`, takes
/// one Newton step per barrier update and stops once the KKT residual is below
/// `residual_tol` with `mu <= mu_tol`.
pub fn solve(
    patterns: &PatternMatrix,
    probes: &ProbeSet,
    options: &SolverOptions,
) -> Result<Solution, SolverError> {
    let m = options.barrier_exponent(probes.dim())?;
    if patterns.probe_count() != probes.len() {
        return Err(PatternError::ShapeMismatch(format!(
            "{} pattern columns for {} probes",
            patterns.probe_count(),
            probes.len()
        ))
        .into());
    }
    let x0 = probes.uniform_weights();
    let c0 = match constraint_derivatives(&x0, probes, m) {
        Ok(d) if d.value > 0.0 => d.value,
        Ok(_) | Err(SolverError::Boundary { .. }) => return Err(SolverError::InfeasibleStart),
        Err(e) => return Err(e),
    };
    let hessian_f = objective_hessian(patterns);
    let mut state = SolverState::evaluate(x0, options.mu0 / c0, options.mu0, probes, patterns, m)?;
    let mut trace = ConvergenceTrace::default();
    trace.push(record(&state, 0, 0.0));

    let mut k = 0;
    let status = loop {
        if state.residual <= options.residual_tol && state.mu <= options.mu_tol {
            break SolveStatus::Converged;
        }
        if k >= options.max_iterations {
            break SolveStatus::MaxIterations;
        }
        let h = &hessian_f - &state.constraint.hessian * state.lambda;
        let (dx, dlambda) = newton_step(
            &h,
            &state.constraint.jacobian,
            state.c(),
            state.lambda,
            &state.gradient,
            state.mu,
        )?;
        let (alpha, mut next) =
            match line_search(&state, &dx, dlambda, probes, patterns, options, m) {
                Ok(step) => step,
                Err(SolverError::StepStalled { .. }) => break SolveStatus::Stalled,
                Err(e) => return Err(e),
            };
        let complementarity = next.lambda * next.c();
        let mu = if complementarity > 0.0 {
            let centered = next.stationarity() <= options.centrality * stationarity_scale(&next);
            if centered && state.mu > options.mu_tol {
                options.beta * complementarity
            } else {
                complementarity
            }
        } else {
            (options.beta * state.mu * 0.1).max(options.mu_tol)
        };
        next.set_mu(mu);
        k += 1;
        state = next;
        trace.push(record(&state, k, alpha));
    };

    Ok(Solution {
        rho: state.constraint.rho.clone(),
        x: state.x,
        lambda: state.lambda,
        mu: state.mu,
        objective: state.objective,
        residual: state.residual,
        status,
        iterations: k,
        trace,
    })
}
