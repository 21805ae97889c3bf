//! MAP estimation of `(beta, theta, theta_d, Sigma)` by blockwise coordinate
//! descent on the penalized negative log-posterior
//!
//! ```text
//! n logdet Sigma + m logdet R + lambda_I sum(theta) + lambda_o |Sigma^-1|_1
//!     + tr(Sigma^-1 E^T R^-1 E),        E = Y - 1 (P beta)^T
//! ```
//!
//! The trace term is the Kronecker quadratic form written per factor, so no
//! `(nm) x (nm)` matrix is ever built.

pub mod cv;
pub mod glasso;
pub mod lbfgsb;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cokrige::{self, FitMetadata, StrainGrid, TrainedEmulator};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Chol};
use crate::spectral::{self, KernelFamily, KernelInput, KernelParams, StructureDesign};

pub use cv::{select_penalties, CvConfig, CvResult, CvScoring};
pub use glasso::{graphical_lasso, GlassoOptions, GlassoResult};
pub use lbfgsb::{BoxQnConfig, BoxQnResult};

/// Value `beta_2` is pinned to when the unconstrained slope is not positive.
pub const BETA_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    #[serde(alias = "lambda_I")]
    pub lambda_i: f64,
    pub lambda_o: f64,
    pub max_sweeps: usize,
    pub sweep_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    /// KKT tolerance of the Sigma step, relative to `max(1, max_j (W_0)_jj)`.
    pub glasso_tol: f64,
    pub glasso_max_iter: usize,
    pub theta_opt: BoxQnConfig,
    pub beta_epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda_i: 10.0,
            lambda_o: 10.0,
            max_sweeps: 50,
            sweep_tol: 1e-6,
            restarts: 5,
            seed: 0,
            glasso_tol: 1e-7,
            glasso_max_iter: 500,
            theta_opt: BoxQnConfig::default(),
            beta_epsilon: BETA_EPSILON,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_i", self.lambda_i), ("lambda_o", self.lambda_o)] {
            if !(v >= 0.0) || !v.is_finite() {
                return invalid(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        for (name, v) in [
            ("sweep_tol", self.sweep_tol),
            ("glasso_tol", self.glasso_tol),
            ("theta_opt.grad_tol", self.theta_opt.grad_tol),
            ("beta_epsilon", self.beta_epsilon),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} = {v} must be positive"));
            }
        }
        if self.restarts == 0 || self.max_sweeps == 0 || self.glasso_max_iter == 0 {
            return invalid("restarts, max_sweeps and glasso_max_iter must be at least 1");
        }
        if self.theta_opt.memory == 0 {
            return invalid("theta_opt.memory must be at least 1");
        }
        Ok(())
    }

    fn glasso_options(&self) -> GlassoOptions {
        GlassoOptions {
            tol: self.glasso_tol,
            max_iter: self.glasso_max_iter,
            penalize_diagonal: true,
        }
    }
}

/// Training designs and log responses with the per-coordinate squared
/// differences the theta gradient needs.
#[derive(Debug, Clone)]
pub struct TrainingData {
    designs: Vec<StructureDesign>,
    inputs: Vec<KernelInput>,
    grid: StrainGrid,
    y: DMatrix<f64>,
    basis: DMatrix<f64>,
    family: KernelFamily,
    nugget: f64,
    /// `(z_ik - z_jk)^2` per kernel coordinate, then the diameter if used.
    sq_diffs: Vec<DMatrix<f64>>,
}

impl TrainingData {
    /// `y_log` holds log stresses, one row per design.
    pub fn new(
        designs: Vec<StructureDesign>,
        grid: StrainGrid,
        y_log: DMatrix<f64>,
        family: KernelFamily,
        nugget: f64,
    ) -> Result<Self> {
        let n = designs.len();
        if n < 2 {
            return invalid(format!("fitting needs at least 2 designs, got {n}"));
        }
        if y_log.shape() != (n, grid.len()) {
            return invalid(format!(
                "responses are {:?}, expected ({n}, {})",
                y_log.shape(),
                grid.len()
            ));
        }
        if y_log.iter().any(|v| !v.is_finite()) {
            return invalid("log responses contain non-finite values");
        }
        if !(nugget >= 0.0) || !nugget.is_finite() {
            return invalid(format!("nugget = {nugget} must be finite and nonnegative"));
        }
        let inputs = spectral::embed_all(&designs, family)?;
        check_distinct(&inputs, family)?;
        let basis = cokrige::mean_basis(&grid)?;

        let k = inputs[0].coords.len();
        let mut sq_diffs: Vec<DMatrix<f64>> = (0..k)
            .map(|c| {
                DMatrix::from_fn(n, n, |i, j| {
                    let d = inputs[i].coords[c] - inputs[j].coords[c];
                    d * d
                })
            })
            .collect();
        if family.uses_diameter() {
            sq_diffs.push(DMatrix::from_fn(n, n, |i, j| {
                let d = inputs[i].diameter - inputs[j].diameter;
                d * d
            }));
        }
        Ok(Self {
            designs,
            inputs,
            grid,
            y: y_log,
            basis,
            family,
            nugget,
            sq_diffs,
        })
    }

    /// Same as [`TrainingData::new`] from stresses, which must be positive.
    pub fn from_stress(
        designs: Vec<StructureDesign>,
        grid: StrainGrid,
        stress: &DMatrix<f64>,
        family: KernelFamily,
        nugget: f64,
    ) -> Result<Self> {
        if let Some(pos) = stress.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            let (i, j) = (pos % stress.nrows(), pos / stress.nrows());
            return invalid(format!("stress[{i}][{j}] = {} is not positive", stress[(i, j)]));
        }
        Self::new(designs, grid, stress.map(f64::ln), family, nugget)
    }

    /// Rows `idx` only, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n()) {
            return invalid(format!("subset index {bad} out of range for {} designs", self.n()));
        }
        let designs = idx.iter().map(|&i| self.designs[i].clone()).collect();
        let y = DMatrix::from_fn(idx.len(), self.m(), |r, c| self.y[(idx[r], c)]);
        Self::new(designs, self.grid.clone(), y, self.family, self.nugget)
    }

    pub fn designs(&self) -> &[StructureDesign] {
        &self.designs
    }

    pub fn inputs(&self) -> &[KernelInput] {
        &self.inputs
    }

    pub fn grid(&self) -> &StrainGrid {
        &self.grid
    }

    pub fn log_responses(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn n(&self) -> usize {
        self.designs.len()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    /// Length of `theta`.
    pub fn theta_len(&self) -> usize {
        self.inputs[0].coords.len()
    }

    /// Optimized kernel variables: `theta`, then `theta_d` when used.
    pub fn n_kernel_vars(&self) -> usize {
        self.sq_diffs.len()
    }

    pub fn kernel_params(&self, theta: &[f64], theta_d: f64) -> KernelParams {
        KernelParams {
            theta: theta.to_vec(),
            theta_d,
            nugget: self.nugget,
            family: self.family,
        }
    }

    pub fn correlation(&self, theta: &[f64], theta_d: f64) -> DMatrix<f64> {
        spectral::correlation_matrix_from_inputs(&self.inputs, &self.kernel_params(theta, theta_d))
    }

    /// Mean pairwise squared difference per kernel variable, 1 where it
    /// vanishes. Used to put the theta coordinates on a common scale.
    fn coordinate_scales(&self) -> Vec<f64> {
        let n = self.n();
        let pairs = (n * (n - 1) / 2) as f64;
        self.sq_diffs
            .iter()
            .map(|d| {
                let mut s = 0.0;
                for j in 0..n {
                    for i in (j + 1)..n {
                        s += d[(i, j)];
                    }
                }
                let mean = s / pairs;
                if mean > 0.0 && mean.is_finite() {
                    mean
                } else {
                    1.0
                }
            })
            .collect()
    }
}

fn check_distinct(inputs: &[KernelInput], family: KernelFamily) -> Result<()> {
    for i in 0..inputs.len() {
        for j in (i + 1)..inputs.len() {
            let (a, b) = (&inputs[i], &inputs[j]);
            let scale = a.coords.iter().chain(&b.coords).fold(1.0f64, |s, v| s.max(v.abs()));
            let same_coords = a.coords.iter().zip(&b.coords).all(|(x, y)| (x - y).abs() <= 1e-12 * scale);
            let same_d = !family.uses_diameter() || a.diameter == b.diameter;
            if same_coords && same_d {
                return invalid(format!(
                    "designs {i} and {j} are indistinguishable to the {family} kernel (equal up to a cyclic shift)"
                ));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub beta: DVector<f64>,
    pub theta: Vec<f64>,
    pub theta_d: f64,
    pub sigma: DMatrix<f64>,
}

impl ModelState {
    /// `beta = 0`, `Sigma = I` and the given kernel weights.
    pub fn initial(data: &TrainingData, theta: Vec<f64>, theta_d: f64) -> Self {
        Self {
            beta: DVector::zeros(data.basis.ncols()),
            theta,
            theta_d,
            sigma: DMatrix::identity(data.m(), data.m()),
        }
    }
}

fn factor_correlation(data: &TrainingData, theta: &[f64], theta_d: f64) -> Result<(DMatrix<f64>, Chol)> {
    let r = data.correlation(theta, theta_d);
    let chol = linalg::cholesky(&r)
        .ok_or_else(|| Error::SingularMatrix("correlation matrix is not positive definite".into()))?;
    Ok((r, chol))
}

fn factor_sigma(sigma: &DMatrix<f64>) -> Result<Chol> {
    linalg::cholesky(sigma).ok_or_else(|| Error::SingularMatrix("Sigma is not positive definite".into()))
}

/// `E = Y - 1 (P beta)^T`.
pub fn residuals(data: &TrainingData, beta: &DVector<f64>) -> DMatrix<f64> {
    let mu = &data.basis * beta;
    let mut e = data.y.clone();
    for mut row in e.row_iter_mut() {
        row -= mu.transpose();
    }
    e
}

fn check_state(data: &TrainingData, state: &ModelState) -> Result<()> {
    if state.beta.len() != data.basis.ncols() {
        return invalid(format!("beta has {} entries, expected {}", state.beta.len(), data.basis.ncols()));
    }
    if state.theta.len() != data.theta_len() {
        return invalid(format!("theta has {} entries, expected {}", state.theta.len(), data.theta_len()));
    }
    if state.sigma.shape() != (data.m(), data.m()) {
        return invalid(format!("Sigma is {:?}, expected ({}, {})", state.sigma.shape(), data.m(), data.m()));
    }
    data.kernel_params(&state.theta, state.theta_d).validate()
}

fn sum_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// The penalized negative log-posterior at `state`.
pub fn neg_log_posterior(state: &ModelState, data: &TrainingData, lambda_i: f64, lambda_o: f64) -> Result<f64> {
    check_state(data, state)?;
    let chol_s = factor_sigma(&state.sigma)?;
    let (_, chol_r) = factor_correlation(data, &state.theta, state.theta_d)?;
    let w = linalg::spd_inverse(&chol_s);
    let e = residuals(data, &state.beta);
    let quad = sum_product(&(e.transpose() * chol_r.solve(&e)), &w);
    let (n, m) = (data.n() as f64, data.m() as f64);
    Ok(n * linalg::log_det(&chol_s)
        + m * linalg::log_det(&chol_r)
        + lambda_i * state.theta.iter().sum::<f64>()
        + lambda_o * linalg::l1_norm(&w)
        + quad)
}

/// Theta-block objective `m logdet R + tr(W E^T R^-1 E) + lambda_i sum(theta)`
/// and its gradient in `[theta.., theta_d]` (the latter only when the family
/// uses the diameter). Differs from the full objective by a constant in
/// `theta`.
pub fn theta_objective(
    data: &TrainingData,
    theta: &[f64],
    theta_d: f64,
    e: &DMatrix<f64>,
    w: &DMatrix<f64>,
    lambda_i: f64,
) -> Result<(f64, Vec<f64>)> {
    let (r, chol) = factor_correlation(data, theta, theta_d)?;
    let b = chol.solve(e);
    let m = data.m() as f64;
    let value = m * linalg::log_det(&chol) + sum_product(&(e * w), &b) + lambda_i * theta.iter().sum::<f64>();

    // G = m R^-1 - R^-1 E W E^T R^-1; d/dtheta_k = -sum_ij G_ij R_ij D^k_ij
    let mut g = linalg::spd_inverse(&chol) * m;
    g -= &b * w * b.transpose();
    let gr = g.component_mul(&r);
    let grad = data
        .sq_diffs
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let base = -sum_product(&gr, d);
            if k < theta.len() {
                base + lambda_i
            } else {
                base
            }
        })
        .collect();
    Ok((value, grad))
}

/// Gradient of [`neg_log_posterior`] in `[theta.., theta_d]`.
pub fn neg_log_posterior_theta_grad(state: &ModelState, data: &TrainingData, lambda_i: f64) -> Result<Vec<f64>> {
    check_state(data, state)?;
    let w = linalg::spd_inverse(&factor_sigma(&state.sigma)?);
    let e = residuals(data, &state.beta);
    Ok(theta_objective(data, &state.theta, state.theta_d, &e, &w, lambda_i)?.1)
}

/// Sigma update: the graphical lasso with input covariance
/// `W_0 = E^T R^-1 E / n + lambda_o I` and penalty `lambda_o`, returning the
/// inverse of the estimated precision. This is not the exact block
/// minimizer of the objective (that would be `S` with penalty
/// `lambda_o / n` and no ridge), so the sweep keeps it only if the objective
/// does not go up.
pub fn sigma_step(state: &ModelState, data: &TrainingData, lambda_o: f64, opts: &GlassoOptions) -> Result<DMatrix<f64>> {
    check_state(data, state)?;
    let (_, chol_r) = factor_correlation(data, &state.theta, state.theta_d)?;
    let e = residuals(data, &state.beta);
    let n = data.n() as f64;
    let mut w0 = e.transpose() * chol_r.solve(&e) / n;
    linalg::symmetrize(&mut w0);
    // ridge lambda_o I keeps W_0 positive definite even when the residuals are low rank
    for j in 0..w0.nrows() {
        w0[(j, j)] += lambda_o;
    }
    // tolerance is relative to the scale of W_0: the attainable KKT residual
    // grows with it
    let opts = GlassoOptions { tol: opts.tol * w0.diagonal().max().max(1.0), ..*opts };
    let out = glasso::graphical_lasso(&w0, lambda_o, &opts)?;
    let mut sigma = out.covariance;
    linalg::symmetrize(&mut sigma);
    Ok(sigma)
}

/// Generalized least squares for `beta` with `beta_2` held positive.
pub fn beta_step(state: &ModelState, data: &TrainingData, epsilon: f64) -> Result<DVector<f64>> {
    check_state(data, state)?;
    let (_, chol_r) = factor_correlation(data, &state.theta, state.theta_d)?;
    let w = linalg::spd_inverse(&factor_sigma(&state.sigma)?);
    gls_beta(&chol_r, &data.y, &data.basis, &w, epsilon)
}

/// `beta = (c P^T W P)^-1 P^T W Y^T R^-1 1` with `c = 1^T R^-1 1`. When the
/// basis has a second column whose coefficient comes out `<= 0`, that
/// coefficient is fixed at `epsilon` and the rest re-solved.
pub fn gls_beta(chol_r: &Chol, y: &DMatrix<f64>, basis: &DMatrix<f64>, w: &DMatrix<f64>, epsilon: f64) -> Result<DVector<f64>> {
    let n = y.nrows();
    let g = chol_r.solve(&DVector::from_element(n, 1.0));
    let c = g.sum();
    let lhs = basis.transpose() * w * basis * c;
    let rhs = basis.transpose() * w * (y.transpose() * &g);
    let chol = linalg::cholesky(&lhs).ok_or_else(|| collinear_error(basis))?;
    let mut beta = chol.solve(&rhs);
    if beta.len() >= 2 && !(beta[1] > 0.0) {
        // fix beta_2 and solve the remaining normal equations
        let free: Vec<usize> = (0..beta.len()).filter(|&k| k != 1).collect();
        let a = DMatrix::from_fn(free.len(), free.len(), |i, j| lhs[(free[i], free[j])]);
        let b = DVector::from_fn(free.len(), |i, _| rhs[free[i]] - lhs[(free[i], 1)] * epsilon);
        let sub = linalg::cholesky(&a).ok_or_else(|| collinear_error(basis))?;
        let sol = sub.solve(&b);
        beta[1] = epsilon;
        for (i, &k) in free.iter().enumerate() {
            beta[k] = sol[i];
        }
    }
    Ok(beta)
}

fn collinear_error(basis: &DMatrix<f64>) -> Error {
    let q = basis.ncols();
    let mut worst = (0, 0, 0.0f64);
    for a in 0..q {
        for b in (a + 1)..q {
            let (ca, cb) = (basis.column(a), basis.column(b));
            let denom = ca.norm() * cb.norm();
            let cos = if denom > 0.0 { (ca.dot(&cb) / denom).abs() } else { 1.0 };
            if cos >= worst.2 {
                worst = (a, b, cos);
            }
        }
    }
    if q == 1 || basis.column(0).norm() == 0.0 {
        return Error::SingularMatrix("beta system is singular: basis column 0 is zero".into());
    }
    Error::SingularMatrix(format!(
        "beta system is singular: basis columns {} and {} are collinear (|cos| = {:.6})",
        worst.0, worst.1, worst.2
    ))
}

#[derive(Debug, Clone)]
pub struct ThetaStep {
    pub theta: Vec<f64>,
    pub theta_d: f64,
    pub line_search_failed: bool,
    pub iterations: usize,
}

/// Box-constrained quasi-Newton on the theta block. Coordinates are scaled
/// by their mean pairwise squared difference internally; bounds stay at 0.
pub fn theta_step(state: &ModelState, data: &TrainingData, lambda_i: f64, cfg: &BoxQnConfig) -> Result<ThetaStep> {
    check_state(data, state)?;
    let w = linalg::spd_inverse(&factor_sigma(&state.sigma)?);
    let e = residuals(data, &state.beta);
    let scales = data.coordinate_scales();
    let k = data.theta_len();
    let uses_d = data.n_kernel_vars() > k;

    let split = |u: &[f64]| -> (Vec<f64>, f64) {
        let theta = (0..k).map(|i| u[i] / scales[i]).collect();
        let theta_d = if uses_d { u[k] / scales[k] } else { state.theta_d };
        (theta, theta_d)
    };
    let f = |u: &[f64]| -> (f64, Vec<f64>) {
        let (theta, theta_d) = split(u);
        match theta_objective(data, &theta, theta_d, &e, &w, lambda_i) {
            Ok((v, g)) if v.is_finite() => (v, g.iter().zip(&scales).map(|(gi, s)| gi / s).collect()),
            _ => (f64::INFINITY, vec![0.0; u.len()]),
        }
    };
    let mut u0: Vec<f64> = (0..k).map(|i| state.theta[i] * scales[i]).collect();
    if uses_d {
        u0.push(state.theta_d * scales[k]);
    }
    let nv = u0.len();
    let res = lbfgsb::minimize(f, &u0, &vec![0.0; nv], &vec![f64::INFINITY; nv], cfg);
    if !res.f.is_finite() {
        return Err(Error::SingularMatrix("correlation matrix is singular at the incoming theta".into()));
    }
    let (theta, theta_d) = split(&res.x);
    Ok(ThetaStep {
        theta,
        theta_d,
        line_search_failed: res.line_search_failed,
        iterations: res.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    /// Objective at the initial state, then after every full sweep.
    pub objectives: Vec<f64>,
    pub active_frequencies: usize,
    pub precision_offdiag_nonzero: usize,
    pub converged: bool,
    pub line_search_warnings: usize,
    /// Sigma steps skipped because glasso did not reach its tolerance.
    pub glasso_failures: usize,
    /// Updates rejected by the descent guard, including skipped Sigma steps.
    pub rejected_steps: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub seed: u64,
    pub lambda_i: f64,
    pub lambda_o: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

impl FitTrace {
    pub fn best(&self) -> &RestartTrace {
        &self.restarts[self.best_restart]
    }
}

/// Initial kernel weights per restart, in scaled units: all ones for the
/// first, i.i.d. Exp(1) for the rest.
/// Starting `(theta, theta_d)` for each restart: unit scaled weights for
/// restart 0, i.i.d. Exp(1) scaled weights for the others.
pub fn initial_weights(data: &TrainingData, restarts: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let scales = data.coordinate_scales();
    let nv = scales.len();
    let k = data.theta_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..restarts)
        .map(|r| {
            let u: Vec<f64> = (0..nv)
                .map(|_| if r == 0 { 1.0 } else { Exp1.sample(&mut rng) })
                .collect();
            let x: Vec<f64> = u.iter().zip(&scales).map(|(u, s)| u / (nv as f64 * s)).collect();
            let theta_d = if nv > k { x[k] } else { 0.0 };
            (x[..k].to_vec(), theta_d)
        })
        .collect()
}

fn offdiag_nonzero(sigma: &DMatrix<f64>) -> usize {
    let Some(chol) = linalg::cholesky(sigma) else { return 0 };
    let w = linalg::spd_inverse(&chol);
    let m = w.nrows();
    (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && w[(i, j)].abs() > 1e-12 * (w[(i, i)] * w[(j, j)]).sqrt())
        .count()
}

/// One BCD run from the given kernel weights. Sigma and theta updates are
/// only accepted when they do not raise the objective.
pub fn run_bcd(data: &TrainingData, cfg: &FitConfig, theta0: Vec<f64>, theta_d0: f64, restart: usize) -> (Option<ModelState>, RestartTrace) {
    let mut trace = RestartTrace {
        restart,
        objectives: vec![],
        active_frequencies: 0,
        precision_offdiag_nonzero: 0,
        converged: false,
        line_search_warnings: 0,
        glasso_failures: 0,
        rejected_steps: 0,
        error: None,
    };
    let start = ModelState::initial(data, theta0, theta_d0);
    // mean starts at its GLS fit under Sigma = I rather than zero
    let start = beta_step(&start, data, cfg.beta_epsilon).map(|beta| ModelState { beta, ..start });
    match start.and_then(|s| bcd_loop(data, cfg, s, &mut trace)) {
        Ok(state) => {
            trace.active_frequencies = state.theta.iter().filter(|t| **t > 0.0).count();
            trace.precision_offdiag_nonzero = offdiag_nonzero(&state.sigma);
            (Some(state), trace)
        }
        Err(e) => {
            trace.error = Some(e.to_string());
            (None, trace)
        }
    }
}

fn bcd_loop(data: &TrainingData, cfg: &FitConfig, mut state: ModelState, trace: &mut RestartTrace) -> Result<ModelState> {
    let (li, lo) = (cfg.lambda_i, cfg.lambda_o);
    let mut f = neg_log_posterior(&state, data, li, lo)?;
    trace.objectives.push(f);
    let gopts = cfg.glasso_options();

    for _ in 0..cfg.max_sweeps {
        let prev = f;

        // a glasso that cannot certify its answer leaves Sigma where it was
        match sigma_step(&state, data, lo, &gopts) {
            Ok(sigma) => {
                let cand = ModelState { sigma, ..state.clone() };
                match neg_log_posterior(&cand, data, li, lo) {
                    Ok(fc) if fc <= f => {
                        state = cand;
                        f = fc;
                    }
                    _ => trace.rejected_steps += 1,
                }
            }
            Err(Error::Convergence { .. }) => {
                trace.glasso_failures += 1;
                trace.rejected_steps += 1;
            }
            Err(e) => return Err(e),
        }

        let beta = beta_step(&state, data, cfg.beta_epsilon)?;
        let cand = ModelState { beta, ..state.clone() };
        match neg_log_posterior(&cand, data, li, lo) {
            Ok(fc) if fc <= f => {
                state = cand;
                f = fc;
            }
            _ => trace.rejected_steps += 1,
        }

        let step = theta_step(&state, data, li, &cfg.theta_opt)?;
        if step.line_search_failed {
            trace.line_search_warnings += 1;
        }
        let cand = ModelState {
            theta: step.theta,
            theta_d: step.theta_d,
            ..state.clone()
        };
        match neg_log_posterior(&cand, data, li, lo) {
            Ok(fc) if fc <= f => {
                state = cand;
                f = fc;
            }
            _ => trace.rejected_steps += 1,
        }

        trace.objectives.push(f);
        if prev - f <= cfg.sweep_tol * prev.abs().max(1.0) {
            trace.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Fits the emulator, keeping the restart with the lowest final objective
/// (lowest index on ties).
pub fn fit(data: &TrainingData, cfg: &FitConfig) -> Result<(TrainedEmulator, FitTrace)> {
    cfg.validate()?;
    let inits = initial_weights(data, cfg.restarts, cfg.seed);
    let runs: Vec<(Option<ModelState>, RestartTrace)> = inits
        .into_par_iter()
        .enumerate()
        .map(|(r, (theta, theta_d))| run_bcd(data, cfg, theta, theta_d, r))
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (r, (state, trace)) in runs.iter().enumerate() {
        if state.is_some() {
            let f = *trace.objectives.last().expect("successful run records objectives");
            if best.is_none_or(|(_, bf)| f < bf) {
                best = Some((r, f));
            }
        }
    }
    let traces: Vec<RestartTrace> = runs.iter().map(|(_, t)| t.clone()).collect();
    let Some((best_idx, objective)) = best else {
        let msgs: Vec<String> = traces
            .iter()
            .map(|t| format!("restart {}: {}", t.restart, t.error.as_deref().unwrap_or("unknown")))
            .collect();
        return Err(Error::Fit(format!("all restarts failed; {}", msgs.join("; "))));
    };
    let state = runs[best_idx].0.clone().expect("best restart has a state");
    let trace = FitTrace {
        seed: cfg.seed,
        lambda_i: cfg.lambda_i,
        lambda_o: cfg.lambda_o,
        best_restart: best_idx,
        restarts: traces,
    };
    let metadata = FitMetadata {
        lambda_i: cfg.lambda_i,
        lambda_o: cfg.lambda_o,
        objective,
        iterations: trace.restarts[best_idx].objectives.len() - 1,
    };
    let params = data.kernel_params(&state.theta, state.theta_d);
    let emulator = TrainedEmulator::new(
        data.designs.clone(),
        data.grid.clone(),
        data.y.clone(),
        params,
        state.beta,
        state.sigma,
        metadata,
    )?;
    Ok((emulator, trace))
}
