//! Separable co-kriging over functional inputs.
//!
//! Responses are modeled in log-stress space. For training designs
//! `I_1..I_n` with responses `y_i` (length `m`), the covariance between
//! `y(I_a)` and `y(I_b)` is `rho(I_a, I_b) * Sigma`, and the mean is `P beta`
//! for the basis `P = [1, log s]` on the strain grid. Prediction at a new
//! design only needs the `n x n` correlation matrix:
//!
//! ```text
//! mean = P beta + (r^T R^-1 (x) I_m) (y_1:n - 1_n (x) P beta)
//! var  = (1 - r^T R^-1 r) Sigma
//! ```

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Chol};
use crate::spectral::{
    self, embed_all, KernelFamily, KernelInput, KernelParams, StructureCurve, StructureDesign,
};

/// Tolerance below zero that a computed predictive scale may reach before it
/// is treated as a numerical failure.
pub const SCALE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StrainGrid {
    levels: Vec<f64>,
}

impl StrainGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return invalid("strain grid is empty");
        }
        if let Some(i) = levels.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return invalid(format!("strain level {i} = {} is not positive", levels[i]));
        }
        if let Some(i) = levels.windows(2).position(|w| w[1] <= w[0]) {
            return invalid(format!("strain levels not strictly increasing at {}", i + 1));
        }
        Ok(Self { levels })
    }

    /// 41 levels evenly spaced on [0.375%, 15%]; the unstrained state is
    /// excluded because the basis and the response transform both take logs.
    pub fn standard() -> Self {
        Self::uniform(0.00375, 0.15, 41)
    }

    pub fn uniform(lo: f64, hi: f64, m: usize) -> Self {
        let levels = if m == 1 {
            vec![lo]
        } else {
            (0..m)
                .map(|j| lo + (hi - lo) * j as f64 / (m - 1) as f64)
                .collect()
        };
        Self { levels }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

impl TryFrom<Vec<f64>> for StrainGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StrainGrid> for Vec<f64> {
    fn from(g: StrainGrid) -> Self {
        g.levels
    }
}

/// Stress values on a strain grid, either in MPa or in log-MPa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub values: Vec<f64>,
    pub in_log_space: bool,
}

impl ResponseCurve {
    pub fn stress(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return invalid(format!("stress value {i} = {} is not positive", values[i]));
        }
        Ok(Self {
            values,
            in_log_space: false,
        })
    }

    pub fn log_stress(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("log-stress value {i} is not finite"));
        }
        Ok(Self {
            values,
            in_log_space: true,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Stress-space copy, back-transforming if needed.
    pub fn to_stress(&self) -> ResponseCurve {
        if self.in_log_space {
            back_transform(self).expect("log-space curve")
        } else {
            self.clone()
        }
    }

    pub fn to_log(&self) -> Result<ResponseCurve> {
        if self.in_log_space {
            Ok(self.clone())
        } else {
            log_transform(self)
        }
    }
}

pub fn log_transform(curve: &ResponseCurve) -> Result<ResponseCurve> {
    if curve.in_log_space {
        return invalid("curve is already in log space");
    }
    if let Some(i) = curve.values.iter().position(|v| !(*v > 0.0)) {
        return invalid(format!("cannot take the log of stress {} at index {i}", curve.values[i]));
    }
    Ok(ResponseCurve {
        values: curve.values.iter().map(|v| v.ln()).collect(),
        in_log_space: true,
    })
}

pub fn back_transform(curve: &ResponseCurve) -> Result<ResponseCurve> {
    if !curve.in_log_space {
        return invalid("curve is not in log space");
    }
    Ok(ResponseCurve {
        values: curve.values.iter().map(|v| v.exp()).collect(),
        in_log_space: false,
    })
}

/// `P = [1_m, log(s)]`.
pub fn mean_basis(grid: &StrainGrid) -> Result<DMatrix<f64>> {
    mean_basis_levels(grid.levels())
}

pub fn mean_basis_levels(levels: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(i) = levels.iter().position(|s| !(*s > 0.0)) {
        return invalid(format!("strain level {i} = {} is not positive", levels[i]));
    }
    let m = levels.len();
    Ok(DMatrix::from_fn(m, 2, |j, c| if c == 0 { 1.0 } else { levels[j].ln() }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    #[serde(rename = "lambda_I")]
    pub lambda_i: f64,
    pub lambda_o: f64,
    pub objective: f64,
    pub iterations: usize,
}

/// A fitted emulator. Immutable once built; all derived quantities are
/// recomputed from the stored parameters in [`TrainedEmulator::new`].
#[derive(Debug, Clone)]
pub struct TrainedEmulator {
    designs: Vec<StructureDesign>,
    inputs: Vec<KernelInput>,
    grid: StrainGrid,
    y: DMatrix<f64>,
    params: KernelParams,
    beta: DVector<f64>,
    sigma: Arc<DMatrix<f64>>,
    basis: DMatrix<f64>,
    chol_r: Chol,
    /// `P beta`
    prior_mean: DVector<f64>,
    /// `R^-1 (Y - 1 (P beta)^T)`, n x m
    weighted_resid: DMatrix<f64>,
    pub metadata: FitMetadata,
}

impl TrainedEmulator {
    pub fn new(
        designs: Vec<StructureDesign>,
        grid: StrainGrid,
        y_log: DMatrix<f64>,
        params: KernelParams,
        beta: DVector<f64>,
        sigma: DMatrix<f64>,
        metadata: FitMetadata,
    ) -> Result<Self> {
        let n = designs.len();
        let m = grid.len();
        if n == 0 {
            return invalid("emulator needs at least one training design");
        }
        if y_log.shape() != (n, m) {
            return invalid(format!("responses are {:?}, expected ({n}, {m})", y_log.shape()));
        }
        if y_log.iter().any(|v| !v.is_finite()) {
            return invalid("responses contain non-finite values");
        }
        params.validate()?;
        let basis = mean_basis(&grid)?;
        if beta.len() != basis.ncols() {
            return invalid(format!("beta has {} entries, basis has {} columns", beta.len(), basis.ncols()));
        }
        if beta.len() >= 2 && !(beta[1] > 0.0) {
            return invalid(format!("beta_2 = {} must be positive", beta[1]));
        }
        if sigma.shape() != (m, m) {
            return invalid(format!("Sigma is {:?}, expected ({m}, {m})", sigma.shape()));
        }
        if (&sigma - sigma.transpose()).amax() > 1e-12 * sigma.amax().max(1.0) {
            return invalid("Sigma is not symmetric");
        }
        if linalg::cholesky(&sigma).is_none() {
            return invalid("Sigma is not positive definite");
        }
        let inputs = embed_all(&designs, params.family)?;
        if params.theta.len() != inputs[0].coords.len() {
            return invalid(format!(
                "theta has {} entries, the {} kernel needs {}",
                params.theta.len(),
                params.family,
                inputs[0].coords.len()
            ));
        }
        let r = spectral::correlation_matrix_from_inputs(&inputs, &params);
        let chol_r = spectral::factorize(&r)?;
        let prior_mean = &basis * &beta;
        let mut resid = y_log.clone();
        for mut row in resid.row_iter_mut() {
            row -= prior_mean.transpose();
        }
        let weighted_resid = chol_r.solve(&resid);
        Ok(Self {
            designs,
            inputs,
            grid,
            y: y_log,
            params,
            beta,
            sigma: Arc::new(sigma),
            basis,
            chol_r,
            prior_mean,
            weighted_resid,
            metadata,
        })
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

    pub fn responses(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn chol_r(&self) -> &Chol {
        &self.chol_r
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn weighted_residuals(&self) -> &DMatrix<f64> {
        &self.weighted_resid
    }

    pub fn p(&self) -> usize {
        self.designs[0].p()
    }

    pub fn n(&self) -> usize {
        self.designs.len()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    /// Same parameters with a different nugget (re-factorizes `R`).
    pub fn with_nugget(&self, nugget: f64) -> Result<Self> {
        let mut params = self.params.clone();
        params.nugget = nugget;
        Self::new(
            self.designs.clone(),
            self.grid.clone(),
            self.y.clone(),
            params,
            self.beta.clone(),
            (*self.sigma).clone(),
            self.metadata.clone(),
        )
    }

    pub fn predict(&self, new: &StructureDesign) -> Result<Prediction> {
        if new.p() != self.p() {
            return invalid(format!("design has {} curve points, model expects {}", new.p(), self.p()));
        }
        let probe = KernelInput::embed(new, self.params.family)?;
        self.predict_input(&probe)
    }

    pub fn predict_input(&self, probe: &KernelInput) -> Result<Prediction> {
        if probe.coords.len() != self.params.theta.len() {
            return invalid("probe coordinates do not match the kernel");
        }
        let r = spectral::cross_correlation_from_inputs(probe, &self.inputs, &self.params);
        self.predict_from_cross(&r)
    }

    pub(crate) fn predict_from_cross(&self, r: &DVector<f64>) -> Result<Prediction> {
        let mean = &self.prior_mean + self.weighted_resid.tr_mul(r);
        let scale = self.scale_from_cross(r)?;
        Ok(Prediction {
            mean: ResponseCurve {
                values: mean.iter().cloned().collect(),
                in_log_space: true,
            },
            scale,
            sigma: Arc::clone(&self.sigma),
        })
    }

    /// `v = 1 - r^T R^-1 r`, floored at zero inside the tolerance band.
    pub(crate) fn scale_from_cross(&self, r: &DVector<f64>) -> Result<f64> {
        let half = linalg::solve_lower(&self.chol_r, r);
        let v = 1.0 - half.norm_squared();
        if !v.is_finite() {
            return Err(Error::Internal("predictive scale is not finite".into()));
        }
        if v < -SCALE_TOLERANCE {
            return Err(Error::Internal(format!(
                "predictive scale {v:.3e} is negative; the correlation factorization is inconsistent"
            )));
        }
        Ok(v.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone)]
pub struct Prediction {
    /// Predictive mean in log-stress space.
    pub mean: ResponseCurve,
    /// `1 - r^T R^-1 r`; the predictive covariance is `scale * Sigma`.
    pub scale: f64,
    sigma: Arc<DMatrix<f64>>,
}

impl Prediction {
    pub fn new(mean: ResponseCurve, scale: f64, sigma: DMatrix<f64>) -> Self {
        Self {
            mean,
            scale,
            sigma: Arc::new(sigma),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &*self.sigma * self.scale
    }

    pub fn variances(&self) -> Vec<f64> {
        self.sigma.diagonal().iter().map(|s| s * self.scale).collect()
    }

    /// `scale * tr(Sigma)`.
    pub fn trace_variance(&self) -> f64 {
        self.scale * self.sigma.trace()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
}

/// Pointwise Gaussian HPD band `mean_j +- z sqrt(v Sigma_jj)` in log space.
pub fn hpd_interval(pred: &Prediction, level: f64) -> Result<(ResponseCurve, ResponseCurve)> {
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("interval level {level} not in (0, 1)"));
    }
    if pred.scale < -SCALE_TOLERANCE {
        return Err(Error::Internal(format!("negative predictive scale {}", pred.scale)));
    }
    let z = standard_normal_quantile((1.0 + level) / 2.0);
    let v = pred.scale.max(0.0);
    let mean = pred.mean.to_log()?;
    let (mut lo, mut hi) = (Vec::with_capacity(mean.len()), Vec::with_capacity(mean.len()));
    for (j, mu) in mean.values.iter().enumerate() {
        let half = z * (v * pred.sigma[(j, j)]).sqrt();
        lo.push(mu - half);
        hi.push(mu + half);
    }
    Ok((
        ResponseCurve {
            values: lo,
            in_log_space: true,
        },
        ResponseCurve {
            values: hi,
            in_log_space: true,
        },
    ))
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub p: usize,
    pub strain_grid: StrainGrid,
    pub designs: Vec<StructureDesign>,
    #[serde(rename = "Y")]
    pub y: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub theta_d: f64,
    pub nugget: f64,
    pub beta: Vec<f64>,
    #[serde(rename = "Sigma")]
    pub sigma: Vec<Vec<f64>>,
    pub family: KernelFamily,
    pub fit_metadata: FitMetadata,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return invalid(format!("{what} rows must all have {ncols} entries"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<&TrainedEmulator> for ModelFile {
    fn from(model: &TrainedEmulator) -> Self {
        Self {
            p: model.p(),
            strain_grid: model.grid.clone(),
            designs: model.designs.clone(),
            y: rows_of(&model.y),
            theta: model.params.theta.clone(),
            theta_d: model.params.theta_d,
            nugget: model.params.nugget,
            beta: model.beta.iter().cloned().collect(),
            sigma: rows_of(&model.sigma),
            family: model.params.family,
            fit_metadata: model.metadata.clone(),
        }
    }
}

impl TryFrom<ModelFile> for TrainedEmulator {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.designs.iter().any(|d| d.p() != file.p) {
            return invalid(format!("model file declares p = {} but a design disagrees", file.p));
        }
        let m = file.strain_grid.len();
        let y = matrix_from_rows(&file.y, m, "Y")?;
        let sigma = matrix_from_rows(&file.sigma, m, "Sigma")?;
        let params = KernelParams::new(file.family, file.theta, file.theta_d, file.nugget)?;
        TrainedEmulator::new(
            file.designs,
            file.strain_grid,
            y,
            params,
            DVector::from_vec(file.beta),
            sigma,
            file.fit_metadata,
        )
    }
}

impl TrainedEmulator {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn design_from_values(d: f64, values: Vec<f64>) -> Result<StructureDesign> {
    StructureDesign::new(d, StructureCurve::new(values)?)
}
