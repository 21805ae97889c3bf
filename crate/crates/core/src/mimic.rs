//! Inverse design: the diameter and sparse modulus spectrum whose predicted
//! response best matches a target curve in expected squared error.
//!
//! Only frequencies with a positive fitted weight can move the prediction,
//! so the search runs over the diameter plus those moduli; the rest are
//! pinned to zero. The expected loss under the predictive normal is
//!
//! ```text
//! |mu + E~^T r - y*|^2 + (1 - r^T R^-1 r) tr(Sigma)
//! ```
//!
//! evaluated in log-stress space.

use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cokrige::{Prediction, ResponseCurve, TrainedEmulator};
use crate::error::{invalid, Error, Result};
use crate::estimate::lbfgsb::{self, BoxQnConfig};
use crate::harness::design::latin_hypercube_dim;
use crate::spectral::{self, half_spectrum_len, DiameterBounds, KernelFamily, KernelInput, StructureCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicConfig {
    pub starts: usize,
    pub seed: u64,
    /// Additional starts at the best-scoring training designs.
    pub incumbent_starts: usize,
    /// Upper bound on each active modulus as a multiple of the largest
    /// training value.
    pub modulus_headroom: f64,
    pub optimizer: BoxQnConfig,
}

impl Default for MimicConfig {
    fn default() -> Self {
        Self {
            starts: 32,
            seed: 0,
            incumbent_starts: 4,
            modulus_headroom: 1.5,
            optimizer: BoxQnConfig {
                max_iter: 500,
                grad_tol: 1e-9,
                ..Default::default()
            },
        }
    }
}

pub struct MimicProblem<'a> {
    model: &'a TrainedEmulator,
    /// Target in log space.
    target: Vec<f64>,
    active: Vec<usize>,
    diameter: (f64, f64),
    /// `(lo, hi)` per active modulus.
    modulus_bounds: Vec<(f64, f64)>,
    trace_sigma: f64,
}

impl<'a> MimicProblem<'a> {
    /// Default bounds: the design-box diameter range and
    /// `[0, headroom * max training modulus]` per active frequency.
    pub fn new(model: &'a TrainedEmulator, target: &ResponseCurve, headroom: f64) -> Result<Self> {
        if model.params().family != KernelFamily::Sped {
            return invalid(format!("mimicking needs a sped model, got {}", model.params().family));
        }
        if !(headroom > 0.0) || !headroom.is_finite() {
            return invalid(format!("modulus headroom {headroom} must be positive"));
        }
        let active: Vec<usize> = (0..model.params().theta.len()).filter(|&k| model.params().theta[k] > 0.0).collect();
        let bounds = active
            .iter()
            .map(|&k| {
                let hi = model.inputs().iter().map(|x| x.coords[k]).fold(0.0, f64::max);
                (0.0, headroom * hi)
            })
            .collect();
        let db = DiameterBounds::default();
        Self::with_bounds(model, target, active, (db.min, db.max), bounds)
    }

    pub fn with_bounds(
        model: &'a TrainedEmulator,
        target: &ResponseCurve,
        active: Vec<usize>,
        diameter: (f64, f64),
        modulus_bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if target.len() != model.m() {
            return invalid(format!("target has {} points, model grid has {}", target.len(), model.m()));
        }
        if active.is_empty() {
            return invalid("no frequency has a positive fitted weight; nothing to optimize over");
        }
        let k = model.params().theta.len();
        if let Some(bad) = active.iter().find(|&&a| a >= k) {
            return invalid(format!("active frequency {bad} out of range"));
        }
        if modulus_bounds.len() != active.len() {
            return invalid("one modulus bound per active frequency is required");
        }
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok(diameter) || diameter.0 <= 0.0 || modulus_bounds.iter().any(|b| !ok(*b) || b.0 < 0.0) {
            return invalid("mimic bounds must be finite, ordered, and nonnegative");
        }
        Ok(Self {
            model,
            target: target.to_log()?.values,
            active,
            diameter,
            modulus_bounds,
            trace_sigma: model.sigma().trace(),
        })
    }

    pub fn active_set(&self) -> &[usize] {
        &self.active
    }

    /// Target curve in log space.
    pub fn target_log(&self) -> &[f64] {
        &self.target
    }

    /// Search dimension: diameter plus the active moduli.
    pub fn dim(&self) -> usize {
        1 + self.active.len()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        std::iter::once(self.diameter).chain(self.modulus_bounds.iter().copied()).collect()
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return invalid(format!("point has {} coordinates, expected {}", z.len(), self.dim()));
        }
        for (i, (v, (lo, hi))) in z.iter().zip(self.bounds()).enumerate() {
            if !(*v >= lo && *v <= hi) {
                return invalid(format!("coordinate {i} = {v} outside [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    /// Full half spectrum with zeros off the active set.
    pub fn spectrum_of(&self, z: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.model.params().theta.len()];
        for (i, &k) in self.active.iter().enumerate() {
            s[k] = z[1 + i];
        }
        s
    }

    fn probe(&self, z: &[f64]) -> KernelInput {
        KernelInput {
            diameter: z[0],
            coords: self.spectrum_of(z),
        }
    }

    /// Expected squared mismatch at `z = [d, active moduli..]`.
    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        Ok(self.value_and_grad(z).0)
    }

    fn value_and_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let model = self.model;
        let probe = self.probe(z);
        let r = spectral::cross_correlation_from_inputs(&probe, model.inputs(), model.params());
        let mean = model.prior_mean() + model.weighted_residuals().tr_mul(&r);
        let resid = DVector::from_fn(mean.len(), |j, _| mean[j] - self.target[j]);
        let rinv_r = model.chol_r().solve(&r);
        let v = 1.0 - r.dot(&rinv_r);
        let value = resid.norm_squared() + v * self.trace_sigma;

        // df/dr, then dr_i/dz = -2 theta (z - z_i) r_i
        let dfdr = model.weighted_residuals() * &resid * 2.0 - rinv_r * (2.0 * self.trace_sigma);
        let params = model.params();
        let mut grad = vec![0.0; self.dim()];
        for (i, x) in model.inputs().iter().enumerate() {
            let w = dfdr[i] * r[i] * -2.0;
            grad[0] += w * params.theta_d * (z[0] - x.diameter);
            for (a, &k) in self.active.iter().enumerate() {
                grad[1 + a] += w * params.theta[k] * (z[1 + a] - x.coords[k]);
            }
        }
        (value, grad)
    }

    pub fn predict(&self, z: &[f64]) -> Result<Prediction> {
        self.model.predict_input(&self.probe(z))
    }
}

/// Expected squared mismatch of the design `(d, spectrum_active)`.
pub fn mse_objective(problem: &MimicProblem, d: f64, spectrum_active: &[f64]) -> Result<f64> {
    let z: Vec<f64> = std::iter::once(d).chain(spectrum_active.iter().copied()).collect();
    problem.objective(&z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub line_search_failed: bool,
}

#[derive(Debug, Clone)]
pub struct MimicResult {
    pub diameter: f64,
    /// Half spectrum, zero off the active set.
    pub spectrum: Vec<f64>,
    pub reconstructed: StructureCurve,
    pub objective: f64,
    pub predicted: Prediction,
    pub trace: Vec<StartTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicSummary {
    pub diameter: f64,
    pub spectrum: Vec<f64>,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub predicted_stress: Vec<f64>,
    pub trace: Vec<StartTrace>,
}

impl MimicResult {
    pub fn summary(&self, active: &[usize]) -> MimicSummary {
        MimicSummary {
            diameter: self.diameter,
            spectrum: self.spectrum.clone(),
            active_set: active.to_vec(),
            objective: self.objective,
            predicted_stress: self.predicted.mean.to_stress().values,
            trace: self.trace.clone(),
        }
    }
}

fn to_unit(z: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    z.iter()
        .zip(bounds)
        .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

fn from_unit(u: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    u.iter().zip(bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect()
}

/// Multi-start box-constrained quasi-Newton over the diameter and active
/// moduli. Starts are a Latin hypercube over the box plus the projections of
/// the best-scoring training designs.
pub fn optimize(problem: &MimicProblem, cfg: &MimicConfig) -> Result<MimicResult> {
    if cfg.starts + cfg.incumbent_starts == 0 {
        return invalid("mimic needs at least one start");
    }
    let bounds = problem.bounds();
    let dim = problem.dim();
    let mut starts: Vec<Vec<f64>> = latin_hypercube_dim(cfg.starts, dim, cfg.seed)
        .into_iter()
        .map(|u| from_unit(&u, &bounds))
        .collect();

    let mut incumbents: Vec<(f64, Vec<f64>)> = problem
        .model
        .inputs()
        .iter()
        .map(|x| {
            let mut z = vec![x.diameter.clamp(bounds[0].0, bounds[0].1)];
            for (a, &k) in problem.active.iter().enumerate() {
                z.push(x.coords[k].clamp(bounds[1 + a].0, bounds[1 + a].1));
            }
            (problem.value_and_grad(&z).0, z)
        })
        .collect();
    incumbents.sort_by(|a, b| a.0.total_cmp(&b.0));
    starts.extend(incumbents.into_iter().take(cfg.incumbent_starts).map(|(_, z)| z));

    let runs: Vec<(Vec<f64>, StartTrace)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, z0)| {
            let f = |u: &[f64]| {
                let z = from_unit(u, &bounds);
                let (v, g) = problem.value_and_grad(&z);
                let gu = g.iter().zip(&bounds).map(|(g, (lo, hi))| g * (hi - lo)).collect();
                if v.is_finite() {
                    (v, gu)
                } else {
                    (f64::INFINITY, gu)
                }
            };
            let u0 = to_unit(z0, &bounds);
            let initial = problem.value_and_grad(z0).0;
            let res = lbfgsb::minimize(f, &u0, &vec![0.0; dim], &vec![1.0; dim], &cfg.optimizer);
            let z = from_unit(&res.x, &bounds);
            (
                z,
                StartTrace {
                    start: i,
                    initial_objective: initial,
                    final_objective: res.f,
                    iterations: res.iterations,
                    line_search_failed: res.line_search_failed,
                },
            )
        })
        .collect();

    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, (_, t))| t.final_objective.is_finite())
        .min_by(|a, b| a.1 .1.final_objective.total_cmp(&b.1 .1.final_objective).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Optimization("every mimic start failed".into()))?;
    let z = runs[best].0.clone();
    let objective = problem.value_and_grad(&z).0;
    let spectrum = problem.spectrum_of(&z);
    let reconstructed = reconstruct_structure(&spectrum, problem.model.p())?;
    Ok(MimicResult {
        diameter: z[0],
        predicted: problem.predict(&z)?,
        spectrum,
        reconstructed,
        objective,
        trace: runs.into_iter().map(|(_, t)| t).collect(),
    })
}

/// Zero-phase inverse DFT with conjugate-symmetric completion:
/// `x_l = (X_0 + 2 sum_k X_k cos(2 pi l k / p)) / p`.
pub fn reconstruct_structure(spectrum: &[f64], p: usize) -> Result<StructureCurve> {
    if p % 2 == 0 || spectrum.len() != half_spectrum_len(p) {
        return invalid(format!("spectrum of length {} does not fit p = {p}", spectrum.len()));
    }
    if let Some(k) = spectrum.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return invalid(format!("modulus {k} = {} must be finite and nonnegative", spectrum[k]));
    }
    let values = (0..p)
        .map(|l| {
            let mut x = spectrum[0];
            for (k, m) in spectrum.iter().enumerate().skip(1) {
                x += 2.0 * m * (2.0 * PI * ((l * k) % p) as f64 / p as f64).cos();
            }
            x / p as f64
        })
        .collect();
    StructureCurve::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dft_modulus;

    #[test]
    fn dc_only_is_constant() {
        let mut s = vec![0.0; 41];
        s[0] = 8.1;
        let c = reconstruct_structure(&s, 81).unwrap();
        assert!(c.values().iter().all(|v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn zero_spectrum_is_zero_curve() {
        let c = reconstruct_structure(&[0.0; 11], 21).unwrap();
        assert!(c.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn modulus_round_trip() {
        let spectrum: Vec<f64> = (0..41).map(|k| ((k * 7) % 5) as f64 * 0.3).collect();
        let c = reconstruct_structure(&spectrum, 81).unwrap();
        let back = dft_modulus(c.values()).unwrap();
        for (a, b) in spectrum.iter().zip(back.moduli()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn shifted_cosine_comes_back_as_a_translate() {
        // 0.5 cos(2 pi 3 (l - 4) / 21) has modulus 0.5 * 21 / 2 at bin 3
        let p = 21;
        let orig: Vec<f64> = (0..p).map(|l| 0.5 * (2.0 * PI * 3.0 * (l as f64 - 4.0) / p as f64).cos()).collect();
        let spec = dft_modulus(&orig).unwrap();
        let rec = reconstruct_structure(spec.moduli(), p).unwrap();
        let shifted = StructureCurve::new(orig).unwrap().cyclic_shift(p - 4);
        for (a, b) in rec.values().iter().zip(shifted.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(reconstruct_structure(&[1.0, -0.1, 0.0], 5).is_err());
        assert!(reconstruct_structure(&[1.0, 0.0], 5).is_err());
    }
}
