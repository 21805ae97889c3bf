//! Curve error metrics, elastic moduli and the evaluation report.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cokrige::{hpd_interval, ResponseCurve, StrainGrid, TrainedEmulator};
use crate::error::{invalid, Result};
use crate::spectral::StructureDesign;

/// `sum |O - O_hat| / sum |O|`. The uniform strain step cancels.
pub fn mare(truth: &ResponseCurve, pred: &ResponseCurve) -> Result<f64> {
    if truth.len() != pred.len() {
        return invalid(format!("curve lengths differ: {} vs {}", truth.len(), pred.len()));
    }
    if truth.in_log_space != pred.in_log_space {
        return invalid("cannot compare a log-space curve with a stress-space curve");
    }
    let den: f64 = truth.values.iter().map(|v| v.abs()).sum();
    if !(den > 0.0) {
        return invalid("MARE is undefined for an all-zero reference curve");
    }
    let num: f64 = truth.values.iter().zip(&pred.values).map(|(o, p)| (o - p).abs()).sum();
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    Stiffening,
    Softening,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moduli {
    pub e1: f64,
    pub e9: f64,
    pub kappa: f64,
    pub label: Curvature,
    /// Grid strains the two moduli were taken at.
    pub strain_e1: f64,
    pub strain_e9: f64,
}

/// Five-point central difference at the grid point nearest `target`.
fn slope_near(values: &[f64], levels: &[f64], target: f64) -> Result<(f64, f64)> {
    let j = (0..levels.len())
        .min_by(|&a, &b| (levels[a] - target).abs().total_cmp(&(levels[b] - target).abs()))
        .ok_or_else(|| crate::error::Error::InvalidInput("empty strain grid".into()))?;
    if j < 2 || j + 2 >= levels.len() {
        return invalid(format!(
            "strain grid needs two points on each side of {:.4} for the modulus stencil",
            target
        ));
    }
    let h = levels[j + 1] - levels[j];
    let steps = [levels[j - 1] - levels[j - 2], levels[j] - levels[j - 1], h, levels[j + 2] - levels[j + 1]];
    if steps.iter().any(|s| (s - h).abs() > 1e-6 * h) {
        return invalid(format!("strain grid is not uniform around {:.4}", target));
    }
    if (levels[j] - target).abs() > h {
        return invalid(format!("strain grid is too coarse near {:.4}", target));
    }
    let v = |k: usize| values[k];
    let d = (v(j - 2) - 8.0 * v(j - 1) + 8.0 * v(j + 1) - v(j + 2)) / (12.0 * h);
    Ok((d, levels[j]))
}

/// `E_1`, `E_9` and `kappa = (E_9 - E_1) / 0.08` of a stress curve.
pub fn moduli_and_kappa(curve: &ResponseCurve, grid: &StrainGrid) -> Result<Moduli> {
    if curve.len() != grid.len() {
        return invalid(format!("curve has {} points, grid has {}", curve.len(), grid.len()));
    }
    let stress = curve.to_stress();
    let (e1, s1) = slope_near(&stress.values, grid.levels(), 0.01)?;
    let (e9, s9) = slope_near(&stress.values, grid.levels(), 0.09)?;
    let kappa = (e9 - e1) / 0.08;
    Ok(Moduli {
        e1,
        e9,
        kappa,
        label: if kappa > 0.0 { Curvature::Stiffening } else { Curvature::Softening },
        strain_e1: s1,
        strain_e9: s9,
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub mare: f64,
    pub truth: Moduli,
    pub predicted: Moduli,
    /// Fraction of strain levels inside the pointwise band.
    pub pointwise_coverage: f64,
    /// The band contains the whole true curve.
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub family: String,
    pub level: f64,
    pub cases: Vec<CaseMetrics>,
    pub median_mare: f64,
    pub mean_mare: f64,
    pub classification_correct: usize,
    pub covered_curves: usize,
    pub pointwise_coverage: f64,
    pub n: usize,
}

/// Scores `model` on held-out designs with stress responses `truth`
/// (one row per design).
pub fn evaluate(model: &TrainedEmulator, designs: &[StructureDesign], truth: &DMatrix<f64>, level: f64) -> Result<MetricsReport> {
    if designs.is_empty() {
        return invalid("evaluation needs at least one test design");
    }
    if truth.shape() != (designs.len(), model.m()) {
        return invalid(format!(
            "test responses are {:?}, expected ({}, {}) on the model grid",
            truth.shape(),
            designs.len(),
            model.m()
        ));
    }
    let cases: Vec<CaseMetrics> = (0..designs.len())
        .into_par_iter()
        .map(|i| {
            let t = ResponseCurve::stress(truth.row(i).iter().cloned().collect())?;
            let pred = model.predict(&designs[i])?;
            let (lo, hi) = hpd_interval(&pred, level)?;
            let tl = t.to_log()?;
            let inside: Vec<bool> = (0..tl.len())
                .map(|j| tl.values[j] >= lo.values[j] && tl.values[j] <= hi.values[j])
                .collect();
            let hits = inside.iter().filter(|b| **b).count();
            Ok(CaseMetrics {
                mare: mare(&t, &pred.mean.to_stress())?,
                truth: moduli_and_kappa(&t, model.grid())?,
                predicted: moduli_and_kappa(&pred.mean, model.grid())?,
                pointwise_coverage: hits as f64 / inside.len() as f64,
                covered: hits == inside.len(),
            })
        })
        .collect::<Result<_>>()?;
    let mares: Vec<f64> = cases.iter().map(|c| c.mare).collect();
    let n = cases.len();
    Ok(MetricsReport {
        family: model.params().family.to_string(),
        level,
        median_mare: median(&mares),
        mean_mare: mares.iter().sum::<f64>() / n as f64,
        classification_correct: cases.iter().filter(|c| c.truth.label == c.predicted.label).count(),
        covered_curves: cases.iter().filter(|c| c.covered).count(),
        pointwise_coverage: cases.iter().map(|c| c.pointwise_coverage).sum::<f64>() / n as f64,
        cases,
        n,
    })
}
