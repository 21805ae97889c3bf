//! Synthetic data, file formats, metrics, and the end-to-end pipeline the
//! CLI drives.

pub mod config;
pub mod design;
pub mod io;
pub mod metrics;
pub mod oracle;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cokrige::{StrainGrid, TrainedEmulator};
use crate::error::Result;
use crate::estimate::{fit, select_penalties, CvResult, FitConfig, FitTrace, TrainingData};
use crate::spectral::StructureDesign;

pub use config::RunConfig;
pub use design::{gen_sinusoid, sample_designs, DesignBox, SamplingScheme, SinusoidSpec};
pub use io::{read_designs, read_target, sibling, write_curve, write_json, write_predictions, Dataset};
pub use metrics::{evaluate, mare, moduli_and_kappa, Curvature, MetricsReport, Moduli};
pub use oracle::{synthetic_oracle, SyntheticOracle};

/// Oracle responses for `designs`, one row each.
pub fn oracle_responses(oracle: &SyntheticOracle, designs: &[StructureDesign], grid: &StrainGrid) -> Result<DMatrix<f64>> {
    let rows = designs
        .iter()
        .map(|d| oracle.response(d, grid).map(|c| c.values))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(designs.len(), grid.len(), |i, j| rows[i][j]))
}

/// Sinusoid designs sampled with `scheme` and labelled by the oracle.
pub fn synthetic_dataset(
    n: usize,
    seed: u64,
    scheme: SamplingScheme,
    p: usize,
    grid: &StrainGrid,
    oracle: &SyntheticOracle,
) -> Result<Dataset> {
    let bounds = DesignBox::default();
    let designs = sample_designs(n, seed, scheme, &bounds)
        .iter()
        .map(|s| design::gen_sinusoid_in(s, p, &bounds))
        .collect::<Result<Vec<_>>>()?;
    let responses = oracle_responses(oracle, &designs, grid)?;
    Dataset::new(designs, responses, grid.clone())
}

/// Training set from a Latin hypercube, test set from a Sobol' sequence.
pub fn generate(n: usize, test_n: usize, seed: u64, p: usize) -> Result<(Dataset, Dataset)> {
    let grid = StrainGrid::standard();
    let oracle = SyntheticOracle::default();
    let train = synthetic_dataset(n, seed, SamplingScheme::Lhs, p, &grid, &oracle)?;
    let test = synthetic_dataset(test_n, seed.wrapping_add(1), SamplingScheme::Sobol, p, &grid, &oracle)?;
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub trace: FitTrace,
    pub cv: Option<CvResult>,
}

/// Fits `cfg.family` to `data`, selecting penalties by cross-validation
/// first when `cfg.cv` is set.
pub fn fit_dataset(data: &Dataset, cfg: &RunConfig) -> Result<(TrainedEmulator, FitReport)> {
    cfg.validate()?;
    let td = TrainingData::from_stress(data.designs.clone(), data.grid.clone(), &data.responses, cfg.family, cfg.nugget)?;
    let mut fit_cfg: FitConfig = cfg.fit.clone();
    let cv = match &cfg.cv {
        Some(cv_cfg) => {
            let res = select_penalties(&td, &fit_cfg, cv_cfg)?;
            fit_cfg.lambda_i = res.lambda_i;
            fit_cfg.lambda_o = res.lambda_o;
            Some(res)
        }
        None => None,
    };
    let (model, trace) = fit(&td, &fit_cfg)?;
    Ok((model, FitReport { trace, cv }))
}
