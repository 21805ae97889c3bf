//! k-fold cross-validation over a `(lambda_I, lambda_o)` grid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, FitConfig, TrainingData};
use crate::cokrige::ResponseCurve;
use crate::error::{invalid, Error, Result};
use crate::harness::metrics::mare;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScoring {
    /// Mean held-out MARE of the back-transformed predictive mean.
    #[default]
    Mare,
    /// Mean held-out negative log predictive density in log space.
    LogLikelihood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    #[serde(alias = "lambda_I_grid")]
    pub lambda_i_grid: Vec<f64>,
    pub lambda_o_grid: Vec<f64>,
    pub scoring: CvScoring,
    /// Restarts per fold fit; the base config's count when absent.
    pub restarts: Option<usize>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            lambda_i_grid: vec![10.0, 100.0, 1000.0],
            lambda_o_grid: vec![10.0],
            scoring: CvScoring::Mare,
            restarts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda_i: f64,
    pub lambda_o: f64,
    /// Lower is better for both scorings.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_i: f64,
    pub lambda_o: f64,
    pub scores: Vec<CvPoint>,
}

fn dedup_grid(grid: &[f64], name: &str) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return invalid(format!("{name} grid is empty"));
    }
    if let Some(v) = grid.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return invalid(format!("{name} grid value {v} must be finite and nonnegative"));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// Assigns each design to one of `k` folds after a seeded shuffle.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, i) in order.into_iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

fn score_fold(data: &TrainingData, cfg: &FitConfig, fold: &[usize], f: usize, scoring: CvScoring) -> Result<f64> {
    let train: Vec<usize> = (0..data.n()).filter(|&i| fold[i] != f).collect();
    let test: Vec<usize> = (0..data.n()).filter(|&i| fold[i] == f).collect();
    let (model, _) = fit(&data.subset(&train)?, cfg)?;
    let y = data.log_responses();
    let mut total = 0.0;
    for &i in &test {
        let pred = model.predict(&data.designs()[i])?;
        let truth: Vec<f64> = y.row(i).iter().cloned().collect();
        total += match scoring {
            CvScoring::Mare => {
                let t = ResponseCurve::log_stress(truth)?.to_stress();
                mare(&t, &pred.mean.to_stress())?
            }
            CvScoring::LogLikelihood => {
                let v = pred.scale.max(1e-12);
                let chol = linalg::cholesky(pred.sigma())
                    .ok_or_else(|| Error::SingularMatrix("Sigma is not positive definite".into()))?;
                let resid = nalgebra::DVector::from_fn(truth.len(), |j, _| truth[j] - pred.mean.values[j]);
                let half = linalg::solve_lower(&chol, &resid);
                let m = truth.len() as f64;
                0.5 * (m * (2.0 * std::f64::consts::PI * v).ln() + linalg::log_det(&chol) + half.norm_squared() / v)
            }
        };
    }
    Ok(total / test.len() as f64)
}

/// Picks the grid pair with the lowest mean held-out score. Exact ties go to
/// the larger `lambda_i`, then the larger `lambda_o`.
pub fn select_penalties(data: &TrainingData, base: &FitConfig, cv: &CvConfig) -> Result<CvResult> {
    let k = cv.folds;
    if cv.restarts == Some(0) {
        return invalid("cv restarts must be at least 1");
    }
    if k < 2 || data.n() < 2 * k {
        return invalid(format!("degenerate folds: {k} folds over {} designs (need k >= 2, n >= 2k)", data.n()));
    }
    let gi = dedup_grid(&cv.lambda_i_grid, "lambda_i")?;
    let go = dedup_grid(&cv.lambda_o_grid, "lambda_o")?;
    let fold = fold_assignment(data.n(), k, base.seed);

    let jobs: Vec<(f64, f64, usize)> = gi
        .iter()
        .flat_map(|&li| go.iter().flat_map(move |&lo| (0..k).map(move |f| (li, lo, f))))
        .collect();
    let scores: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(li, lo, f)| {
            let cfg = FitConfig {
                lambda_i: li,
                lambda_o: lo,
                restarts: cv.restarts.unwrap_or(base.restarts),
                ..base.clone()
            };
            score_fold(data, &cfg, &fold, f, cv.scoring)
        })
        .collect();

    let mut points = Vec::new();
    for (c, chunk) in jobs.chunks(k).zip(scores.chunks(k)) {
        let (li, lo) = (c[0].0, c[0].1);
        // a grid point whose fit fails on some fold scores +inf
        let score = chunk
            .iter()
            .map(|s| s.as_ref().copied().unwrap_or(f64::INFINITY))
            .sum::<f64>()
            / k as f64;
        points.push(CvPoint { lambda_i: li, lambda_o: lo, score });
    }
    let best = points
        .iter()
        .filter(|p| p.score.is_finite())
        .min_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then(b.lambda_i.total_cmp(&a.lambda_i))
                .then(b.lambda_o.total_cmp(&a.lambda_o))
        })
        .ok_or_else(|| {
            let first_err = scores.iter().find_map(|s| s.as_ref().err().map(|e| e.to_string()));
            Error::Fit(format!(
                "every grid point failed on some fold; first error: {}",
                first_err.unwrap_or_default()
            ))
        })?;
    Ok(CvResult {
        lambda_i: best.lambda_i,
        lambda_o: best.lambda_o,
        scores: points.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced_and_seeded() {
        let f = fold_assignment(23, 5, 4);
        for k in 0..5 {
            let c = f.iter().filter(|&&x| x == k).count();
            assert!(c == 4 || c == 5);
        }
        assert_eq!(f, fold_assignment(23, 5, 4));
    }

    #[test]
    fn grid_dedup_sorts() {
        assert_eq!(dedup_grid(&[3.0, 1.0, 3.0, 0.0], "x").unwrap(), vec![0.0, 1.0, 3.0]);
        assert!(dedup_grid(&[], "x").is_err());
        assert!(dedup_grid(&[-1.0], "x").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn folds_differ_in_size_by_at_most_one(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
                let f = fold_assignment(n, k, seed);
                let sizes: Vec<usize> = (0..k).map(|j| f.iter().filter(|&&x| x == j).count()).collect();
                prop_assert_eq!(sizes.iter().sum::<usize>(), n);
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }
}
