//! Dense brute-force oracles shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use spedkrig::cokrige::{mean_basis, FitMetadata};
use spedkrig::estimate::{beta_step, neg_log_posterior, ModelState, TrainingData, BETA_EPSILON};
use spedkrig::harness::{gen_sinusoid, SinusoidSpec};
use spedkrig::mimic::{mse_objective, MimicProblem};
use spedkrig::spectral::correlation;
use spedkrig::{KernelFamily, KernelParams, StrainGrid, StructureDesign, TrainedEmulator};

pub const FAMILIES: [KernelFamily; 3] = [KernelFamily::Sped, KernelFamily::FeatureBased, KernelFamily::L2Distance];

pub struct Instance {
    pub designs: Vec<StructureDesign>,
    pub probe: StructureDesign,
    pub grid: StrainGrid,
    pub y: DMatrix<f64>,
    pub params: KernelParams,
    pub beta: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

pub fn random_design(rng: &mut ChaCha8Rng, p: usize) -> StructureDesign {
    let spec = SinusoidSpec {
        d: rng.random_range(0.2..2.0),
        amplitude: rng.random_range(0.05..1.0),
        omega: rng.random_range(0.0..0.8),
        phi: rng.random_range(0.0..std::f64::consts::TAU),
    };
    gen_sinusoid(&spec, p).unwrap()
}

/// Random problem with `nm <= 12`.
pub fn instance(seed: u64, min_n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=4);
    let n = rng.random_range(min_n..=12 / m);
    let p = [5, 7, 9][rng.random_range(0..3)];
    let family = FAMILIES[rng.random_range(0..3)];

    let mut levels: Vec<f64> = (0..m).map(|_| rng.random_range(0.005..0.15)).collect();
    levels.sort_by(f64::total_cmp);
    for j in 1..m {
        if levels[j] <= levels[j - 1] {
            levels[j] = levels[j - 1] * 1.01;
        }
    }
    let grid = StrainGrid::new(levels).unwrap();

    let designs: Vec<_> = (0..n).map(|_| random_design(&mut rng, p)).collect();
    let probe = random_design(&mut rng, p);
    let k = family.theta_len(p);
    let theta: Vec<f64> = (0..k).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..2.0) }).collect();
    let params = KernelParams::new(family, theta, rng.random_range(0.0..2.0), rng.random_range(1e-3..1e-1)).unwrap();

    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    let sigma = &a * a.transpose() + DMatrix::identity(m, m) * 0.3;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let y = DMatrix::from_fn(n, m, |_, _| rng.random_range(-3.0..1.0));
    let beta = DVector::from_vec(vec![rng.random_range(-1.0..1.0), rng.random_range(0.1..2.0)]);
    Instance { designs, probe, grid, y, params, beta, sigma }
}

pub fn dense_r(inst: &Instance) -> DMatrix<f64> {
    let n = inst.designs.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 + inst.params.nugget
        } else {
            correlation(&inst.designs[i], &inst.designs[j], &inst.params).unwrap()
        }
    })
}

/// `vec(Y^T)`: design-major.
pub fn stacked(y: &DMatrix<f64>) -> DVector<f64> {
    let (n, m) = y.shape();
    DVector::from_fn(n * m, |idx, _| y[(idx / m, idx % m)])
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

fn training_data(inst: &Instance) -> TrainingData {
    TrainingData::new(inst.designs.clone(), inst.grid.clone(), inst.y.clone(), inst.params.family, inst.params.nugget).unwrap()
}

/// Largest relative error of the predictive mean and covariance against the
/// dense conditional normal.
pub fn predict_error(seed: u64) -> f64 {
    let inst = instance(seed, 1);
    let (n, m) = inst.y.shape();
    let model = TrainedEmulator::new(
        inst.designs.clone(),
        inst.grid.clone(),
        inst.y.clone(),
        inst.params.clone(),
        inst.beta.clone(),
        inst.sigma.clone(),
        FitMetadata { lambda_i: 0.0, lambda_o: 0.0, objective: 0.0, iterations: 0 },
    )
    .unwrap();
    let pred = model.predict(&inst.probe).unwrap();

    let k = dense_r(&inst).kronecker(&inst.sigma);
    let r = DVector::from_fn(n, |i, _| correlation(&inst.probe, &inst.designs[i], &inst.params).unwrap());
    let cross = r.transpose().kronecker(&inst.sigma); // m x nm
    let mu = mean_basis(&inst.grid).unwrap() * &inst.beta;
    let mu_all = DVector::from_fn(n * m, |idx, _| mu[idx % m]);
    let lu = k.lu();
    let mean = &mu + &cross * lu.solve(&(stacked(&inst.y) - mu_all)).unwrap();
    let cov = &inst.sigma - &cross * lu.solve(&cross.transpose()).unwrap();

    let mean_err = (0..m).map(|j| rel_err(pred.mean.values[j], mean[j])).fold(0.0, f64::max);
    mean_err.max(max_rel(&pred.covariance(), &cov))
}

/// Relative error of the objective against the dense Gaussian density plus
/// penalties.
pub fn objective_error(seed: u64) -> f64 {
    let inst = instance(1000 + seed, 2);
    let data = training_data(&inst);
    let state = ModelState {
        beta: inst.beta.clone(),
        theta: inst.params.theta.clone(),
        theta_d: inst.params.theta_d,
        sigma: inst.sigma.clone(),
    };
    let (li, lo) = (0.7 * (seed % 3) as f64, 0.05 * (seed % 4) as f64);
    let got = neg_log_posterior(&state, &data, li, lo).unwrap();

    let (n, m) = inst.y.shape();
    let k = dense_r(&inst).kronecker(&inst.sigma);
    let mu = mean_basis(&inst.grid).unwrap() * &inst.beta;
    let resid = stacked(&inst.y) - DVector::from_fn(n * m, |idx, _| mu[idx % m]);
    let lu = k.lu();
    let quad = resid.dot(&lu.solve(&resid).unwrap());
    let logdet = lu.determinant().ln();
    let precision = inst.sigma.clone().try_inverse().unwrap();
    let want = logdet + quad + li * inst.params.theta.iter().sum::<f64>() + lo * precision.iter().map(|v| v.abs()).sum::<f64>();
    rel_err(got, want)
}

/// Relative error of the mean coefficients against dense GLS, and whether
/// the slope had to be pinned.
pub fn beta_error(seed: u64) -> (f64, bool) {
    let eps = BETA_EPSILON;
    let inst = instance(2000 + seed, 2);
    let data = training_data(&inst);
    let state = ModelState {
        beta: DVector::zeros(2),
        theta: inst.params.theta.clone(),
        theta_d: inst.params.theta_d,
        sigma: inst.sigma.clone(),
    };
    let got = beta_step(&state, &data, eps).unwrap();

    let (n, m) = inst.y.shape();
    let kinv = dense_r(&inst).kronecker(&inst.sigma).try_inverse().unwrap();
    let p = mean_basis(&inst.grid).unwrap();
    let x = DMatrix::from_fn(n * m, 2, |idx, c| p[(idx % m, c)]);
    let y = stacked(&inst.y);
    let xtk = x.transpose() * &kinv;
    let mut want = (&xtk * &x).lu().solve(&(&xtk * &y)).unwrap();
    let pinned = want[1] <= 0.0;
    if pinned {
        // slope held at eps, intercept re-fitted
        let x0 = x.column(0).into_owned();
        let x1 = x.column(1).into_owned();
        let rhs = &y - &x1 * eps;
        want[0] = x0.dot(&(&kinv * &rhs)) / x0.dot(&(&kinv * &x0));
        want[1] = eps;
    }
    (rel_err(got[0], want[0]).max(rel_err(got[1], want[1])), pinned)
}

pub struct McCheck {
    pub analytic: f64,
    pub mean: f64,
    pub se: f64,
}

impl McCheck {
    pub fn within(&self, k: f64) -> bool {
        (self.mean - self.analytic).abs() <= k * self.se
    }
}

/// Sampled expected squared log-space loss at `(d, spectrum)` next to the
/// closed form.
pub fn mimic_mc(problem: &MimicProblem, d: f64, spectrum: &[f64], draws: usize, seed: u64) -> McCheck {
    let analytic = mse_objective(problem, d, spectrum).unwrap();
    let z: Vec<f64> = std::iter::once(d).chain(spectrum.iter().copied()).collect();
    let pred = problem.predict(&z).unwrap();
    let target = problem.target_log();
    let m = target.len();
    let l = pred.covariance().cholesky().expect("predictive covariance is SPD").l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let eps = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &l * eps;
        let loss: f64 = (0..m).map(|j| (pred.mean.values[j] + y[j] - target[j]).powi(2)).sum();
        sum += loss;
        sum_sq += loss * loss;
    }
    let mean = sum / draws as f64;
    let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
    McCheck { analytic, mean, se }
}
