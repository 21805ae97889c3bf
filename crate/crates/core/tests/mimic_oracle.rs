//! The mimic objective against sampling and interpolation oracles.

mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spedkrig::cokrige::FitMetadata;
use spedkrig::harness::generate;
use spedkrig::mimic::{mse_objective, MimicProblem};
use spedkrig::{KernelFamily, KernelParams, ResponseCurve, TrainedEmulator};

fn model(seed: u64, nugget: f64) -> TrainedEmulator {
    let (train, _) = generate(12, 1, seed, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = KernelFamily::Sped.theta_len(21);
    let theta: Vec<f64> = (0..k).map(|i| if (2..=6).contains(&i) { rng.random_range(0.5..3.0) } else { 0.0 }).collect();
    let params = KernelParams::new(KernelFamily::Sped, theta, 1.5, nugget).unwrap();
    let m = train.grid.len();
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.1..0.1));
    let sigma = &a * a.transpose() + DMatrix::identity(m, m) * 0.01;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    TrainedEmulator::new(
        train.designs.clone(),
        train.grid.clone(),
        train.responses.map(f64::ln),
        params,
        DVector::from_vec(vec![0.5, 1.1]),
        sigma,
        FitMetadata { lambda_i: 1.0, lambda_o: 0.1, objective: 0.0, iterations: 0 },
    )
    .unwrap()
}

#[test]
fn expected_loss_matches_monte_carlo() {
    let model = model(3, 1e-8);
    let m = model.m();
    let target = ResponseCurve::stress((0..m).map(|j| 0.5 + 0.03 * j as f64).collect()).unwrap();
    let problem = MimicProblem::new(&model, &target, 1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);

    for trial in 0..3 {
        let d = rng.random_range(0.3..1.9);
        let spec: Vec<f64> = problem.active_set().iter().map(|_| rng.random_range(0.0..0.3)).collect();
        let mc = common::mimic_mc(&problem, d, &spec, 100_000, 40 + trial);
        assert!(mc.within(3.0), "trial {trial}: MC {} +- {}, analytic {}", mc.mean, mc.se, mc.analytic);
    }
}

#[test]
fn zero_at_a_training_design_with_its_own_prediction() {
    let model = model(5, 0.0);
    let i = 4;
    let x = &model.inputs()[i];
    let pred = model.predict_input(x).unwrap();
    let problem = MimicProblem::new(&model, &pred.mean.to_stress(), 1.5).unwrap();
    let spec: Vec<f64> = problem.active_set().iter().map(|&k| x.coords[k]).collect();
    let value = mse_objective(&problem, x.diameter, &spec).unwrap();
    assert!(value.abs() < 1e-8, "{value}");
}
