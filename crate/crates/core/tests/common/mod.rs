#![allow(dead_code)]

use liquidation::{AssetSpec, CostModel, CovarianceMatrix, LiquidationProblem, TimeGrid, VolumeProfile};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `A Aᵀ + 0.1 d I` with standard-normal-ish entries, scaled to price variances near 1.
pub fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * (0.1 * d as f64)
}

/// Random feasible problem: caps are wide enough to liquidate `q0` in about
/// half the horizon, volumes vary over time.
pub fn random_problem(d: usize, steps: usize, rng: &mut ChaCha8Rng) -> LiquidationProblem {
    let sigma = random_spd(d, rng);
    let horizon = rng.random_range(0.5..2.0);
    let assets = (0..d)
        .map(|i| {
            let base = rng.random_range(5e5..5e6);
            let volume: Vec<f64> = (0..steps).map(|_| base * rng.random_range(0.5..1.5)).collect();
            let cost = CostModel::new(
                rng.random_range(0.01..0.1),
                rng.random_range(0.3..=1.0),
                rng.random_range(0.0..0.01),
                rng.random_range(0.1..0.8),
            );
            AssetSpec::new(format!("r{i}"), sigma[(i, i)].sqrt(), cost, VolumeProfile::new(volume))
        })
        .collect::<Vec<_>>();
    let q0 = assets
        .iter()
        .map(|a: &AssetSpec| {
            let budget: f64 = a.volume.values().iter().sum::<f64>() * (horizon / steps as f64) * a.cost.rho_max;
            budget * rng.random_range(-0.5..0.5)
        })
        .collect();
    LiquidationProblem {
        q0,
        gamma: 10f64.powf(rng.random_range(-7.0..-5.0)),
        assets,
        covariance: CovarianceMatrix::from_matrix(sigma),
        grid: TimeGrid::new(horizon, steps),
    }
    .validate()
    .expect("random problem is valid")
}

/// Relative ∞-norm distance `‖a − b‖ / max(‖b‖, tiny)`.
pub fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
    diff / scale.max(f64::MIN_POSITIVE)
}
