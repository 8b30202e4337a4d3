//! Built-in problems: the single-asset participation study, the two-asset
//! long/long and long/short portfolios, the hedged single-asset liquidation,
//! and synthetic quadratic problems for the linear oracle.
//!
//! Horizon is one trading day. `N = 100` slices by default; every builder
//! takes the slice count.

use nalgebra::DMatrix;

use crate::model::{AssetSpec, CostModel, CovarianceMatrix, LiquidationProblem, TimeGrid, VolumeProfile};
use crate::oracles::HedgeConvention;

pub const DEFAULT_STEPS: usize = 100;
pub const FIG2_RHO: [f64; 3] = [0.6, 0.4, 0.2];

/// Participation cap that never binds for the hedging asset.
pub const HEDGE_ASSET_RHO: f64 = 1.0;

fn one_day(steps: usize) -> TimeGrid {
    TimeGrid::new(1.0, steps)
}

fn correlated(sigmas: &[f64], rho: f64) -> CovarianceMatrix {
    let corr = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    CovarianceMatrix::from_volatility_correlation(sigmas, &corr)
}

/// 75-currency stock, 20% vol (σ = 0.9375), V = 2M/day.
pub fn single_stock(rho_max: f64, steps: usize) -> AssetSpec {
    AssetSpec::new(
        "asset1",
        0.9375,
        CostModel::new(0.045, 0.5, 0.0081, rho_max),
        VolumeProfile::constant(2_000_000.0, steps),
    )
    .with_spot(75.0)
}

/// Same stock as used in the multi-asset examples (σ rounded to 0.94).
pub fn portfolio_stock1(rho_max: f64, steps: usize) -> AssetSpec {
    AssetSpec::new(
        "asset1",
        0.94,
        CostModel::new(0.045, 0.5, 0.0081, rho_max),
        VolumeProfile::constant(2_000_000.0, steps),
    )
    .with_spot(75.0)
}

/// 50-currency stock, 17% vol (σ = 0.53), V = 4.5M/day.
pub fn portfolio_stock2(rho_max: f64, steps: usize) -> AssetSpec {
    AssetSpec::new(
        "asset2",
        0.53,
        CostModel::new(0.0255, 0.5, 0.005, rho_max),
        VolumeProfile::constant(4_500_000.0, steps),
    )
    .with_spot(50.0)
}

/// Liquid hedge instrument, V = 10M/day.
pub fn hedge_stock(steps: usize) -> AssetSpec {
    AssetSpec::new(
        "asset2",
        0.53,
        CostModel::new(0.002, 0.5, 0.001, HEDGE_ASSET_RHO),
        VolumeProfile::constant(10_000_000.0, steps),
    )
    .with_spot(50.0)
}

fn standalone(asset: AssetSpec, q0: f64, gamma: f64, steps: usize) -> LiquidationProblem {
    let var = asset.sigma * asset.sigma;
    LiquidationProblem {
        q0: vec![q0],
        gamma,
        assets: vec![asset],
        covariance: CovarianceMatrix::diagonal(&[var]),
        grid: one_day(steps),
    }
}

fn pair(a: AssetSpec, b: AssetSpec, q0: [f64; 2], gamma: f64, corr: f64, steps: usize) -> LiquidationProblem {
    let cov = correlated(&[a.sigma, b.sigma], corr);
    LiquidationProblem {
        q0: q0.to_vec(),
        gamma,
        assets: vec![a, b],
        covariance: cov,
        grid: one_day(steps),
    }
}

/// 300k shares, γ = 4e-7, participation cap `rho_max`.
pub fn fig2(rho_max: f64, steps: usize) -> LiquidationProblem {
    standalone(single_stock(rho_max, steps), 300_000.0, 4e-7, steps)
}

/// Long 300k / long 675k, caps 40%, correlation 0.5.
pub fn fig3(steps: usize) -> LiquidationProblem {
    pair(
        portfolio_stock1(0.4, steps),
        portfolio_stock2(0.4, steps),
        [300_000.0, 675_000.0],
        4e-7,
        0.5,
        steps,
    )
}

pub fn fig3_benchmark(steps: usize) -> LiquidationProblem {
    standalone(portfolio_stock1(0.4, steps), 300_000.0, 4e-7, steps)
}

/// Long 300k / short 675k, caps 30%, correlation 0.5.
pub fn fig4(steps: usize) -> LiquidationProblem {
    pair(
        portfolio_stock1(0.3, steps),
        portfolio_stock2(0.3, steps),
        [300_000.0, -675_000.0],
        4e-7,
        0.5,
        steps,
    )
}

pub fn fig4_benchmark(steps: usize) -> LiquidationProblem {
    standalone(portfolio_stock1(0.3, steps), 300_000.0, 4e-7, steps)
}

/// Long 300k in asset 1 with a flat position in a liquid correlated hedge, γ = 1e-6.
pub fn fig5(steps: usize) -> LiquidationProblem {
    pair(
        portfolio_stock1(0.5, steps),
        hedge_stock(steps),
        [300_000.0, 0.0],
        1e-6,
        0.5,
        steps,
    )
}

pub fn fig5_benchmark(steps: usize) -> LiquidationProblem {
    standalone(portfolio_stock1(0.5, steps), 300_000.0, 1e-6, steps)
}

/// Hedge overlay inputs for [`fig5`]: 20% / 17% relative vols, spots 75 / 50.
pub fn fig5_hedge_convention() -> HedgeConvention {
    HedgeConvention::RelativeVolatility {
        relative_vols: [0.20, 0.17],
        spots: [75.0, 50.0],
    }
}

/// Quadratic costs (`φ = 1`), no spread, caps far from binding. `d ∈ 1..=3`.
pub fn quadratic_synthetic(d: usize, steps: usize) -> LiquidationProblem {
    assert!((1..=3).contains(&d));
    let etas = [0.05, 0.03, 0.08];
    let sigmas = [0.9, 0.5, 1.2];
    let volumes = [2e6, 4e6, 1e6];
    let q0 = [250_000.0, -300_000.0, 120_000.0];
    let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.4, 1.0, 0.3, -0.2, 0.3, 1.0]);
    let corr = corr.view((0, 0), (d, d)).into_owned();
    let assets = (0..d)
        .map(|i| {
            AssetSpec::new(
                format!("quad{}", i + 1),
                sigmas[i],
                CostModel::new(etas[i], 1.0, 0.0, 5.0),
                VolumeProfile::constant(volumes[i], steps),
            )
        })
        .collect();
    LiquidationProblem {
        q0: q0[..d].to_vec(),
        gamma: 5e-7,
        assets,
        covariance: CovarianceMatrix::from_volatility_correlation(&sigmas[..d], &corr),
        grid: one_day(steps),
    }
}

/// Two uncorrelated copies of the single-stock setup with different sizes.
pub fn uncorrelated_pair(steps: usize) -> LiquidationProblem {
    pair(
        portfolio_stock1(0.3, steps),
        portfolio_stock2(0.3, steps),
        [300_000.0, -500_000.0],
        4e-7,
        0.0,
        steps,
    )
}

/// Named presets exposed through the CLI.
pub fn all_named(steps: usize) -> Vec<(String, LiquidationProblem)> {
    let mut out: Vec<(String, LiquidationProblem)> = FIG2_RHO
        .iter()
        .map(|&r| (format!("fig2_rho{:.0}", r * 100.0), fig2(r, steps)))
        .collect();
    out.push(("fig3".into(), fig3(steps)));
    out.push(("fig3_benchmark".into(), fig3_benchmark(steps)));
    out.push(("fig4".into(), fig4(steps)));
    out.push(("fig4_benchmark".into(), fig4_benchmark(steps)));
    out.push(("fig5".into(), fig5(steps)));
    out.push(("fig5_benchmark".into(), fig5_benchmark(steps)));
    out
}
