//! Execution cost `L(ρ) = η|ρ|^{1+φ} + ψ|ρ|` and its participation-capped
//! Legendre transform `H(p) = sup_{|ρ|≤ρ_m} pρ − L(ρ)`.
//!
//! `H` is even, convex and `C^{1,1}`: flat on the dead zone `|p| ≤ ψ`, a power
//! law in between, and affine once the cap binds at
//! `|p| = ψ + η(1+φ)ρ_m^φ`. Its slope `H'` is the optimal participation rate
//! for a given dual value.

use crate::model::{CostModel, LiquidationProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `|p| ≤ ψ`: no trading.
    DeadZone,
    /// `ψ < |p| ≤ ψ + η(1+φ)ρ_m^φ`.
    Interior,
    /// Participation cap binds.
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianEval {
    pub value: f64,
    pub slope: f64,
    pub regime: Regime,
}

/// Per-unit-volume cost of trading at participation rate `rho`. No cap here.
pub fn cost(model: &CostModel, rho: f64) -> f64 {
    let a = rho.abs();
    model.eta * a.powf(1.0 + model.phi) + model.psi * a
}

/// `|p|` at which the cap starts to bind.
pub fn cap_threshold(model: &CostModel) -> f64 {
    model.psi + model.eta * (1.0 + model.phi) * model.rho_max.powf(model.phi)
}

pub fn regime(model: &CostModel, p: f64) -> Regime {
    let a = p.abs();
    if a <= model.psi {
        Regime::DeadZone
    } else if a <= cap_threshold(model) {
        Regime::Interior
    } else {
        Regime::Capped
    }
}

pub fn hamiltonian(model: &CostModel, p: f64) -> HamiltonianEval {
    let CostModel {
        eta,
        phi,
        psi,
        rho_max,
    } = *model;
    let a = p.abs();
    let regime = regime(model, p);
    let (value, rate) = match regime {
        Regime::DeadZone => (0.0, 0.0),
        Regime::Interior => {
            let x = (a - psi) / (eta * (1.0 + phi));
            (phi * eta * x.powf(1.0 + 1.0 / phi), x.powf(1.0 / phi).min(rho_max))
        }
        Regime::Capped => ((a - psi) * rho_max - eta * rho_max.powf(1.0 + phi), rho_max),
    };
    HamiltonianEval {
        value,
        slope: signed(p, rate),
        regime,
    }
}

/// `H'(p) = sign(p) min(ρ_m, (max(|p|−ψ, 0) / (η(1+φ)))^{1/φ})`.
#[inline]
pub fn hamiltonian_slope(model: &CostModel, p: f64) -> f64 {
    let excess = (p.abs() - model.psi).max(0.0);
    let rate = (excess / (model.eta * (1.0 + model.phi)))
        .powf(1.0 / model.phi)
        .min(model.rho_max);
    signed(p, rate)
}

#[inline]
fn signed(p: f64, magnitude: f64) -> f64 {
    if p < 0.0 {
        -magnitude
    } else if p > 0.0 {
        magnitude
    } else {
        0.0
    }
}

/// Lipschitz constant of `H'`: `ρ_m^{1−φ} / (ηφ(1+φ))`, attained at the cap.
pub fn slope_lipschitz(model: &CostModel) -> f64 {
    model.rho_max.powf(1.0 - model.phi) / (model.eta * model.phi * (1.0 + model.phi))
}

/// `K = sup_{i,n} V^i_{n+1} ρ_m^{1−φ} / (ηφ(1+φ))`, so that `∇J̃₂` is `KΔt`-Lipschitz.
pub fn lipschitz_k(problem: &LiquidationProblem) -> f64 {
    problem
        .assets
        .iter()
        .map(|a| {
            let vmax = a.volume.values().iter().fold(0.0_f64, |m, &v| m.max(v));
            vmax * slope_lipschitz(&a.cost)
        })
        .fold(0.0, f64::max)
}
