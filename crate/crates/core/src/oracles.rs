//! Independent reference computations used to cross-check the descent solver.
//!
//! None of these go through the spectral/tridiagonal path: the shooting method
//! integrates the Hamiltonian system forward, the quadratic oracle assembles it
//! as one dense linear system, and the dense operators build the Kronecker
//! products entry by entry.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dual::{eval_primal_with_slack, PrimalObjective};
use crate::hamiltonian::{cap_threshold, cost, hamiltonian_slope};
use crate::model::{CostModel, DualPath, LiquidationProblem, PathMatrix, Trajectory, ValidationErrors};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid problem: {0}")]
    Invalid(#[from] ValidationErrors),
    #[error("oracle needs {expected} asset(s), problem has {found}")]
    Dimension { expected: &'static str, found: usize },
    #[error("asset {asset} is not quadratic without spread (phi = {phi}, psi = {psi})")]
    NotQuadratic { asset: usize, phi: f64, psi: f64 },
    #[error("participation cap binds for asset {asset} at step {step}; linear oracle does not apply")]
    CapBinding { asset: usize, step: usize },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("terminal holdings never change sign for |lambda| up to {limit:e}")]
    BracketFailure { limit: f64 },
    #[error("bisection stalled with |q_N| = {gap:e} above tolerance {tol:e}")]
    Unresolved { gap: f64, tol: f64 },
    #[error("hedge overlay needs {0}")]
    MissingInput(&'static str),
}

impl OracleError {
    /// True when the oracle cannot be applied to this problem at all.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Self::Dimension { .. } | Self::NotQuadratic { .. } | Self::CapBinding { .. } | Self::MissingInput(_)
        )
    }
}

// ---------------------------------------------------------------------------
// Shooting (d = 1)

#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub lambda_star: f64,
    pub q_terminal_gap: f64,
    pub trajectory: Trajectory,
    pub dual: DualPath,
    pub bracket: (f64, f64),
}

/// Integrates the discrete system forward from `(q0, p_0 = λ)` for a single asset.
pub fn forward_recursion(problem: &LiquidationProblem, lambda: f64) -> (Trajectory, DualPath) {
    let steps = problem.steps();
    let dt = problem.dt();
    let asset = &problem.assets[0];
    let variance = problem.covariance.entries()[(0, 0)];
    let mut q = PathMatrix::zeros(steps + 1, 1);
    let mut p = PathMatrix::zeros(steps, 1);
    q[(0, 0)] = problem.q0[0];
    p[(0, 0)] = lambda;
    for n in 0..steps {
        q[(n + 1, 0)] = q[(n, 0)] + dt * asset.volume.slice(n) * hamiltonian_slope(&asset.cost, p[(n, 0)]);
        if n + 1 < steps {
            p[(n + 1, 0)] = p[(n, 0)] + dt * problem.gamma * variance * q[(n + 1, 0)];
        }
    }
    (Trajectory(q), DualPath(p))
}

pub fn terminal_holdings(problem: &LiquidationProblem, lambda: f64) -> f64 {
    let (q, _) = forward_recursion(problem, lambda);
    q[(problem.steps(), 0)]
}

/// Bisection on `λ = p_0` so that the forward recursion ends flat. `q_N(λ)` is
/// nondecreasing, so a sign change brackets the root.
///
/// The recursion amplifies perturbations of `λ` geometrically in `N`; when
/// the terminal gap cannot be brought below `tol · max(1, |q0|)` in double
/// precision the result is [`OracleError::Unresolved`].
pub fn shooting_solve_1d(problem: &LiquidationProblem, tol: f64) -> Result<ShootingResult, OracleError> {
    problem.check()?;
    if problem.dim() != 1 {
        return Err(OracleError::Dimension {
            expected: "exactly 1",
            found: problem.dim(),
        });
    }
    let base = cap_threshold(&problem.assets[0].cost);
    let limit = 1e6 * base;
    let gap_tol = tol * problem.max_abs_q0().max(1.0);
    let f = |l: f64| terminal_holdings(problem, l);

    let mut lo = -base;
    while f(lo) > 0.0 {
        lo *= 2.0;
        if lo.abs() > limit {
            return Err(OracleError::BracketFailure { limit });
        }
    }
    let mut hi = base;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > limit {
            return Err(OracleError::BracketFailure { limit });
        }
    }

    let width_tol = tol * base;
    let mut best = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v.abs() < f(best).abs() {
            best = mid;
        }
        if v == 0.0 || (v.abs() <= gap_tol && hi - lo <= width_tol) {
            best = mid;
            break;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (mut trajectory, dual) = forward_recursion(problem, best);
    let gap = trajectory[(problem.steps(), 0)].abs();
    if gap > gap_tol {
        return Err(OracleError::Unresolved { gap, tol: gap_tol });
    }
    // The recursion leaves |q_N| ≤ tol; pin it like every other trajectory.
    let steps = problem.steps();
    trajectory[(steps, 0)] = 0.0;
    Ok(ShootingResult {
        lambda_star: best,
        q_terminal_gap: gap,
        trajectory,
        dual,
        bracket: (lo, hi),
    })
}

// ---------------------------------------------------------------------------
// Quadratic costs without spread: the system is linear.

/// Dense solve of the discrete Hamiltonian system when every asset has `φ = 1`,
/// `ψ = 0` and no cap binds, so that `H'(p) = p/(2η)`.
pub fn linear_solve_quadratic(problem: &LiquidationProblem) -> Result<(Trajectory, DualPath), OracleError> {
    problem.check()?;
    for (i, a) in problem.assets.iter().enumerate() {
        if a.cost.phi != 1.0 || a.cost.psi != 0.0 {
            return Err(OracleError::NotQuadratic {
                asset: i,
                phi: a.cost.phi,
                psi: a.cost.psi,
            });
        }
    }
    let steps = problem.steps();
    let d = problem.dim();
    let dt = problem.dt();
    let sigma = problem.covariance.entries();
    let nq = (steps - 1) * d;
    let size = nq + steps * d;
    let qidx = |n: usize, i: usize| (n - 1) * d + i;
    let pidx = |n: usize, i: usize| nq + n * d + i;

    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut b = DVector::<f64>::zeros(size);
    let mut row = 0;
    for n in 0..steps.saturating_sub(1) {
        for i in 0..d {
            a[(row, pidx(n + 1, i))] += 1.0;
            a[(row, pidx(n, i))] -= 1.0;
            for j in 0..d {
                a[(row, qidx(n + 1, j))] -= dt * problem.gamma * sigma[(i, j)];
            }
            row += 1;
        }
    }
    for n in 0..steps {
        for i in 0..d {
            let asset = &problem.assets[i];
            if n + 1 < steps {
                a[(row, qidx(n + 1, i))] += 1.0;
            }
            if n == 0 {
                b[row] += problem.q0[i];
            } else {
                a[(row, qidx(n, i))] -= 1.0;
            }
            a[(row, pidx(n, i))] -= dt * asset.volume.slice(n) / (2.0 * asset.cost.eta);
            row += 1;
        }
    }
    debug_assert_eq!(row, size);
    let x = a.lu().solve(&b).ok_or(OracleError::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::SingularSystem);
    }

    let p = DualPath::from_fn(steps, d, |n, i| x[pidx(n, i)]);
    for (i, asset) in problem.assets.iter().enumerate() {
        for n in 0..steps {
            if p[(n, i)].abs() / (2.0 * asset.cost.eta) > asset.cost.rho_max {
                return Err(OracleError::CapBinding { asset: i, step: n });
            }
        }
    }
    let q = Trajectory::pinned(&problem.q0, steps, |n, i| x[qidx(n, i)]);
    Ok((q, p))
}

// ---------------------------------------------------------------------------
// Primal optimality by random feasible perturbation.

#[derive(Debug, Clone)]
pub struct PerturbationOutcome {
    pub passed: bool,
    /// Smallest `Ĩ(q + δ) − Ĩ(q)` seen; negative means some perturbation improved `q`.
    pub worst_margin: f64,
    pub base_objective: f64,
    pub trials: usize,
    /// Trials whose perturbation was not shrunk to zero by the caps.
    pub effective_trials: usize,
}

/// Samples `trials` hat-shaped perturbations at random interior nodes, shrinks
/// each until it respects the caps, and checks that none lowers `Ĩ`.
/// `magnitude` is relative to `max(1, ‖q0‖_∞)`.
pub fn primal_perturbation_check(
    q: &Trajectory,
    problem: &LiquidationProblem,
    trials: usize,
    magnitude: f64,
    seed: u64,
) -> PerturbationOutcome {
    let steps = q.steps();
    let d = q.cols();
    let scale = magnitude * problem.max_abs_q0().max(1.0);
    let slack = q.participation_excess(problem).max(0.0) * (1.0 + 1e-9) + 1e-12 * problem.max_abs_q0().max(1.0);
    let base = match eval_primal_with_slack(q, problem, slack) {
        PrimalObjective::Finite(v) => v,
        PrimalObjective::Infeasible { .. } => {
            return PerturbationOutcome {
                passed: false,
                worst_margin: f64::NAN,
                base_objective: f64::INFINITY,
                trials: 0,
                effective_trials: 0,
            }
        }
    };
    let tol = 1e-10 * base.abs().max(1.0);
    let dt = problem.dt();

    let mut worst = f64::INFINITY;
    let mut effective = 0;
    for trial in 0..trials {
        if steps < 2 || scale == 0.0 {
            worst = worst.min(0.0);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let center = rng.random_range(1..steps);
        let half_width = rng.random_range(1..=(steps / 4).max(1)) as f64;
        let amps: Vec<f64> = (0..d).map(|_| scale * rng.random_range(-1.0..=1.0)).collect();
        let bump = PathMatrix::from_fn(steps + 1, d, |n, i| {
            if n == 0 || n == steps {
                0.0
            } else {
                amps[i] * (1.0 - (n as f64 - center as f64).abs() / half_width).max(0.0)
            }
        });

        let mut alpha: f64 = 1.0;
        for (i, asset) in problem.assets.iter().enumerate() {
            for n in 0..steps {
                let t = q[(n, i)] - q[(n + 1, i)];
                let s = bump[(n, i)] - bump[(n + 1, i)];
                let cap = asset.cost.rho_max * asset.volume.slice(n) * dt + slack;
                if s > 0.0 {
                    alpha = alpha.min(((cap - t) / s).max(0.0));
                } else if s < 0.0 {
                    alpha = alpha.min(((cap + t) / -s).max(0.0));
                }
            }
        }
        alpha *= 1.0 - 1e-9;
        let candidate = Trajectory(PathMatrix::from_fn(steps + 1, d, |n, i| q[(n, i)] + alpha * bump[(n, i)]));
        if alpha > 0.0 {
            effective += 1;
        }
        match eval_primal_with_slack(&candidate, problem, slack) {
            PrimalObjective::Finite(v) => worst = worst.min(v - base),
            // Rounding pushed a step over; such a point is not a competitor.
            PrimalObjective::Infeasible { .. } => {}
        }
    }
    if trials == 0 {
        worst = 0.0;
    }
    PerturbationOutcome {
        passed: worst >= -tol,
        worst_margin: worst,
        base_objective: base,
        trials,
        effective_trials: effective,
    }
}

// ---------------------------------------------------------------------------
// Finite differences and brute-force Legendre transform.

/// Central differences, coordinate step `h · (1 + |p_k|)`.
pub fn finite_difference_grad(f: impl Fn(&DualPath) -> f64, p: &DualPath, h: f64) -> PathMatrix {
    let mut out = PathMatrix::zeros(p.rows(), p.cols());
    let mut work = p.clone();
    for k in 0..p.as_slice().len() {
        let x = p.as_slice()[k];
        let step = h * (1.0 + x.abs());
        work.as_mut_slice()[k] = x + step;
        let up = f(&work);
        work.as_mut_slice()[k] = x - step;
        let down = f(&work);
        work.as_mut_slice()[k] = x;
        out.as_mut_slice()[k] = (up - down) / (2.0 * step);
    }
    out
}

/// `max_ρ pρ − L(ρ)` over `points` equally spaced rates in `[−ρ_m, ρ_m]`;
/// returns `(value, argmax)`.
pub fn legendre_grid_max(model: &CostModel, p: f64, points: usize) -> (f64, f64) {
    let (k, value) = grid_argmax(model, p, points);
    (value, grid_rate(model, k, points))
}

fn grid_rate(model: &CostModel, k: usize, points: usize) -> f64 {
    -model.rho_max + 2.0 * model.rho_max * k as f64 / (points - 1) as f64
}

fn grid_argmax(model: &CostModel, p: f64, points: usize) -> (usize, f64) {
    assert!(points >= 2);
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..points {
        let rho = grid_rate(model, k, points);
        let v = p * rho - cost(model, rho);
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

/// Grid maximization followed by ternary search between the grid neighbours
/// of the discrete argmax. The objective is concave in `ρ`, so the true
/// maximizer lies in that bracket, kinks included.
pub fn legendre_refined_max(model: &CostModel, p: f64, points: usize) -> (f64, f64) {
    let (k, _) = grid_argmax(model, p, points);
    let mut lo = grid_rate(model, k.saturating_sub(1), points);
    let mut hi = grid_rate(model, (k + 1).min(points - 1), points);
    let f = |rho: f64| p * rho - cost(model, rho);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let rho = 0.5 * (lo + hi);
    (f(rho), rho)
}

// ---------------------------------------------------------------------------
// Dense reference operators.

/// `N × N` second-difference matrix with unit corners (zero for `N = 1`).
pub fn dense_second_difference(steps: usize) -> DMatrix<f64> {
    DMatrix::from_fn(steps, steps, |n, m| {
        if steps == 1 {
            0.0
        } else if n == m {
            if n == 0 || n == steps - 1 {
                1.0
            } else {
                2.0
            }
        } else if n.abs_diff(m) == 1 {
            -1.0
        } else {
            0.0
        }
    })
}

/// `A ⊗ B` with time-major ordering.
pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    DMatrix::from_fn(ra * rb, ca * cb, |r, c| a[(r / rb, c / cb)] * b[(r % rb, c % cb)])
}

pub fn dense_sigma_inverse(problem: &LiquidationProblem) -> DMatrix<f64> {
    problem
        .covariance
        .entries()
        .clone()
        .try_inverse()
        .expect("covariance is invertible")
}

/// `I + Δθ/(γΔt²) M ⊗ Σ⁻¹`.
pub fn dense_implicit_matrix(problem: &LiquidationProblem, dtheta: f64) -> DMatrix<f64> {
    let dt = problem.dt();
    let n = problem.steps() * problem.dim();
    let k = kronecker(&dense_second_difference(problem.steps()), &dense_sigma_inverse(problem));
    DMatrix::identity(n, n) + k * (dtheta / (problem.gamma * dt * dt))
}

pub fn dense_implicit_solve(problem: &LiquidationProblem, dtheta: f64, rhs: &PathMatrix) -> PathMatrix {
    let a = dense_implicit_matrix(problem, dtheta);
    let b = DVector::from_column_slice(rhs.as_slice());
    let x = a.lu().solve(&b).expect("implicit matrix is invertible");
    PathMatrix::from_vec(rhs.rows(), rhs.cols(), x.iter().copied().collect())
}

/// One step of the finite-difference scheme written with ghost nodes
/// `p_{−1} = p_0 − ΔtγΣq0` and `p_N = p_{N−1}` (taken at the new iterate),
/// assembled and solved densely.
pub fn dense_scheme_step(problem: &LiquidationProblem, p: &DualPath, dtheta: f64) -> DualPath {
    let steps = problem.steps();
    let d = problem.dim();
    let dt = problem.dt();
    let sinv = dense_sigma_inverse(problem);
    let size = steps * d;
    let idx = |n: usize, i: usize| n * d + i;
    let w = 1.0 / (problem.gamma * dt * dt);
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut b = DVector::<f64>::zeros(size);

    for n in 0..steps {
        for i in 0..d {
            let r = idx(n, i);
            let asset = &problem.assets[i];
            a[(r, r)] += 1.0 / dtheta;
            b[r] += p[(n, i)] / dtheta - asset.volume.slice(n) * hamiltonian_slope(&asset.cost, p[(n, i)]);
            for j in 0..d {
                // −w Σ⁻¹ (x_{n+1} − 2 x_n + x_{n−1})
                let c = -w * sinv[(i, j)];
                a[(r, idx(n, j))] += -2.0 * c;
                if n + 1 < steps {
                    a[(r, idx(n + 1, j))] += c;
                } else {
                    a[(r, idx(n, j))] += c;
                }
                if n > 0 {
                    a[(r, idx(n - 1, j))] += c;
                } else {
                    a[(r, idx(0, j))] += c;
                }
            }
            if n == 0 {
                // Ghost term −ΔtγΣq0 inside x_{−1}: −w Σ⁻¹ (−ΔtγΣ q0) = q0/Δt.
                b[r] -= problem.q0[i] / dt;
            }
        }
    }
    let x = a.lu().solve(&b).expect("scheme matrix is invertible");
    DualPath::from_fn(steps, d, |n, i| x[idx(n, i)])
}

// ---------------------------------------------------------------------------
// Hedge-ratio overlay.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HedgeConvention {
    /// `−ρ (σ¹_rel S¹) / (σ²_rel S²)` with relative volatilities and spot prices.
    RelativeVolatility {
        relative_vols: [f64; 2],
        spots: [f64; 2],
    },
    /// `−ρ σ¹ / σ²` with absolute volatilities taken from `Σ`.
    AbsoluteVolatility,
}

/// Shares of the other asset per share of `asset1` that minimize variance
/// when trading is free.
pub fn hedge_ratio(
    problem: &LiquidationProblem,
    asset1: usize,
    convention: HedgeConvention,
) -> Result<f64, OracleError> {
    if problem.dim() != 2 {
        return Err(OracleError::Dimension {
            expected: "exactly 2",
            found: problem.dim(),
        });
    }
    if asset1 > 1 {
        return Err(OracleError::MissingInput("asset index 0 or 1"));
    }
    let other = 1 - asset1;
    let s = problem.covariance.entries();
    let vol = |i: usize| s[(i, i)].sqrt();
    let corr = s[(asset1, other)] / (vol(asset1) * vol(other));
    Ok(match convention {
        HedgeConvention::RelativeVolatility { relative_vols, spots } => {
            -corr * (relative_vols[asset1] * spots[asset1]) / (relative_vols[other] * spots[other])
        }
        HedgeConvention::AbsoluteVolatility => -corr * vol(asset1) / vol(other),
    })
}

/// `ratio · q¹_n` for every grid node.
pub fn hedge_ratio_curve(
    q: &Trajectory,
    problem: &LiquidationProblem,
    asset1: usize,
    convention: HedgeConvention,
) -> Result<Vec<f64>, OracleError> {
    let ratio = hedge_ratio(problem, asset1, convention)?;
    Ok((0..q.rows()).map(|n| ratio * q[(n, asset1)]).collect())
}
