//! Semi-implicit gradient descent on the dual objective.
//!
//! Each iteration solves
//!
//! ```text
//! (I + Δθ/(γΔt²) M ⊗ Σ⁻¹) p^{k+1} = p^k − (Δθ/Δt) ∇J̃₂(p^k)
//! ```
//!
//! The heat-like part is implicit, so `Δθ` is limited only by the Lipschitz
//! constant `K` of the Hamiltonian part (`Δθ < 2/K`), not by `Δt`. The linear
//! system decouples in the eigenbasis of `Σ` into `d` tridiagonal systems of
//! size `N`, each strictly diagonally dominant.

use thiserror::Error;

use crate::dual::{eval_j, grad_j2, second_difference_entry, system_residual};
use crate::hamiltonian::lipschitz_k;
use crate::model::{DualPath, LiquidationProblem, PathMatrix, Spectral, Trajectory, ValidationErrors};
use crate::numeric::TridiagonalFactor;

/// Consecutive iterations with `J̃` above its best value so far that count as
/// divergence. Strict increases are a special case.
pub const DIVERGENCE_STREAK: usize = 10;

/// Relative slack on the best `J̃` before an iterate counts as an increase.
const INCREASE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `safety · 2/K`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dtheta: StepSize,
    pub safety: f64,
    pub max_iters: usize,
    /// Threshold on `‖p^{k+1} − p^k‖_∞ / Δθ`. `None` derives it from the
    /// residual tolerance (see [`auto_tol_grad`]).
    pub tol_grad: Option<f64>,
    /// Acceptance threshold on the system residual. `None` means
    /// `1e-6 · max(1, ‖q0‖_∞)`.
    pub tol_residual: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dtheta: StepSize::Auto,
            safety: 0.9,
            max_iters: 1_000_000,
            tol_grad: None,
            tol_residual: None,
        }
    }
}

impl SolverConfig {
    fn check(&self) -> Result<(), SolveError> {
        let bad = |msg: String| Err(SolveError::BadConfig(msg));
        if let StepSize::Fixed(x) = self.dtheta {
            if !(x.is_finite() && x > 0.0) {
                return bad(format!("dtheta must be > 0 (got {x})"));
            }
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return bad(format!("safety must lie in (0, 1) (got {})", self.safety));
        }
        for (name, v) in [("tol_grad", self.tol_grad), ("tol_residual", self.tol_residual)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return bad(format!("{name} must be > 0 (got {v})"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    Invalid(#[from] ValidationErrors),
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("spectral cache was built for dtheta = {cached}, called with {requested}")]
    CacheMismatch { cached: f64, requested: f64 },
    #[error("descent diverged at iteration {iteration}: {reason} (dtheta = {dtheta:e}; 2/K = {bound:e})")]
    Diverged {
        iteration: usize,
        reason: String,
        dtheta: f64,
        bound: f64,
    },
    #[error("no convergence after {} iterations (update norm {:e})", .0.iterations, .0.final_grad_norm)]
    NotConverged(Box<SolveReport>),
}

/// Why the iteration loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    IterationCap,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub p_star: DualPath,
    pub q_star: Trajectory,
    pub iterations: usize,
    /// `J̃(p^0), J̃(p^1), …`
    pub j_history: Vec<f64>,
    /// Last `‖p^{k+1} − p^k‖_∞ / Δθ`.
    pub final_grad_norm: f64,
    pub final_residual: f64,
    /// Largest `|q_n − q_{n+1}| − ρ_m V Δt`; positive means a cap is exceeded.
    pub participation_excess: f64,
    pub converged: bool,
    pub stop: StopReason,
    pub dtheta_used: f64,
    pub lipschitz_k: f64,
    pub tol_grad: f64,
    pub tol_residual: f64,
}

/// `safety · 2 / K`.
pub fn default_dtheta(problem: &LiquidationProblem, safety: f64) -> f64 {
    safety * 2.0 / lipschitz_k(problem)
}

/// Eigendecomposition of `Σ` plus one factored tridiagonal system
/// `I_N + (Δθ/(γΔt²ς)) M` per eigenvalue `ς`.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    spectral: Spectral,
    dtheta: f64,
    factors: Vec<TridiagonalFactor>,
    /// `Δθ/(γΔt²ς_j)`
    couplings: Vec<f64>,
}

impl SpectralCache {
    pub fn new(problem: &LiquidationProblem, dtheta: f64) -> Self {
        let spectral = problem.covariance.spectral().clone();
        let steps = problem.steps();
        let dt = problem.dt();
        let c = dtheta / (problem.gamma * dt * dt);
        let mut factors = Vec::with_capacity(spectral.dim());
        let mut couplings = Vec::with_capacity(spectral.dim());
        for &lam in spectral.values() {
            let a = c / lam;
            let diag: Vec<f64> = (0..steps)
                .map(|n| 1.0 + a * second_difference_entry(steps, n, n))
                .collect();
            let off = vec![-a; steps - 1];
            factors.push(TridiagonalFactor::new(&off, &diag, &off));
            couplings.push(a);
        }
        Self {
            spectral,
            dtheta,
            factors,
            couplings,
        }
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Off-diagonal weight of each eigencomponent's tridiagonal system.
    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    /// Every cached system is strictly diagonally dominant.
    pub fn diagonally_dominant(&self, steps: usize) -> bool {
        self.couplings.iter().all(|&a| {
            (0..steps).all(|n| {
                let diag = 1.0 + a * second_difference_entry(steps, n, n);
                let off: f64 = [n.checked_sub(1), (n + 1 < steps).then_some(n + 1)]
                    .into_iter()
                    .flatten()
                    .map(|m| (a * second_difference_entry(steps, n, m)).abs())
                    .sum();
                diag > off
            })
        })
    }

    fn check(&self, dtheta: f64) -> Result<(), SolveError> {
        if self.dtheta.to_bits() != dtheta.to_bits() {
            Err(SolveError::CacheMismatch {
                cached: self.dtheta,
                requested: dtheta,
            })
        } else {
            Ok(())
        }
    }
}

/// Solves `(I + Δθ/(γΔt²) M ⊗ Σ⁻¹) x = rhs` by rotating each time row into the
/// eigenbasis of `Σ`, solving one tridiagonal system per eigencomponent and
/// rotating back.
pub fn implicit_step(
    rhs: &PathMatrix,
    cache: &SpectralCache,
    problem: &LiquidationProblem,
    dtheta: f64,
) -> Result<PathMatrix, SolveError> {
    cache.check(dtheta)?;
    let steps = problem.steps();
    let d = problem.dim();
    let spectral = &cache.spectral;

    // Eigencomponent-major so each tridiagonal solve sees a contiguous slice.
    let mut y = vec![0.0; steps * d];
    let mut row = vec![0.0; d];
    for n in 0..steps {
        spectral.to_eigenbasis(rhs.row(n), &mut row);
        for j in 0..d {
            y[j * steps + n] = row[j];
        }
    }
    for (j, factor) in cache.factors.iter().enumerate() {
        factor.solve_in_place(&mut y[j * steps..(j + 1) * steps]);
    }
    let mut out = PathMatrix::zeros(steps, d);
    for n in 0..steps {
        for j in 0..d {
            row[j] = y[j * steps + n];
        }
        spectral.from_eigenbasis(&row, out.row_mut(n));
    }
    Ok(out)
}

/// `p^{k+1} = implicit_step(p^k − (Δθ/Δt) ∇J̃₂(p^k))`. The `q0` boundary
/// condition enters through the row-0 term of `∇J̃₂`.
pub fn descent_step(
    p: &DualPath,
    cache: &SpectralCache,
    problem: &LiquidationProblem,
    dtheta: f64,
) -> Result<DualPath, SolveError> {
    let g2 = grad_j2(p, problem);
    let ratio = dtheta / problem.dt();
    let mut rhs = p.0.clone();
    for (r, g) in rhs.as_mut_slice().iter_mut().zip(g2.as_slice()) {
        *r -= ratio * g;
    }
    implicit_step(&rhs, cache, problem, dtheta).map(DualPath)
}

/// `q_n = (1/(γΔt)) Σ⁻¹ (p_n − p_{n−1})` for `1 ≤ n ≤ N−1`; `q_0 = q0`, `q_N = 0`.
pub fn recover_trajectory(p: &DualPath, problem: &LiquidationProblem) -> Trajectory {
    let steps = problem.steps();
    let d = problem.dim();
    let spectral = problem.covariance.spectral();
    let scale = 1.0 / (problem.gamma * problem.dt());
    let mut q = PathMatrix::zeros(steps + 1, d);
    q.row_mut(0).copy_from_slice(&problem.q0);
    let mut diff = vec![0.0; d];
    let mut out = vec![0.0; d];
    for n in 1..steps {
        for i in 0..d {
            diff[i] = p[(n, i)] - p[(n - 1, i)];
        }
        spectral.apply_inverse(&diff, &mut out);
        for (dst, v) in q.row_mut(n).iter_mut().zip(&out) {
            *dst = scale * v;
        }
    }
    Trajectory(q)
}

/// Residual tolerance used when the config leaves it unset.
pub fn default_tol_residual(problem: &LiquidationProblem) -> f64 {
    1e-6 * problem.max_abs_q0().max(1.0)
}

/// Update-norm threshold that keeps `‖∇J̃‖_∞` (the trading-equation defect)
/// below half of `tol_residual`.
///
/// `∇J̃(p^k) = −(Δt/Δθ) B (p^{k+1} − p^k)` with `B = I + Δθ/(γΔt²) M ⊗ Σ⁻¹`,
/// and `‖B‖_∞ ≤ 1 + 4 Δθ/(γΔt²) ‖Σ⁻¹‖_∞`.
pub fn auto_tol_grad(problem: &LiquidationProblem, dtheta: f64, tol_residual: f64) -> f64 {
    let dt = problem.dt();
    let c = dtheta / (problem.gamma * dt * dt);
    let b_norm = 1.0 + 4.0 * c * problem.covariance.spectral().inverse_inf_norm();
    0.5 * tol_residual / (dt * b_norm)
}

pub fn solve(problem: &LiquidationProblem, config: &SolverConfig) -> Result<SolveReport, SolveError> {
    solve_from(problem, config, None)
}

/// Runs the descent from `initial` (zero when `None`).
pub fn solve_from(
    problem: &LiquidationProblem,
    config: &SolverConfig,
    initial: Option<DualPath>,
) -> Result<SolveReport, SolveError> {
    problem.check()?;
    config.check()?;
    let k = lipschitz_k(problem);
    let dtheta = match config.dtheta {
        StepSize::Auto => default_dtheta(problem, config.safety),
        StepSize::Fixed(x) => x,
    };
    let tol_residual = config
        .tol_residual
        .unwrap_or_else(|| default_tol_residual(problem));
    let tol_grad = config
        .tol_grad
        .unwrap_or_else(|| auto_tol_grad(problem, dtheta, tol_residual));
    let cache = SpectralCache::new(problem, dtheta);

    let mut p = match initial {
        Some(p0) => {
            assert_eq!((p0.rows(), p0.cols()), (problem.steps(), problem.dim()), "warm start has the wrong shape");
            p0
        }
        None => DualPath::for_problem(problem),
    };
    let j0 = eval_j(&p, problem);
    let mut best = j0;
    let mut j_history = vec![j0];
    let mut streak = 0usize;
    let mut iterations = 0usize;
    let mut update_norm = f64::INFINITY;
    let mut stop = StopReason::IterationCap;
    let diverged = |iteration: usize, reason: String| SolveError::Diverged {
        iteration,
        reason,
        dtheta,
        bound: 2.0 / k,
    };

    for it in 0..config.max_iters {
        let next = descent_step(&p, &cache, problem, dtheta)?;
        if !next.is_finite() {
            return Err(diverged(it + 1, "non-finite dual iterate".into()));
        }
        let j_next = eval_j(&next, problem);
        if !j_next.is_finite() {
            return Err(diverged(it + 1, "non-finite objective".into()));
        }
        // Above 2/K the iterates tend to settle on a bounded cycle rather
        // than blow up, so compare against the best value seen, not the last.
        streak = if j_next > best + INCREASE_SLACK * best.abs().max(1.0) {
            streak + 1
        } else {
            0
        };
        best = best.min(j_next);
        if streak >= DIVERGENCE_STREAK {
            return Err(diverged(
                it + 1,
                format!("objective above its best value for {DIVERGENCE_STREAK} iterations in a row"),
            ));
        }
        update_norm = next.max_abs_diff(&p) / dtheta;
        p = next;
        j_history.push(j_next);
        if update_norm <= tol_grad {
            stop = StopReason::Tolerance;
            break;
        }
        iterations = it + 1;
    }

    let q = recover_trajectory(&p, problem);
    let residual = system_residual(&q, &p, problem);
    let excess = q.participation_excess(problem);
    let converged = stop == StopReason::Tolerance && residual <= tol_residual && excess <= tol_residual;
    let report = SolveReport {
        p_star: p,
        q_star: q,
        iterations,
        j_history,
        final_grad_norm: update_norm,
        final_residual: residual,
        participation_excess: excess,
        converged,
        stop,
        dtheta_used: dtheta,
        lipschitz_k: k,
        tol_grad,
        tol_residual,
    };
    match stop {
        StopReason::Tolerance => Ok(report),
        StopReason::IterationCap => Err(SolveError::NotConverged(Box::new(report))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::grad_j;
    use crate::model::{AssetSpec, CostModel, CovarianceMatrix, TimeGrid, VolumeProfile};

    fn fig2(rho: f64, q0: f64) -> LiquidationProblem {
        LiquidationProblem {
            q0: vec![q0],
            gamma: 4e-7,
            assets: vec![AssetSpec::new(
                "A",
                0.9375,
                CostModel::new(0.045, 0.5, 0.0081, rho),
                VolumeProfile::constant(2e6, 100),
            )],
            covariance: CovarianceMatrix::diagonal(&[0.9375 * 0.9375]),
            grid: TimeGrid::new(1.0, 100),
        }
    }

    #[test]
    fn default_dtheta_examples() {
        let p = fig2(0.2, 300000.0);
        let k = lipschitz_k(&p);
        let dt = default_dtheta(&p, 0.9);
        assert!((dt - 0.9 * 2.0 / k).abs() <= 1e-15 * dt);
        assert!((dt - 6.792e-8).abs() < 1e-11);
        assert!((default_dtheta(&p, 0.5) - 0.5 * default_dtheta(&p, 1.0)).abs() < 1e-22);
    }

    #[test]
    fn cache_is_diagonally_dominant() {
        let p = fig2(0.2, 300000.0);
        let cache = SpectralCache::new(&p, default_dtheta(&p, 0.9));
        assert!(cache.diagonally_dominant(100));
    }

    #[test]
    fn cache_mismatch_is_reported() {
        let p = fig2(0.2, 300000.0);
        let cache = SpectralCache::new(&p, 1e-8);
        let rhs = PathMatrix::zeros(100, 1);
        assert!(matches!(
            implicit_step(&rhs, &cache, &p, 2e-8),
            Err(SolveError::CacheMismatch { .. })
        ));
    }

    #[test]
    fn vanishing_step_is_identity() {
        let p = fig2(0.2, 300000.0);
        let cache = SpectralCache::new(&p, 1e-300);
        let rhs = PathMatrix::from_fn(100, 1, |n, _| (n as f64 * 0.37).sin());
        let x = implicit_step(&rhs, &cache, &p, 1e-300).unwrap();
        assert!(x.max_abs_diff(&rhs) < 1e-15);
    }

    #[test]
    fn recovery_pins_endpoints() {
        let p = fig2(0.2, 300000.0);
        let path = DualPath::from_fn(100, 1, |n, _| -0.04 + 3e-4 * (n as f64).sqrt());
        let q = recover_trajectory(&path, &p);
        assert_eq!(q.row(0), &[300000.0]);
        assert_eq!(q.row(100), &[0.0]);
        let flat = recover_trajectory(&DualPath::from_fn(100, 1, |_, _| 0.2), &p);
        assert!((1..100).all(|n| flat[(n, 0)] == 0.0));
    }

    #[test]
    fn recovery_is_odd() {
        let p = fig2(0.2, 300000.0);
        let mut neg = p.clone();
        neg.q0 = vec![-300000.0];
        let path = DualPath::from_fn(100, 1, |n, _| -0.04 + 3e-4 * (n as f64).sqrt());
        let a = recover_trajectory(&path, &p);
        let b = recover_trajectory(&DualPath(path.scaled(-1.0)), &neg);
        assert_eq!(a.scaled(-1.0), b.0);
    }

    #[test]
    fn nothing_to_liquidate() {
        let p = fig2(0.2, 0.0);
        let report = solve(&p, &SolverConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.q_star.max_abs(), 0.0);
        assert!(report.p_star.max_abs() <= p.assets[0].cost.psi);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let p = fig2(0.2, 300000.0);
        let report = solve(
            &p,
            &SolverConfig {
                tol_residual: Some(1e-9 * 300000.0),
                ..Default::default()
            },
        )
        .unwrap();
        let cache = SpectralCache::new(&p, report.dtheta_used);
        let next = descent_step(&report.p_star, &cache, &p, report.dtheta_used).unwrap();
        let scale = report.p_star.max_abs();
        assert!(next.max_abs_diff(&report.p_star) <= 1e-12 * scale);
        assert!(grad_j(&report.p_star, &p).max_abs() <= 1e-9 * 300000.0);
    }

    #[test]
    fn descent_step_rejects_bad_config() {
        let p = fig2(0.2, 300000.0);
        let cfg = SolverConfig {
            safety: 1.5,
            ..Default::default()
        };
        assert!(matches!(solve(&p, &cfg), Err(SolveError::BadConfig(_))));
    }
}
