//! Discrete dual objective `J̃ = J̃₁ + J̃₂`, its gradient, the primal objective
//! `Ĩ`, and the residual of the discrete Hamiltonian system.
//!
//! ```text
//! J̃₁(p) = 1/(2γΔt) Σ_{n=1}^{N-1} (p_n − p_{n−1})ᵀ Σ⁻¹ (p_n − p_{n−1})
//! J̃₂(p) = Σ_i Σ_n V^i_{n+1} H^i(p^i_n) Δt + Σ_i p^i_0 q^i_0
//! ∇J̃₁(p) = 1/(γΔt) (M ⊗ Σ⁻¹) p
//! ∇J̃₂(p)_{n,i} = Δt V^i_{n+1} H^i'(p^i_n) + [n = 0] q^i_0
//! ```
//!
//! With `q` recovered from `p`, row `n` of `∇J̃` is exactly the defect of
//! `q_{n+1} = q_n + Δt V_{n+1} H'(p_n)`, which is why the gradient norm and the
//! system residual track each other.

use crate::hamiltonian::{cost, hamiltonian, hamiltonian_slope};
use crate::model::{DualPath, LiquidationProblem, PathMatrix, Spectral, Trajectory};
use crate::numeric::CompensatedSum;

/// `(1/(γΔt)) M ⊗ Σ⁻¹` where `M` is the `N × N` second-difference matrix with
/// unit corners (`M = 0` when `N = 1`).
#[derive(Debug, Clone)]
pub struct KroneckerHeatOperator<'a> {
    steps: usize,
    spectral: &'a Spectral,
    scale: f64,
}

impl<'a> KroneckerHeatOperator<'a> {
    pub fn new(problem: &'a LiquidationProblem) -> Self {
        Self {
            steps: problem.steps(),
            spectral: problem.covariance.spectral(),
            scale: 1.0 / (problem.gamma * problem.dt()),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Entry `M[n][m]`.
    pub fn m_entry(&self, n: usize, m: usize) -> f64 {
        second_difference_entry(self.steps, n, m)
    }

    /// `M` applied along the time axis, column by column.
    pub fn apply_time(&self, p: &PathMatrix) -> PathMatrix {
        apply_second_difference(p)
    }

    /// `(1/(γΔt)) (M ⊗ Σ⁻¹) p`.
    pub fn apply(&self, p: &PathMatrix) -> PathMatrix {
        let mp = self.apply_time(p);
        let d = p.cols();
        let mut out = PathMatrix::zeros(p.rows(), d);
        let mut tmp = vec![0.0; d];
        for n in 0..p.rows() {
            self.spectral.apply_inverse(mp.row(n), &mut tmp);
            for (o, t) in out.row_mut(n).iter_mut().zip(&tmp) {
                *o = self.scale * t;
            }
        }
        out
    }
}

pub(crate) fn second_difference_entry(steps: usize, n: usize, m: usize) -> f64 {
    if steps == 1 {
        return 0.0;
    }
    if n == m {
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
}

fn apply_second_difference(p: &PathMatrix) -> PathMatrix {
    let rows = p.rows();
    let d = p.cols();
    let mut out = PathMatrix::zeros(rows, d);
    if rows < 2 {
        return out;
    }
    for n in 0..rows {
        for i in 0..d {
            let here = p[(n, i)];
            let mut v = 0.0;
            if n > 0 {
                v += here - p[(n - 1, i)];
            }
            if n + 1 < rows {
                v += here - p[(n + 1, i)];
            }
            out[(n, i)] = v;
        }
    }
    out
}

/// `Δpᵀ Σ⁻¹ Δp` evaluated in the eigenbasis, so it is never negative.
fn inverse_quad_form(spectral: &Spectral, x: &[f64], scratch: &mut [f64]) -> f64 {
    spectral.to_eigenbasis(x, scratch);
    scratch
        .iter()
        .zip(spectral.values())
        .map(|(y, lam)| y * y / lam)
        .sum()
}

fn add_j1_terms(acc: &mut CompensatedSum, p: &DualPath, problem: &LiquidationProblem) {
    let spectral = problem.covariance.spectral();
    let d = problem.dim();
    let factor = 0.5 / (problem.gamma * problem.dt());
    let mut diff = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for n in 1..p.rows() {
        for i in 0..d {
            diff[i] = p[(n, i)] - p[(n - 1, i)];
        }
        acc.add(factor * inverse_quad_form(spectral, &diff, &mut scratch));
    }
}

fn add_j2_terms(acc: &mut CompensatedSum, p: &DualPath, problem: &LiquidationProblem) {
    let dt = problem.dt();
    for (i, asset) in problem.assets.iter().enumerate() {
        for n in 0..p.rows() {
            let h = hamiltonian(&asset.cost, p[(n, i)]).value;
            acc.add(asset.volume.slice(n) * h * dt);
        }
    }
    for (i, q) in problem.q0.iter().enumerate() {
        acc.add_product(p[(0, i)], *q);
    }
}

pub fn eval_j1(p: &DualPath, problem: &LiquidationProblem) -> f64 {
    let mut acc = CompensatedSum::new();
    add_j1_terms(&mut acc, p, problem);
    acc.value()
}

pub fn eval_j2(p: &DualPath, problem: &LiquidationProblem) -> f64 {
    let mut acc = CompensatedSum::new();
    add_j2_terms(&mut acc, p, problem);
    acc.value()
}

/// `J̃(p)`, accumulated in one compensated pass (J̃₁ terms, then J̃₂ terms).
pub fn eval_j(p: &DualPath, problem: &LiquidationProblem) -> f64 {
    let mut acc = CompensatedSum::new();
    add_j1_terms(&mut acc, p, problem);
    add_j2_terms(&mut acc, p, problem);
    acc.value()
}

pub fn grad_j1(p: &DualPath, problem: &LiquidationProblem) -> PathMatrix {
    KroneckerHeatOperator::new(problem).apply(p)
}

pub fn grad_j2(p: &DualPath, problem: &LiquidationProblem) -> PathMatrix {
    let dt = problem.dt();
    let mut g = PathMatrix::from_fn(p.rows(), p.cols(), |n, i| {
        let asset = &problem.assets[i];
        dt * asset.volume.slice(n) * hamiltonian_slope(&asset.cost, p[(n, i)])
    });
    for (i, q) in problem.q0.iter().enumerate() {
        g[(0, i)] += q;
    }
    g
}

pub fn grad_j(p: &DualPath, problem: &LiquidationProblem) -> PathMatrix {
    let mut g = grad_j1(p, problem);
    let g2 = grad_j2(p, problem);
    for (a, b) in g.as_mut_slice().iter_mut().zip(g2.as_slice()) {
        *a += b;
    }
    g
}

/// Value of the primal objective `Ĩ`, with `+∞` outside the participation caps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimalObjective {
    Finite(f64),
    Infeasible { asset: usize, step: usize, excess: f64 },
}

impl PrimalObjective {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(*v),
            Self::Infeasible { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Self::Finite(_))
    }
}

/// `Ĩ(q) = Σ_i Σ_n L^i((q_n − q_{n+1})/(V_{n+1}Δt)) V_{n+1}Δt + (γ/2) Σ_n q_{n+1}ᵀ Σ q_{n+1} Δt`.
pub fn eval_primal(q: &Trajectory, problem: &LiquidationProblem) -> PrimalObjective {
    eval_primal_with_slack(q, problem, 0.0)
}

/// As [`eval_primal`], but a step may exceed its cap by up to `slack` shares.
pub fn eval_primal_with_slack(
    q: &Trajectory,
    problem: &LiquidationProblem,
    slack: f64,
) -> PrimalObjective {
    let dt = problem.dt();
    let steps = q.steps();
    let mut acc = CompensatedSum::new();
    for (i, asset) in problem.assets.iter().enumerate() {
        for n in 0..steps {
            let traded = q[(n, i)] - q[(n + 1, i)];
            let vol = asset.volume.slice(n) * dt;
            let excess = traded.abs() - asset.cost.rho_max * vol;
            if excess > slack {
                return PrimalObjective::Infeasible {
                    asset: i,
                    step: n,
                    excess,
                };
            }
            acc.add(cost(&asset.cost, traded / vol) * vol);
        }
    }
    let half_risk = 0.5 * problem.gamma * dt;
    for n in 1..=steps {
        acc.add(half_risk * problem.covariance.quad_form(q.row(n)));
    }
    PrimalObjective::Finite(acc.value())
}

/// Max-norm defect of the discrete Hamiltonian system
///
/// ```text
/// p_{n+1} = p_n + Δt γ Σ q_{n+1},            0 ≤ n < N−1
/// q_{n+1} = q_n + Δt V_{n+1} H'(p_n),        0 ≤ n < N
/// q_0 = q0, q_N = 0
/// ```
pub fn system_residual(q: &Trajectory, p: &DualPath, problem: &LiquidationProblem) -> f64 {
    let steps = problem.steps();
    let d = problem.dim();
    let dt = problem.dt();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        worst = worst.max((q[(0, i)] - problem.q0[i]).abs());
        worst = worst.max(q[(steps, i)].abs());
    }
    let mut sq = vec![0.0; d];
    for n in 0..steps.saturating_sub(1) {
        problem.covariance.apply(q.row(n + 1), &mut sq);
        for i in 0..d {
            let defect = p[(n + 1, i)] - p[(n, i)] - dt * problem.gamma * sq[i];
            worst = worst.max(defect.abs());
        }
    }
    for (i, asset) in problem.assets.iter().enumerate() {
        for n in 0..steps {
            let defect = q[(n + 1, i)]
                - q[(n, i)]
                - dt * asset.volume.slice(n) * hamiltonian_slope(&asset.cost, p[(n, i)]);
            worst = worst.max(defect.abs());
        }
    }
    worst
}
