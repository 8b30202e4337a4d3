//! Problem description: assets, execution-cost parameters, covariance, time grid,
//! plus the two path types the rest of the crate passes around.
//!
//! Paths are stored time-major: entry `(n, i)` lives at `n * assets + i`. The
//! Kronecker structure of the dual operator depends on this order.

use std::fmt;
use std::ops::{Deref, DerefMut, Index, IndexMut};
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

/// Relative eigenvalue floor for positive definiteness.
pub const EIGEN_REL_TOL: f64 = 1e-12;
/// Relative symmetry tolerance for covariance input.
pub const SYMMETRY_REL_TOL: f64 = 1e-12;

/// Execution-cost parameters `L(ρ) = η|ρ|^{1+φ} + ψ|ρ|` and participation cap `ρ_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub eta: f64,
    pub phi: f64,
    pub psi: f64,
    pub rho_max: f64,
}

impl CostModel {
    pub fn new(eta: f64, phi: f64, psi: f64, rho_max: f64) -> Self {
        Self {
            eta,
            phi,
            psi,
            rho_max,
        }
    }

    fn check(&self) -> Result<(), String> {
        let mut bad = Vec::new();
        if !(self.eta.is_finite() && self.eta > 0.0) {
            bad.push(format!("eta must be > 0 (got {})", self.eta));
        }
        if !(self.phi.is_finite() && self.phi > 0.0 && self.phi <= 1.0) {
            bad.push(format!("phi must lie in (0, 1] (got {})", self.phi));
        }
        if !(self.psi.is_finite() && self.psi >= 0.0) {
            bad.push(format!("psi must be >= 0 (got {})", self.psi));
        }
        if !(self.rho_max.is_finite() && self.rho_max > 0.0) {
            bad.push(format!("rho_max must be > 0 (got {})", self.rho_max));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad.join("; "))
        }
    }
}

/// Market volume per time slice, `V_1..V_N` (shares per unit time).
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeProfile {
    values: Vec<f64>,
}

impl VolumeProfile {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(volume: f64, steps: usize) -> Self {
        Self {
            values: vec![volume; steps],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Volume of slice `(t_n, t_{n+1}]`, i.e. `V_{n+1}`.
    #[inline]
    pub fn slice(&self, n: usize) -> f64 {
        self.values[n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Self {
        Self { horizon, steps }
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.horizon * n as f64 / self.steps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetSpec {
    pub name: String,
    /// Absolute price volatility (currency per sqrt time).
    pub sigma: f64,
    pub cost: CostModel,
    pub volume: VolumeProfile,
    /// Reference price, only used by the hedge-ratio overlay.
    pub spot: Option<f64>,
}

impl AssetSpec {
    pub fn new(name: impl Into<String>, sigma: f64, cost: CostModel, volume: VolumeProfile) -> Self {
        Self {
            name: name.into(),
            sigma,
            cost,
            volume,
            spot: None,
        }
    }

    pub fn with_spot(mut self, spot: f64) -> Self {
        self.spot = Some(spot);
        self
    }
}

/// Eigendecomposition `Σ = Q D Qᵀ`, used for every `Σ⁻¹` application.
#[derive(Debug, Clone)]
pub struct Spectral {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
}

impl Spectral {
    fn of(matrix: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(matrix.clone());
        Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues.iter().copied().collect(),
        }
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `out = Qᵀ x`
    pub fn to_eigenbasis(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (j, o) in out.iter_mut().enumerate().take(d) {
            *o = x.iter().enumerate().take(d).fold(0.0, |acc, (i, xi)| acc + self.vectors[(i, j)] * xi);
        }
    }

    /// `out = Q y`
    pub fn from_eigenbasis(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = y.iter().enumerate().take(d).fold(0.0, |acc, (j, yj)| acc + self.vectors[(i, j)] * yj);
        }
    }

    /// `out = Σ⁻¹ x`
    pub fn apply_inverse(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut y = vec![0.0; d];
        self.to_eigenbasis(x, &mut y);
        for (yj, lam) in y.iter_mut().zip(&self.values) {
            *yj /= lam;
        }
        self.from_eigenbasis(&y, out);
    }

    /// Max absolute row sum of `Σ⁻¹`.
    pub fn inverse_inf_norm(&self) -> f64 {
        let d = self.dim();
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        let mut row_sums = vec![0.0; d];
        for k in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            self.apply_inverse(&e, &mut col);
            for i in 0..d {
                row_sums[i] += col[i].abs();
            }
        }
        row_sums.into_iter().fold(0.0, f64::max)
    }
}

/// Price covariance `Σ` (currency² per unit time).
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
    spectral: OnceLock<Spectral>,
}

impl PartialEq for CovarianceMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl CovarianceMatrix {
    pub fn from_matrix(entries: DMatrix<f64>) -> Self {
        Self {
            entries,
            spectral: OnceLock::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.len();
        let m = DMatrix::from_fn(d, d, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN));
        Self::from_matrix(m)
    }

    /// `Σ = diag(σ) C diag(σ)`.
    pub fn from_volatility_correlation(sigmas: &[f64], correlation: &DMatrix<f64>) -> Self {
        let d = sigmas.len();
        let m = DMatrix::from_fn(d, d, |i, j| {
            if i < correlation.nrows() && j < correlation.ncols() {
                sigmas[i] * correlation[(i, j)] * sigmas[j]
            } else {
                f64::NAN
            }
        });
        Self::from_matrix(m)
    }

    pub fn diagonal(variances: &[f64]) -> Self {
        Self::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            variances,
        )))
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn spectral(&self) -> &Spectral {
        self.spectral.get_or_init(|| Spectral::of(&self.entries))
    }

    /// `out = Σ x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = x.iter().enumerate().take(d).fold(0.0, |acc, (j, xj)| acc + self.entries[(i, j)] * xj);
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += x[i] * self.entries[(i, j)] * x[j];
            }
        }
        acc
    }

    fn check(&self) -> Vec<ValidationError> {
        let mut errs = Vec::new();
        let d = self.dim();
        if self.entries.ncols() != d {
            errs.push(ValidationError::CovarianceShape {
                rows: d,
                cols: self.entries.ncols(),
            });
            return errs;
        }
        if self.entries.iter().any(|v| !v.is_finite()) {
            errs.push(ValidationError::NonFinite {
                what: "covariance".into(),
            });
            return errs;
        }
        let scale = self.entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in (i + 1)..d {
                let a = self.entries[(i, j)];
                let b = self.entries[(j, i)];
                if (a - b).abs() > SYMMETRY_REL_TOL * scale.max(f64::MIN_POSITIVE) {
                    errs.push(ValidationError::AsymmetricCovariance { row: i, col: j });
                }
            }
        }
        if !errs.is_empty() {
            return errs;
        }
        let spec = self.spectral();
        let max = spec.values().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let min = spec.values().iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if max.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || min <= EIGEN_REL_TOL * max {
            errs.push(ValidationError::SingularCovariance {
                min_eigenvalue: min,
                max_eigenvalue: max,
            });
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationError {
    NoAssets,
    HoldingsLength { expected: usize, found: usize },
    BadGrid { reason: String },
    BadRiskAversion { gamma: f64 },
    NonPositiveSigma { asset: usize, sigma: f64 },
    BadCostParams { asset: usize, reason: String },
    VolumeLength { asset: usize, expected: usize, found: usize },
    NonPositiveVolume { asset: usize, step: usize, value: f64 },
    CovarianceShape { rows: usize, cols: usize },
    AsymmetricCovariance { row: usize, col: usize },
    SingularCovariance { min_eigenvalue: f64, max_eigenvalue: f64 },
    NonFinite { what: String },
    InfeasibleLiquidation { asset: usize, name: String, position: f64, budget: f64 },
}

impl ValidationError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::NoAssets => "NoAssets",
            Self::HoldingsLength { .. } => "HoldingsLength",
            Self::BadGrid { .. } => "BadGrid",
            Self::BadRiskAversion { .. } => "BadRiskAversion",
            Self::NonPositiveSigma { .. } => "NonPositiveSigma",
            Self::BadCostParams { .. } => "BadCostParams",
            Self::VolumeLength { .. } => "VolumeLength",
            Self::NonPositiveVolume { .. } => "NonPositiveVolume",
            Self::CovarianceShape { .. } => "CovarianceShape",
            Self::AsymmetricCovariance { .. } => "AsymmetricCovariance",
            Self::SingularCovariance { .. } => "SingularCovariance",
            Self::NonFinite { .. } => "NonFinite",
            Self::InfeasibleLiquidation { .. } => "InfeasibleLiquidation",
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoAssets => write!(f, "problem has no assets"),
            Self::HoldingsLength { expected, found } => {
                write!(f, "initial holdings have length {found}, expected {expected}")
            }
            Self::BadGrid { reason } => write!(f, "bad time grid: {reason}"),
            Self::BadRiskAversion { gamma } => write!(f, "risk aversion must be > 0 (got {gamma})"),
            Self::NonPositiveSigma { asset, sigma } => {
                write!(f, "asset {asset}: volatility must be > 0 (got {sigma})")
            }
            Self::BadCostParams { asset, reason } => write!(f, "asset {asset}: {reason}"),
            Self::VolumeLength {
                asset,
                expected,
                found,
            } => write!(f, "asset {asset}: {found} volume entries, expected {expected}"),
            Self::NonPositiveVolume { asset, step, value } => {
                write!(f, "asset {asset}: volume at slice {step} must be > 0 (got {value})")
            }
            Self::CovarianceShape { rows, cols } => {
                write!(f, "covariance has shape {rows}x{cols}")
            }
            Self::AsymmetricCovariance { row, col } => {
                write!(f, "covariance is not symmetric at ({row}, {col})")
            }
            Self::SingularCovariance {
                min_eigenvalue,
                max_eigenvalue,
            } => write!(
                f,
                "covariance is not positive definite (eigenvalues in [{min_eigenvalue:e}, {max_eigenvalue:e}])"
            ),
            Self::NonFinite { what } => write!(f, "{what} contains non-finite values"),
            Self::InfeasibleLiquidation {
                asset,
                name,
                position,
                budget,
            } => write!(
                f,
                "asset {asset} ({name}): |q0| = {position} exceeds the participation budget {budget}"
            ),
        }
    }
}

/// Every violation found by [`LiquidationProblem::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

impl std::error::Error for ValidationErrors {}

#[derive(Debug, Clone, PartialEq)]
pub struct LiquidationProblem {
    /// Initial holdings in shares, signed.
    pub q0: Vec<f64>,
    /// Absolute risk aversion γ (per currency).
    pub gamma: f64,
    pub assets: Vec<AssetSpec>,
    pub covariance: CovarianceMatrix,
    pub grid: TimeGrid,
}

impl LiquidationProblem {
    pub fn dim(&self) -> usize {
        self.assets.len()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    pub fn max_abs_q0(&self) -> f64 {
        self.q0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Checks every invariant and returns the problem untouched, or the full list
    /// of violations.
    pub fn validate(self) -> Result<Self, ValidationErrors> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ValidationErrors(errs))
        }
    }

    pub fn check(&self) -> Result<(), ValidationErrors> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(errs))
        }
    }

    fn violations(&self) -> Vec<ValidationError> {
        let mut errs = Vec::new();
        let d = self.assets.len();
        if d == 0 {
            errs.push(ValidationError::NoAssets);
            return errs;
        }
        if self.q0.len() != d {
            errs.push(ValidationError::HoldingsLength {
                expected: d,
                found: self.q0.len(),
            });
        }
        if self.q0.iter().any(|v| !v.is_finite()) {
            errs.push(ValidationError::NonFinite {
                what: "initial holdings".into(),
            });
        }
        let grid_ok = self.grid.steps >= 1 && self.grid.horizon.is_finite() && self.grid.horizon > 0.0;
        if !grid_ok {
            errs.push(ValidationError::BadGrid {
                reason: format!(
                    "need horizon > 0 and steps >= 1 (got horizon {}, steps {})",
                    self.grid.horizon, self.grid.steps
                ),
            });
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            errs.push(ValidationError::BadRiskAversion { gamma: self.gamma });
        }
        for (i, a) in self.assets.iter().enumerate() {
            if !(a.sigma.is_finite() && a.sigma > 0.0) {
                errs.push(ValidationError::NonPositiveSigma {
                    asset: i,
                    sigma: a.sigma,
                });
            }
            if let Err(reason) = a.cost.check() {
                errs.push(ValidationError::BadCostParams { asset: i, reason });
            }
            if a.volume.len() != self.grid.steps {
                errs.push(ValidationError::VolumeLength {
                    asset: i,
                    expected: self.grid.steps,
                    found: a.volume.len(),
                });
            }
            for (n, &v) in a.volume.values().iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    errs.push(ValidationError::NonPositiveVolume {
                        asset: i,
                        step: n,
                        value: v,
                    });
                }
            }
        }
        if self.covariance.dim() != d {
            errs.push(ValidationError::CovarianceShape {
                rows: self.covariance.dim(),
                cols: self.covariance.entries().ncols(),
            });
        } else {
            errs.extend(self.covariance.check());
        }

        // Feasibility only makes sense once the inputs it uses are sane.
        if errs.is_empty() {
            for (i, margin) in self.feasibility_margin().into_iter().enumerate() {
                if margin < 0.0 {
                    let a = &self.assets[i];
                    errs.push(ValidationError::InfeasibleLiquidation {
                        asset: i,
                        name: a.name.clone(),
                        position: self.q0[i].abs(),
                        budget: participation_budget(a, self.grid.dt()),
                    });
                }
            }
        }
        errs
    }

    /// `ρ_m^i Σ_n V^i_n Δt − |q0^i|` per asset; all nonnegative iff liquidation is feasible.
    pub fn feasibility_margin(&self) -> Vec<f64> {
        let dt = self.grid.dt();
        self.assets
            .iter()
            .zip(&self.q0)
            .map(|(a, q)| participation_budget(a, dt) - q.abs())
            .collect()
    }
}

fn participation_budget(asset: &AssetSpec, dt: f64) -> f64 {
    let total: f64 = asset.volume.values().iter().map(|v| v * dt).sum();
    asset.cost.rho_max * total
}

/// Dense row-major `rows × cols` matrix indexed `(time, asset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PathMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "path data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for n in 0..rows {
            for i in 0..cols {
                data.push(f(n, i));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.cols..(n + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.cols..(n + 1) * self.cols]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.rows).map(|n| self[(n, i)]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }
}

impl Index<(usize, usize)> for PathMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (n, i): (usize, usize)) -> &f64 {
        &self.data[n * self.cols + i]
    }
}

impl IndexMut<(usize, usize)> for PathMatrix {
    #[inline]
    fn index_mut(&mut self, (n, i): (usize, usize)) -> &mut f64 {
        &mut self.data[n * self.cols + i]
    }
}

/// Dual variables `p_n^i`, `N` rows (`n = 0..N-1`) by `d` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPath(pub PathMatrix);

impl DualPath {
    pub fn zeros(steps: usize, assets: usize) -> Self {
        Self(PathMatrix::zeros(steps, assets))
    }

    pub fn for_problem(problem: &LiquidationProblem) -> Self {
        Self::zeros(problem.steps(), problem.dim())
    }

    pub fn from_fn(steps: usize, assets: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self(PathMatrix::from_fn(steps, assets, f))
    }
}

impl Deref for DualPath {
    type Target = PathMatrix;
    fn deref(&self) -> &PathMatrix {
        &self.0
    }
}

impl DerefMut for DualPath {
    fn deref_mut(&mut self) -> &mut PathMatrix {
        &mut self.0
    }
}

/// Holdings `q_n^i`, `N + 1` rows (`n = 0..N`) by `d` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory(pub PathMatrix);

impl Trajectory {
    /// Holdings with row 0 set to `q0` and the last row zero; `interior(n, i)`
    /// fills rows `1..N`.
    pub fn pinned(q0: &[f64], steps: usize, mut interior: impl FnMut(usize, usize) -> f64) -> Self {
        let d = q0.len();
        Self(PathMatrix::from_fn(steps + 1, d, |n, i| {
            if n == 0 {
                q0[i]
            } else if n == steps {
                0.0
            } else {
                interior(n, i)
            }
        }))
    }

    /// Constant-rate (TWAP) liquidation.
    pub fn twap(problem: &LiquidationProblem) -> Self {
        let steps = problem.steps();
        Self::pinned(&problem.q0, steps, |n, i| {
            problem.q0[i] * (1.0 - n as f64 / steps as f64)
        })
    }

    pub fn steps(&self) -> usize {
        self.rows() - 1
    }

    /// `v_{n+1} = (q_n − q_{n+1}) / Δt`, `N × d`.
    pub fn trade_rates(&self, dt: f64) -> PathMatrix {
        let steps = self.steps();
        PathMatrix::from_fn(steps, self.cols(), |n, i| (self[(n, i)] - self[(n + 1, i)]) / dt)
    }

    /// `max_{i,n} |q_n − q_{n+1}| − ρ_m V_{n+1} Δt`; feasible iff `<= 0`.
    pub fn participation_excess(&self, problem: &LiquidationProblem) -> f64 {
        let dt = problem.dt();
        let mut worst = f64::NEG_INFINITY;
        for (i, a) in problem.assets.iter().enumerate() {
            for n in 0..self.steps() {
                let traded = (self[(n, i)] - self[(n + 1, i)]).abs();
                let cap = a.cost.rho_max * a.volume.slice(n) * dt;
                worst = worst.max(traded - cap);
            }
        }
        worst
    }
}

impl Deref for Trajectory {
    type Target = PathMatrix;
    fn deref(&self) -> &PathMatrix {
        &self.0
    }
}

impl DerefMut for Trajectory {
    fn deref_mut(&mut self) -> &mut PathMatrix {
        &mut self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(q0: f64, rho: f64) -> LiquidationProblem {
        let grid = TimeGrid::new(1.0, 100);
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
            grid,
        }
    }

    #[test]
    fn feasible_problem_validates() {
        let p = single(300000.0, 0.2);
        assert!(p.clone().validate().is_ok());
    }

    #[test]
    fn oversized_position_is_infeasible() {
        let err = single(500000.0, 0.2).validate().unwrap_err();
        assert_eq!(err.0.len(), 1);
        match &err.0[0] {
            ValidationError::InfeasibleLiquidation {
                asset,
                position,
                budget,
                ..
            } => {
                assert_eq!(*asset, 0);
                assert_eq!(*position, 500000.0);
                assert!((budget - 400000.0).abs() < 1e-6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let mut p = single(0.0, 0.2);
        let vol = VolumeProfile::constant(2e6, 100);
        p.assets.push(AssetSpec::new("B", 1.0, CostModel::new(0.01, 0.5, 0.0, 0.2), vol));
        p.q0.push(0.0);
        p.covariance = CovarianceMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let err = p.validate().unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|e| matches!(e, ValidationError::SingularCovariance { .. })));
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let mut p = single(0.0, 0.2);
        let vol = VolumeProfile::constant(2e6, 100);
        p.assets.push(AssetSpec::new("B", 1.0, CostModel::new(0.01, 0.5, 0.0, 0.2), vol));
        p.q0.push(0.0);
        p.covariance = CovarianceMatrix::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]);
        let err = p.validate().unwrap_err();
        assert_eq!(err.0[0].kind(), "AsymmetricCovariance");
    }

    #[test]
    fn collects_every_violation() {
        let mut p = single(1.0, -0.2);
        p.assets[0].volume = VolumeProfile::new({
            let mut v = vec![2e6; 100];
            v[7] = 0.0;
            v
        });
        p.gamma = 0.0;
        let err = p.validate().unwrap_err();
        let kinds: Vec<_> = err.0.iter().map(|e| e.kind()).collect();
        assert!(kinds.contains(&"BadCostParams"));
        assert!(kinds.contains(&"NonPositiveVolume"));
        assert!(kinds.contains(&"BadRiskAversion"));
    }

    #[test]
    fn margin_examples() {
        assert!((single(300000.0, 0.2).feasibility_margin()[0] - 100000.0).abs() < 1e-6);
        assert!((single(-300000.0, 0.2).feasibility_margin()[0] - 100000.0).abs() < 1e-6);
        assert!((single(0.0, 0.2).feasibility_margin()[0] - 400000.0).abs() < 1e-6);
    }

    #[test]
    fn validate_is_idempotent() {
        let p = single(300000.0, 0.2);
        let once = p.clone().validate().unwrap();
        let twice = once.clone().validate().unwrap();
        assert_eq!(once, twice);
        assert_eq!(p, twice);
    }

    #[test]
    fn correlation_conversion() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let cov = CovarianceMatrix::from_volatility_correlation(&[2.0, 3.0], &c);
        assert_eq!(cov.entries()[(0, 0)], 4.0);
        assert_eq!(cov.entries()[(0, 1)], 3.0);
        assert_eq!(cov.entries()[(1, 1)], 9.0);
    }

    #[test]
    fn spectral_inverse_matches_dense_inverse() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let cov = CovarianceMatrix::from_matrix(m.clone());
        let inv = m.try_inverse().unwrap();
        let x = [1.0, -2.0, 0.5];
        let mut out = [0.0; 3];
        cov.spectral().apply_inverse(&x, &mut out);
        for i in 0..3 {
            let expect: f64 = (0..3).map(|j| inv[(i, j)] * x[j]).sum();
            assert!((out[i] - expect).abs() < 1e-13);
        }
        let s = cov.spectral();
        let recon = s.vectors() * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s.values())) * s.vectors().transpose();
        assert!((recon - cov.entries()).abs().max() < 1e-12);
    }

    #[test]
    fn twap_is_pinned() {
        let p = single(300000.0, 0.2);
        let q = Trajectory::twap(&p);
        assert_eq!(q.row(0), &[300000.0]);
        assert_eq!(q.row(100), &[0.0]);
        assert!(q.participation_excess(&p) < 0.0);
    }
}
