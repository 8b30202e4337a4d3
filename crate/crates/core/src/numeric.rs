//! Small numerical kernels: compensated summation and a cached tridiagonal solver.

/// Neumaier-compensated running sum. Order of `add` calls is the summation order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Adds `a * b` without rounding the product (two-product via FMA).
    #[inline]
    pub fn add_product(&mut self, a: f64, b: f64) {
        let hi = a * b;
        self.add(hi);
        self.add(a.mul_add(b, -hi));
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// LU factors of a tridiagonal matrix, eliminated without pivoting.
///
/// Only valid for matrices where no pivot vanishes; strictly diagonally
/// dominant matrices qualify.
#[derive(Debug, Clone)]
pub struct TridiagonalFactor {
    lower: Vec<f64>,
    // Modified super-diagonal c'_k and reciprocal pivots.
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl TridiagonalFactor {
    /// `lower[k]` is entry `(k+1, k)`, `upper[k]` entry `(k, k+1)`.
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        assert!(n >= 1);
        assert_eq!(lower.len(), n - 1);
        assert_eq!(upper.len(), n - 1);
        let mut cp = vec![0.0; n.saturating_sub(1)];
        let mut inv = vec![0.0; n];
        inv[0] = 1.0 / diag[0];
        for k in 0..n - 1 {
            cp[k] = upper[k] * inv[k];
            let pivot = diag[k + 1] - lower[k] * cp[k];
            inv[k + 1] = 1.0 / pivot;
        }
        Self {
            lower: lower.to_vec(),
            upper: cp,
            inv_pivot: inv,
        }
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Solves in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for k in 1..n {
            rhs[k] = (rhs[k] - self.lower[k - 1] * rhs[k - 1]) * self.inv_pivot[k];
        }
        for k in (0..n - 1).rev() {
            rhs[k] -= self.upper[k] * rhs[k + 1];
        }
    }
}
