//! Small dense linear-algebra helpers built on `nalgebra`.
//!
//! The samplers need Cholesky factors that can be scaled and rank-one
//! updated in place, so the lower factor is kept as a plain matrix rather
//! than behind `nalgebra::Cholesky`.

use nalgebra::{DMatrix, DVector};

/// Relative jitter added to the diagonal when a factorization fails.
pub const JITTER: f64 = 1e-10;

/// Replace `m` by its symmetric part.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// True when `m` is square and symmetric within `rel_tol` relative to its largest entry.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerFactor {
    l: DMatrix<f64>,
}

impl LowerFactor {
    /// Factor the symmetric part of `a`. Returns `None` if it is not positive definite.
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        if !a.is_square() {
            return None;
        }
        let mut sym = a.clone();
        symmetrize(&mut sym);
        Self::factor_in_place(sym)
    }

    /// Factor with one retry after adding `JITTER · trace / n` to the diagonal.
    pub fn new_jittered(a: &DMatrix<f64>) -> Option<Self> {
        if let Some(f) = Self::new(a) {
            return Some(f);
        }
        let n = a.nrows();
        if n == 0 {
            return None;
        }
        let trace = a.trace();
        if !(trace > 0.0) {
            return None;
        }
        let jitter = JITTER * trace / n as f64;
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] += jitter;
        }
        Self::new(&b)
    }

    fn factor_in_place(mut a: DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= a[(j, k)] * a[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            a[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= a[(i, k)] * a[(j, k)];
                }
                a[(i, j)] = s / d;
            }
            for i in 0..j {
                a[(i, j)] = 0.0;
            }
        }
        Some(Self { l: a })
    }

    /// Factor of a diagonal matrix.
    pub fn from_diagonal(diag: &DVector<f64>) -> Option<Self> {
        if diag.iter().any(|&d| !(d > 0.0)) {
            return None;
        }
        Some(Self {
            l: DMatrix::from_diagonal(&diag.map(f64::sqrt)),
        })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// log |A| = 2 Σ log L_ii.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Multiply the factored matrix by `s > 0`.
    pub fn scale(&mut self, s: f64) {
        self.l *= s.sqrt();
    }

    /// L z
    pub fn mul_vec(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(n);
        for j in 0..n {
            let zj = z[j];
            if zj == 0.0 {
                continue;
            }
            for i in j..n {
                out[i] += self.l[(i, j)] * zj;
            }
        }
        out
    }

    /// L⁻¹ b
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(x.as_mut_slice());
        x
    }

    /// L⁻¹ B, column by column.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        let n = self.dim();
        for c in 0..x.ncols() {
            let col = &mut x.as_mut_slice()[c * n..(c + 1) * n];
            self.solve_lower_in_place(col);
        }
        x
    }

    fn solve_lower_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        let l = self.l.as_slice();
        for j in 0..n {
            let xj = x[j] / l[j * n + j];
            x[j] = xj;
            if xj != 0.0 {
                let col = &l[j * n + j + 1..(j + 1) * n];
                for (xi, lij) in x[j + 1..].iter_mut().zip(col) {
                    *xi -= lij * xj;
                }
            }
        }
    }

    /// L⁻ᵀ b
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let l = self.l.as_slice();
        let mut x = b.clone();
        for j in (0..n).rev() {
            let col = &l[j * n + j + 1..(j + 1) * n];
            let s: f64 = col.iter().zip(x.iter().skip(j + 1)).map(|(a, b)| a * b).sum();
            x[j] = (x[j] - s) / l[j * n + j];
        }
        x
    }

    /// A⁻¹ b
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// A⁻¹
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut e = DVector::zeros(n);
            e[c] = 1.0;
            inv.set_column(c, &self.solve(&e));
        }
        symmetrize(&mut inv);
        inv
    }

    /// A = L Lᵀ
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut a = &self.l * self.l.transpose();
        symmetrize(&mut a);
        a
    }

    /// Replace the factor of `A` by the factor of `A + x xᵀ`.
    pub fn rank_one_update(&mut self, x: &DVector<f64>) {
        let ok = self.rank_one(x, 1.0);
        debug_assert!(ok, "rank-one update cannot fail");
    }

    /// Replace the factor of `A` by the factor of `A − x xᵀ`.
    ///
    /// Returns `false` (leaving the factor in an unspecified state) when the
    /// result is not positive definite.
    pub fn rank_one_downdate(&mut self, x: &DVector<f64>) -> bool {
        self.rank_one(x, -1.0)
    }

    fn rank_one(&mut self, x: &DVector<f64>, sign: f64) -> bool {
        let n = self.dim();
        let mut w: Vec<f64> = x.iter().copied().collect();
        let l = self.l.as_mut_slice();
        for k in 0..n {
            let lkk = l[k * n + k];
            let wk = w[k];
            if wk == 0.0 {
                continue;
            }
            let r2 = lkk * lkk + sign * wk * wk;
            if !(r2 > 0.0) || !r2.is_finite() {
                return false;
            }
            let r = r2.sqrt();
            let c = r / lkk;
            let s = wk / lkk;
            l[k * n + k] = r;
            let col = &mut l[k * n + k + 1..(k + 1) * n];
            for (lik, wi) in col.iter_mut().zip(w[k + 1..].iter_mut()) {
                *lik = (*lik + sign * s * *wi) / c;
                *wi = c * *wi - s * *lik;
            }
        }
        true
    }
}

/// Square root of a symmetric positive semi-definite matrix, `S Sᵀ = A`.
///
/// Uses an eigendecomposition so that singular (for instance all-zero)
/// covariances are accepted.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if !a.is_square() {
        return None;
    }
    if let Some(f) = LowerFactor::new(a) {
        return Some(f.l().clone());
    }
    let mut sym = a.clone();
    symmetrize(&mut sym);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&v| v < -1e-10 * scale) {
        return None;
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}

/// Numerically stable log Σ exp(v).
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Shift log-weights in place so that their log-sum-exp is zero.
/// Returns the log normalizer that was subtracted.
pub fn normalize_log_weights(v: &mut [f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let log_sum = v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    for x in v.iter_mut() {
        *x = (*x - m) - log_sum;
    }
    m + log_sum
}
