//! Dense square matrices, LDLᵀ factorization and a cyclic Jacobi
//! eigensolver.
//!
//! Dimensions in this crate are small (feature dimension `d`), so everything
//! is row-major `Vec<f64>` with O(d³) kernels.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Row-major `n × n` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = scale;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds from a flat row-major buffer. Panics if `data.len() != n * n`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "buffer length must be n*n");
        Self { n, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "rows must form a square matrix");
            data.extend_from_slice(r);
        }
        Self { n, data }
    }

    /// `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        let mut m = Self::zeros(v.len());
        m.add_outer(v, 1.0);
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn add_assign(&mut self, other: &SquareMatrix) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn sub(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        SquareMatrix { n: self.n, data }
    }

    /// `self += scale · v vᵀ`.
    pub fn add_outer(&mut self, v: &[f64], scale: f64) {
        assert_eq!(v.len(), self.n);
        for i in 0..self.n {
            let vi = scale * v[i];
            for j in 0..self.n {
                self.data[i * self.n + j] += vi * v[j];
            }
        }
    }

    pub fn add_scaled_identity(&mut self, scale: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += scale;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], v))
            .collect()
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// `vᵀ A v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(libm::fabs(x)))
    }

    /// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
    pub fn sym_opnorm(&self) -> f64 {
        SymEigen::new(self)
            .values
            .iter()
            .fold(0.0, |m, &x| m.max(libm::fabs(x)))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Determinant kept both as a raw product and as a log, so that threshold
/// comparisons can use the exact product whenever it is representable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Determinant {
    pub value: f64,
    pub log: f64,
}

impl Determinant {
    pub fn of_scaled_identity(n: usize, scale: f64) -> Self {
        let mut value = 1.0;
        for _ in 0..n {
            value *= scale;
        }
        Self {
            value,
            log: n as f64 * libm::log(scale),
        }
    }

    /// `self ≥ factor · reference`, using the product form when it is finite.
    pub fn at_least(&self, factor: f64, reference: &Determinant) -> bool {
        if !(self.value > 0.0) {
            return false;
        }
        let scaled = factor * reference.value;
        if self.value.is_finite() && scaled.is_finite() && scaled > 0.0 {
            self.value >= scaled
        } else {
            self.log >= libm::log(factor) + reference.log
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matrix is not positive definite (pivot {pivot})")]
pub struct NotPositiveDefinite {
    pub pivot: usize,
}

/// `A = L D Lᵀ` with unit lower-triangular `L` and positive diagonal `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ldlt {
    n: usize,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl Ldlt {
    pub fn factor(a: &SquareMatrix) -> Result<Self, NotPositiveDefinite> {
        let n = a.dim();
        let mut lower = vec![0.0; n * n];
        let mut diag = vec![0.0; n];
        for j in 0..n {
            let mut dj = a.get(j, j);
            for k in 0..j {
                let l = lower[j * n + k];
                dj -= l * l * diag[k];
            }
            if !(dj > 0.0) || !dj.is_finite() {
                return Err(NotPositiveDefinite { pivot: j });
            }
            diag[j] = dj;
            lower[j * n + j] = 1.0;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= lower[i * n + k] * lower[j * n + k] * diag[k];
                }
                lower[i * n + j] = s / dj;
            }
        }
        Ok(Self { n, lower, diag })
    }

    pub fn determinant(&self) -> Determinant {
        let mut value = 1.0;
        let mut log = 0.0;
        for &d in &self.diag {
            value *= d;
            log += libm::log(d);
        }
        Determinant { value, log }
    }

    /// `L⁻¹ b`.
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * z[k];
            }
            z[i] = s;
        }
        z
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x = self.forward(b);
        for (xi, d) in x.iter_mut().zip(&self.diag) {
            *xi /= *d;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lower[k * n + i] * x[k];
            }
            x[i] = s;
        }
        x
    }

    /// `bᵀ A⁻¹ b`.
    pub fn inv_quad(&self, b: &[f64]) -> f64 {
        let z = self.forward(b);
        z.iter().zip(&self.diag).map(|(zi, d)| zi * zi / d).sum()
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// `vectors` is row-major with eigenvectors stored as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: SquareMatrix,
}

impl SymEigen {
    pub fn new(a: &SquareMatrix) -> Self {
        let n = a.dim();
        let mut m = a.clone();
        let mut v = SquareMatrix::identity(n);
        let scale = m.max_abs();
        if scale == 0.0 || n == 1 {
            let values = (0..n).map(|i| m.get(i, i)).collect();
            return Self { values, vectors: v };
        }
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += m.get(i, j) * m.get(i, j);
                }
            }
            if libm::sqrt(off) <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m.get(p, q);
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m.get(p, p);
                    let aqq = m.get(q, q);
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = libm::copysign(1.0, theta)
                        / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                    let c = 1.0 / libm::sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..n {
                        let akp = m.get(k, p);
                        let akq = m.get(k, q);
                        m.set(k, p, c * akp - s * akq);
                        m.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = m.get(p, k);
                        let aqk = m.get(q, k);
                        m.set(p, k, c * apk - s * aqk);
                        m.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let values = (0..n).map(|i| m.get(i, i)).collect();
        Self { values, vectors: v }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn coefficient(&self, i: usize, b: &[f64]) -> f64 {
        (0..b.len()).map(|k| self.vectors.get(k, i) * b[k]).sum()
    }
}

/// Pseudo-inverse of the PSD part of a symmetric matrix: eigenvalues below
/// `tol · max|λ|` (including negative ones) are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdPseudoInverse {
    eigen: SymEigen,
    cutoff: f64,
}

impl PsdPseudoInverse {
    pub fn new(a: &SquareMatrix) -> Self {
        let eigen = SymEigen::new(a);
        let scale = eigen.values.iter().fold(0.0f64, |m, &x| m.max(libm::fabs(x)));
        Self {
            eigen,
            cutoff: 1e-12 * scale,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        for (i, &lam) in self.eigen.values.iter().enumerate() {
            if lam > self.cutoff {
                let c = self.eigen.coefficient(i, b) / lam;
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk += c * self.eigen.vectors.get(k, i);
                }
            }
        }
        x
    }

    pub fn inv_quad(&self, b: &[f64]) -> f64 {
        self.eigen
            .values
            .iter()
            .enumerate()
            .filter(|(_, &lam)| lam > self.cutoff)
            .map(|(i, &lam)| {
                let c = self.eigen.coefficient(i, b);
                c * c / lam
            })
            .sum()
    }

    /// Product of all eigenvalues (may be non-positive for indefinite input).
    pub fn determinant(&self) -> Determinant {
        let value: f64 = self.eigen.values.iter().product();
        let log = if value > 0.0 {
            self.eigen.values.iter().map(|&x| libm::log(libm::fabs(x))).sum()
        } else {
            f64::NEG_INFINITY
        };
        Determinant { value, log }
    }
}

/// Linear solver for a (nominally) positive definite Gram matrix. Falls back
/// to the PSD pseudo-inverse when the LDLᵀ factorization fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GramSolver {
    Ldlt(Ldlt),
    PseudoInverse(PsdPseudoInverse),
}

impl GramSolver {
    pub fn new(a: &SquareMatrix) -> Self {
        match Ldlt::factor(a) {
            Ok(f) => GramSolver::Ldlt(f),
            Err(_) => GramSolver::PseudoInverse(PsdPseudoInverse::new(a)),
        }
    }

    pub fn is_factorized(&self) -> bool {
        matches!(self, GramSolver::Ldlt(_))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            GramSolver::Ldlt(f) => f.solve(b),
            GramSolver::PseudoInverse(p) => p.solve(b),
        }
    }

    pub fn inv_quad(&self, b: &[f64]) -> f64 {
        match self {
            GramSolver::Ldlt(f) => f.inv_quad(b),
            GramSolver::PseudoInverse(p) => p.inv_quad(b),
        }
    }

    pub fn determinant(&self) -> Determinant {
        match self {
            GramSolver::Ldlt(f) => f.determinant(),
            GramSolver::PseudoInverse(p) => p.determinant(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> SquareMatrix {
        SquareMatrix::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]])
    }

    #[test]
    fn ldlt_solves_and_matches_determinant() {
        let a = spd3();
        let f = Ldlt::factor(&a).unwrap();
        let x = f.solve(&[1.0, 2.0, 3.0]);
        let back = a.mul_vec(&x);
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - e).abs() < 1e-12);
        }
        // cofactor expansion
        let det = 4.0 * (3.0 * 2.0 - 0.2 * 0.2) - 1.0 * (1.0 * 2.0 - 0.2 * 0.5)
            + 0.5 * (1.0 * 0.2 - 3.0 * 0.5);
        let d = f.determinant();
        assert!((d.value - det).abs() < 1e-12);
        assert!((d.log - libm::log(det)).abs() < 1e-12);
        let q = f.inv_quad(&[1.0, -1.0, 0.5]);
        let xq = f.solve(&[1.0, -1.0, 0.5]);
        assert!((q - dot(&[1.0, -1.0, 0.5], &xq)).abs() < 1e-12);
    }

    #[test]
    fn ldlt_rejects_indefinite() {
        let a = SquareMatrix::diagonal(&[1.0, -1.0]);
        assert_eq!(Ldlt::factor(&a), Err(NotPositiveDefinite { pivot: 1 }));
    }

    #[test]
    fn diagonal_solve_is_exact_division() {
        let a = SquareMatrix::diagonal(&[3.0, 7.0, 11.0]);
        let f = Ldlt::factor(&a).unwrap();
        assert_eq!(f.solve(&[1.0, 1.0, 1.0]), vec![1.0 / 3.0, 1.0 / 7.0, 1.0 / 11.0]);
        assert_eq!(f.inv_quad(&[0.0, 1.0, 0.0]), 1.0 / 7.0);
        assert_eq!(f.determinant().value, 231.0);
    }

    #[test]
    fn jacobi_recovers_spectrum() {
        let a = SquareMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let e = SymEigen::new(&a);
        let mut v = e.values.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
        assert!((a.sym_opnorm() - 3.0).abs() < 1e-14);
        let neg = SquareMatrix::from_rows(&[&[-5.0, 0.0], &[0.0, 1.0]]);
        assert!((neg.sym_opnorm() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn pseudo_inverse_drops_null_space() {
        let a = SquareMatrix::diagonal(&[2.0, 0.0]);
        let p = PsdPseudoInverse::new(&a);
        assert_eq!(p.solve(&[4.0, 9.0]), vec![2.0, 0.0]);
        assert!((p.inv_quad(&[1.0, 1.0]) - 0.5).abs() < 1e-15);
        let s = GramSolver::new(&a);
        assert!(!s.is_factorized());
    }

    #[test]
    fn determinant_threshold_prefers_exact_product() {
        let r = Determinant::of_scaled_identity(1, 2.0);
        let now = Determinant::of_scaled_identity(1, 4.0);
        assert!(now.at_least(2.0, &r));
        assert!(!r.at_least(2.0, &now));
        let huge = Determinant { value: f64::INFINITY, log: 900.0 };
        let base = Determinant { value: f64::INFINITY, log: 899.0 };
        assert!(huge.at_least(2.0, &base));
    }
}
