//! Small dense complex linear algebra for the receiver kernels.
//!
//! Every matrix in the receive chain is a tiny Hermitian positive-definite
//! covariance (4x4 for code-domain despreading, 8x8 for the stacked
//! perfect-CSI equalizer), so a hand-rolled Cholesky factorization covers
//! all solve/quadratic-form needs without pulling in a linear-algebra stack.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    n: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat { n, data: vec![Complex64::ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n);
        for i in 0..n {
            m.set(i, i, Complex64::ONE);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    /// A += w * v * v^H (rank-1 Hermitian update with a real weight).
    pub fn accumulate_outer(&mut self, v: &[Complex64], w: f64) {
        assert_eq!(v.len(), self.n, "outer-product dimension mismatch");
        for i in 0..self.n {
            let vi = v[i];
            for j in 0..self.n {
                self.data[i * self.n + j] += vi * v[j].conj() * w;
            }
        }
    }

    /// A += s * I.
    pub fn add_scaled_identity(&mut self, s: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += s;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Real part of the trace (the trace of a Hermitian matrix is real).
    pub fn trace_real(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).re).sum()
    }

    /// Force exact Hermitian symmetry: keep the lower triangle, mirror its
    /// conjugate into the upper triangle, and zero imaginary diagonal parts.
    pub fn hermitize(&mut self) {
        for i in 0..self.n {
            let d = self.get(i, i);
            self.set(i, i, Complex64::new(d.re, 0.0));
            for j in 0..i {
                let lo = self.get(i, j);
                self.set(j, i, lo.conj());
            }
        }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        for i in 0..self.n {
            for j in 0..self.n {
                let d = self.get(i, j) - self.get(j, i).conj();
                if d.norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n, "matvec dimension mismatch");
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Cholesky factorization A = L * L^H for Hermitian positive-definite A.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.n;
        let mut l = vec![Complex64::ZERO; n * n];
        // Pivot floor relative to the matrix scale guards against semidefinite
        // or indefinite inputs producing garbage factors.
        let scale = self.trace_real().abs().max(1e-300) / n as f64;
        for j in 0..n {
            let mut d = self.get(j, j).re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > scale * 1e-14) {
                return Err(Error::Numerical(format!(
                    "cholesky pivot {j} not positive definite (value {d:.3e})"
                )));
            }
            let ljj = d.sqrt();
            l[j * n + j] = Complex64::new(ljj, 0.0);
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Cholesky { n, l })
    }
}

/// Lower-triangular Cholesky factor of a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<Complex64>, // row-major, lower triangle populated
}

impl Cholesky {
    /// Solve L y = b (forward substitution).
    pub fn forward(&self, b: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(b.len(), self.n, "forward-solve dimension mismatch");
        let n = self.n;
        let mut y = vec![Complex64::ZERO; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i].re;
        }
        y
    }

    /// Solve A x = b where A = L L^H.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x = self.forward(b);
        // Back substitution with L^H: (L^H)_{ij} = conj(l_{ji}).
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i].conj() * x[k];
            }
            x[i] = s / self.l[i * n + i].re;
        }
        x
    }

    /// c^H A^{-1} c = ||L^{-1} c||^2 — exactly real and non-negative.
    pub fn quad_form_inv(&self, c: &[Complex64]) -> f64 {
        self.forward(c).iter().map(|v| v.norm_sqr()).sum()
    }
}
