//! Small dense symmetric matrices: Cholesky solve and inverse, plus a Jacobi
//! eigendecomposition for pseudo-inverses and definiteness checks.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    order: usize,
    entries: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(order: usize) -> Self {
        SymMatrix {
            order,
            entries: vec![T::zero(); order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Row-major entries; rejects input that is not symmetric within 1e-12
    /// relative to the largest entry.
    pub fn from_row_major(order: usize, entries: Vec<T>) -> Result<Self> {
        if entries.len() != order * order {
            return Err(Error::InvalidConfig("entry count must be order²".into()));
        }
        let m = SymMatrix { order, entries };
        let scale = m.max_abs().max(T::one());
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) * scale;
        for i in 0..order {
            for j in 0..i {
                if (m.get(i, j) - m.get(j, i)).abs() > tol {
                    return Err(Error::InvalidConfig(format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.order + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.entries[i * self.order + j] = v;
    }

    /// Sets `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: T) {
        self.set(i, j, v);
        self.set(j, i, v);
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.order).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> T {
        self.entries.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.order)
            .map(|i| (0..self.order).fold(T::zero(), |acc, j| acc + self.get(i, j) * x[j]))
            .collect()
    }

    /// Plain matrix product; the result is symmetrized.
    pub fn mul(&self, other: &SymMatrix<T>) -> SymMatrix<T> {
        let n = self.order;
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v = (0..n).fold(T::zero(), |acc, k| acc + self.get(i, k) * other.get(k, j));
                out.set(i, j, v);
            }
        }
        out
    }

    /// Principal submatrix on `indices`.
    pub fn submatrix(&self, indices: &[usize]) -> SymMatrix<T> {
        let mut out = SymMatrix::zeros(indices.len());
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factor `L` with `m = L Lᵀ`, row-major.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    order: usize,
    lower: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Fails on the first pivot that is not safely positive.
    pub fn factor(m: &SymMatrix<T>) -> Result<Self> {
        let n = m.order();
        let mut l = vec![T::zero(); n * n];
        let scale = (0..n).fold(T::zero(), |acc, i| acc.max(m.get(i, i).abs()));
        let floor = scale * T::epsilon() * T::lit(64.0);
        for j in 0..n {
            let mut d = m.get(j, j);
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if !(d > floor) {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { order: n, lower: l })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.order;
        let l = &self.lower;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}

pub fn spd_solve<T: Real>(m: &SymMatrix<T>, rhs: &[T]) -> Result<Vec<T>> {
    Ok(Cholesky::factor(m)?.solve(rhs))
}

pub fn spd_invert<T: Real>(m: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let chol = Cholesky::factor(m)?;
    let n = m.order();
    let mut inv = SymMatrix::zeros(n);
    let mut unit = vec![T::zero(); n];
    for j in 0..n {
        unit[j] = T::one();
        let col = chol.solve(&unit);
        unit[j] = T::zero();
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
    }
    // Average the two triangles so the result is exactly symmetric.
    let half = T::lit(0.5);
    for i in 0..n {
        for j in 0..i {
            let v = (inv.get(i, j) + inv.get(j, i)) * half;
            inv.set_sym(i, j, v);
        }
    }
    Ok(inv)
}

/// Eigenvalues and column eigenvectors (row-major `n × n`) by cyclic Jacobi.
pub fn symmetric_eigen<T: Real>(m: &SymMatrix<T>) -> (Vec<T>, Vec<T>) {
    let n = m.order();
    let mut a = m.entries().to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(T::zero(), |acc, (i, j)| acc + a[i * n + j] * a[i * n + j]);
        let total: T = a.iter().fold(T::zero(), |acc, &x| acc + x * x);
        if off <= total * T::epsilon() * T::epsilon() || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Moore–Penrose inverse of a symmetric matrix, dropping eigenvalues below
/// `rel_tol` times the largest magnitude.
pub fn pseudo_inverse<T: Real>(m: &SymMatrix<T>, rel_tol: T) -> SymMatrix<T> {
    let n = m.order();
    let (vals, vecs) = symmetric_eigen(m);
    let top = vals.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    let cutoff = top * rel_tol;
    let mut out = SymMatrix::zeros(n);
    for (k, &lambda) in vals.iter().enumerate() {
        if lambda.abs() <= cutoff {
            continue;
        }
        let inv = T::one() / lambda;
        for i in 0..n {
            for j in 0..n {
                let v = out.get(i, j) + vecs[i * n + k] * vecs[j * n + k] * inv;
                out.set(i, j, v);
            }
        }
    }
    out
}
