//! Small dense matrices and the factorizations the solver needs.
//!
//! Systems here are tiny (order `2n+1` for networks with a few dozen
//! breakpoints), so everything is plain row-major storage with direct
//! O(n^3) factorizations: Cholesky for SPD solves, Bunch-Parlett
//! symmetric-indefinite LDL^T for the breakpoint block, partially
//! pivoted LU for general square systems, and a cyclic Jacobi
//! eigensolver for the certificates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{cast, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch")]
    DimensionMismatch,
    #[error("factorization pivot {index} below tolerance")]
    PivotFailure { index: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).fold(T::zero(), |acc, j| acc + self[(i, j)] * v[j]))
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Self, s: T) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + s * b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in self.data.iter_mut() {
            *a = *a * s;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, -T::one());
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    /// Largest absolute deviation from symmetry.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetrized(&self) -> Self {
        let half = cast::<T>(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)]) * half)
    }

    /// Principal submatrix keeping the given (ascending) row/column indices.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), idx.len(), |i, j| self[(idx[i], idx[j])])
    }

    /// Assembles `[[a, b], [b^T, c]]` from blocks; `b` may be rectangular.
    pub fn block_symmetric(a: &Self, b: &Self, c: &Self) -> Self {
        assert_eq!(a.rows(), a.cols());
        assert_eq!(c.rows(), c.cols());
        assert_eq!((b.rows(), b.cols()), (a.rows(), c.rows()));
        let n = a.rows() + c.rows();
        let m = a.rows();
        Self::from_fn(n, n, |i, j| match (i < m, j < m) {
            (true, true) => a[(i, j)],
            (true, false) => b[(i, j - m)],
            (false, true) => b[(j, i - m)],
            (false, false) => c[(i - m, j - m)],
        })
    }

    /// Block lower-triangular `[[a, 0], [l, c]]`.
    pub fn block_lower(a: &Self, l: &Self, c: &Self) -> Self {
        assert_eq!((l.rows(), l.cols()), (c.rows(), a.cols()));
        let n = a.rows() + c.rows();
        let m = a.rows();
        Self::from_fn(n, n, |i, j| match (i < m, j < m) {
            (true, true) => a[(i, j)],
            (true, false) => T::zero(),
            (false, true) => l[(i - m, j)],
            (false, false) => c[(i - m, j - m)],
        })
    }

    pub fn row_major_data(&self) -> &[T] {
        &self.data
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Lower Cholesky factor of an SPD matrix.
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors `m = L L^T`, failing when a pivot drops to `pivot_floor` or below.
    pub fn new(m: &Matrix<T>, pivot_floor: T) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
        }
        let n = m.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > pivot_floor) {
                return Err(LinalgError::PivotFailure { index: j });
            }
            let dj = d.sqrt();
            l[(j, j)] = dj;
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / dj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let y = self.solve_lower(rhs);
        self.solve_upper(&y)
    }

    /// Solves `L y = rhs`.
    pub fn solve_lower(&self, rhs: &[T]) -> Vec<T> {
        let n = self.l.rows();
        assert_eq!(rhs.len(), n);
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut s = rhs[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `L^T x = rhs`.
    pub fn solve_upper(&self, rhs: &[T]) -> Vec<T> {
        let n = self.l.rows();
        assert_eq!(rhs.len(), n);
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in i + 1..n {
                s = s - self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.l
    }
}

enum Pivot<T> {
    Single(T),
    /// 2x2 block [[a, b], [b, c]].
    Double(T, T, T),
}

/// Bunch-Parlett LDL^T factorization of a symmetric (possibly indefinite) matrix.
pub struct Ldlt<T> {
    work: Matrix<T>,
    perm: Vec<usize>,
    pivots: Vec<(usize, Pivot<T>)>,
}

impl<T: Scalar> Ldlt<T> {
    pub fn new(m: &Matrix<T>, singular_tol: T) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
        }
        let n = m.rows();
        let mut a = m.symmetrized();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::new();
        // Complete-pivoting threshold from Bunch-Parlett.
        let alpha = cast::<T>((1.0 + 17.0f64.sqrt()) / 8.0);

        let mut k = 0;
        while k < n {
            let mut mu0 = T::zero();
            let mut p0 = k;
            for i in k..n {
                if a[(i, i)].abs() > mu0 {
                    mu0 = a[(i, i)].abs();
                    p0 = i;
                }
            }
            let mut mu1 = T::zero();
            let (mut p1, mut q1) = (k, k);
            for i in k..n {
                for j in k..i {
                    if a[(i, j)].abs() > mu1 {
                        mu1 = a[(i, j)].abs();
                        p1 = i;
                        q1 = j;
                    }
                }
            }
            if mu0.max(mu1) <= singular_tol {
                return Err(LinalgError::PivotFailure { index: k });
            }
            if mu0 >= alpha * mu1 {
                swap_sym(&mut a, &mut perm, k, p0);
                let d = a[(k, k)];
                if d.abs() <= singular_tol {
                    return Err(LinalgError::PivotFailure { index: k });
                }
                let col: Vec<T> = (k + 1..n).map(|i| a[(i, k)]).collect();
                for i in k + 1..n {
                    for j in k + 1..=i {
                        let upd = a[(i, j)] - col[i - k - 1] * col[j - k - 1] / d;
                        a[(i, j)] = upd;
                        a[(j, i)] = upd;
                    }
                }
                for i in k + 1..n {
                    a[(i, k)] = col[i - k - 1] / d;
                }
                pivots.push((k, Pivot::Single(d)));
                k += 1;
            } else {
                swap_sym(&mut a, &mut perm, k, q1);
                let p1 = if p1 == k { q1 } else { p1 };
                swap_sym(&mut a, &mut perm, k + 1, p1);
                let (e11, e21, e22) = (a[(k, k)], a[(k + 1, k)], a[(k + 1, k + 1)]);
                let det = e11 * e22 - e21 * e21;
                if det.abs() <= singular_tol * singular_tol {
                    return Err(LinalgError::PivotFailure { index: k });
                }
                let w1: Vec<T> = (k + 2..n).map(|i| a[(i, k)]).collect();
                let w2: Vec<T> = (k + 2..n).map(|i| a[(i, k + 1)]).collect();
                let mut l1 = vec![T::zero(); w1.len()];
                let mut l2 = vec![T::zero(); w1.len()];
                for t in 0..w1.len() {
                    l1[t] = (e22 * w1[t] - e21 * w2[t]) / det;
                    l2[t] = (e11 * w2[t] - e21 * w1[t]) / det;
                }
                for i in k + 2..n {
                    for j in k + 2..=i {
                        let ti = i - k - 2;
                        let tj = j - k - 2;
                        let upd = a[(i, j)] - l1[ti] * w1[tj] - l2[ti] * w2[tj];
                        a[(i, j)] = upd;
                        a[(j, i)] = upd;
                    }
                }
                for i in k + 2..n {
                    a[(i, k)] = l1[i - k - 2];
                    a[(i, k + 1)] = l2[i - k - 2];
                }
                pivots.push((k, Pivot::Double(e11, e21, e22)));
                k += 2;
            }
        }
        Ok(Self { work: a, perm, pivots })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.work.rows();
        assert_eq!(rhs.len(), n);
        // z solves L z = P rhs (L unit lower with block-column structure).
        let mut z: Vec<T> = self.perm.iter().map(|&p| rhs[p]).collect();
        for (k, piv) in &self.pivots {
            let width = match piv {
                Pivot::Single(_) => 1,
                Pivot::Double(..) => 2,
            };
            for i in k + width..n {
                let mut s = z[i];
                for j in *k..k + width {
                    s = s - self.work[(i, j)] * z[j];
                }
                z[i] = s;
            }
        }
        // w solves D w = z, blockwise.
        for (k, piv) in &self.pivots {
            match piv {
                Pivot::Single(d) => z[*k] = z[*k] / *d,
                Pivot::Double(a, b, c) => {
                    let det = *a * *c - *b * *b;
                    let (z1, z2) = (z[*k], z[*k + 1]);
                    z[*k] = (*c * z1 - *b * z2) / det;
                    z[*k + 1] = (*a * z2 - *b * z1) / det;
                }
            }
        }
        // v solves L^T v = w.
        for (k, piv) in self.pivots.iter().rev() {
            let width = match piv {
                Pivot::Single(_) => 1,
                Pivot::Double(..) => 2,
            };
            for j in *k..k + width {
                let mut s = z[j];
                for i in k + width..n {
                    s = s - self.work[(i, j)] * z[i];
                }
                z[j] = s;
            }
        }
        let mut x = vec![T::zero(); n];
        for (pos, &orig) in self.perm.iter().enumerate() {
            x[orig] = z[pos];
        }
        x
    }
}

fn swap_sym<T: Scalar>(a: &mut Matrix<T>, perm: &mut [usize], i: usize, j: usize) {
    if i == j {
        return;
    }
    let n = a.rows();
    for k in 0..n {
        let t = a[(i, k)];
        a[(i, k)] = a[(j, k)];
        a[(j, k)] = t;
    }
    for k in 0..n {
        let t = a[(k, i)];
        a[(k, i)] = a[(k, j)];
        a[(k, j)] = t;
    }
    perm.swap(i, j);
}

/// LU factorization with partial pivoting for general square systems.
pub struct Lu<T> {
    work: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn new(m: &Matrix<T>, singular_tol: T) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
        }
        let n = m.rows();
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                if a[(i, k)].abs() > best {
                    best = a[(i, k)].abs();
                    p = i;
                }
            }
            if best <= singular_tol {
                return Err(LinalgError::PivotFailure { index: k });
            }
            if p != k {
                for j in 0..n {
                    let t = a[(k, j)];
                    a[(k, j)] = a[(p, j)];
                    a[(p, j)] = t;
                }
                perm.swap(k, p);
            }
            let d = a[(k, k)];
            for i in k + 1..n {
                let l = a[(i, k)] / d;
                a[(i, k)] = l;
                for j in k + 1..n {
                    a[(i, j)] = a[(i, j)] - l * a[(k, j)];
                }
            }
        }
        Ok(Self { work: a, perm })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.work.rows();
        assert_eq!(rhs.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let lik = self.work[(i, k)];
                y[i] = y[i] - lik * y[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let uik = self.work[(i, k)];
                y[i] = y[i] - uik * y[k];
            }
            y[i] = y[i] / self.work[(i, i)];
        }
        y
    }

    pub fn solve_matrix(&self, rhs: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(rhs.rows(), rhs.cols());
        for j in 0..rhs.cols() {
            let col: Vec<T> = (0..rhs.rows()).map(|i| rhs[(i, j)]).collect();
            let x = self.solve(&col);
            for i in 0..rhs.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in the columns,
/// sorted ascending by eigenvalue.
pub fn jacobi_eigen<T: Scalar>(m: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    assert!(m.is_square());
    let n = m.rows();
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    if n <= 1 {
        return ((0..n).map(|i| a[(i, i)]).collect(), v);
    }
    let eps = T::epsilon();
    let scale = a.max_abs().max(T::min_positive_value());
    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..i {
                off = off.max(a[(i, j)].abs());
            }
        }
        if off <= eps * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= eps * scale * cast(1e-3) {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (cast::<T>(2.0) * apq);
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let vals: Vec<T> = order.iter().map(|&i| a[(i, i)]).collect();
    let vecs = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (vals, vecs)
}

/// `sqrt(v^T A v)` for SPD `A`.
pub fn a_norm<T: Scalar>(a: &Matrix<T>, v: &[T]) -> T {
    let av = a.matvec(v);
    crate::scalar::dot(v, &av).max(T::zero()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix<f64> {
        let m = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut spd = m.transpose().matmul(&m);
        for i in 0..n {
            spd[(i, i)] += 0.5;
        }
        spd
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..10 {
            let a = random_spd(&mut rng, n);
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let rhs = a.matvec(&x_true);
            let x = Cholesky::new(&a, 0.0).unwrap().solve(&rhs);
            for (xa, xb) in x.iter().zip(&x_true) {
                assert_relative_eq!(xa, xb, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1e-6]]);
        assert!(matches!(Cholesky::new(&m, 0.0), Err(LinalgError::PivotFailure { index: 1 })));
    }

    #[test]
    fn ldlt_solves_indefinite_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..12 {
            let m = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let a = m.symmetrized();
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let rhs = a.matvec(&x_true);
            match Ldlt::new(&a, 1e-13 * a.max_abs()) {
                Ok(f) => {
                    let x = f.solve(&rhs);
                    for (xa, xb) in x.iter().zip(&x_true) {
                        assert_relative_eq!(xa, xb, max_relative = 1e-7);
                    }
                }
                Err(_) => panic!("random symmetric matrix should factor"),
            }
        }
    }

    #[test]
    fn ldlt_detects_singularity() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(Ldlt::new(&a, 1e-12).is_err());
    }

    #[test]
    fn lu_solves_general_system() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0, 2.0], vec![3.0, -1.0, 0.5], vec![1.0, 1.0, 1.0]]);
        let rhs = a.matvec(&[1.0, -2.0, 3.0]);
        let x = Lu::new(&a, 1e-14).unwrap().solve(&rhs);
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(x[1], -2.0, max_relative = 1e-12);
        assert_relative_eq!(x[2], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (vals, vecs) = jacobi_eigen(&a);
        assert_relative_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 3.0, epsilon = 1e-12);
        // Residual check A v = lambda v.
        for j in 0..2 {
            let v: Vec<f64> = (0..2).map(|i| vecs[(i, j)]).collect();
            let av = a.matvec(&v);
            for i in 0..2 {
                assert_relative_eq!(av[i], vals[j] * v[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_matches_cholesky_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..9 {
            let a = random_spd(&mut rng, n);
            let (vals, _) = jacobi_eigen(&a);
            assert!(vals[0] > 0.0, "SPD matrix must have positive eigenvalues");
            assert!(Cholesky::new(&a, 0.0).is_ok());
        }
    }
}
