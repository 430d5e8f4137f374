//! Dense complex matrices and the two factorizations the toolkit relies on:
//! a Jacobi eigensolver for Hermitian matrices and a column-pivoted
//! Householder QR for real least squares.
//!
//! Matrices here are small (tens of levels), so everything is stored densely
//! in row-major order and the algorithms favour accuracy over speed.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has the wrong length");
        Self { rows, cols, data }
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `w† A w`.
    pub fn quadratic_form(&self, w: &[C64]) -> C64 {
        assert!(self.is_square() && w.len() == self.rows);
        let mut acc = ZERO;
        for i in 0..self.rows {
            let mut row_acc = ZERO;
            for (j, &wj) in w.iter().enumerate() {
                row_acc += self.data[i * self.cols + j] * wj;
            }
            acc += w[i].conj() * row_acc;
        }
        acc
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest `|A_ij − conj(A_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(A + A†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        let mut out = self.clone();
        out.hermitize();
        out
    }

    pub(crate) fn hermitize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            let d = self.data[i * n + i];
            self.data[i * n + i] = C64::new(d.re, 0.0);
            for j in i + 1..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }

    /// Top-left `rows × cols` block.
    pub fn block(&self, rows: usize, cols: usize) -> Self {
        assert!(rows <= self.rows && cols <= self.cols);
        Self::from_fn(rows, cols, |i, j| self[(i, j)])
    }

    /// Zero-pads a square matrix to `n × n`.
    pub fn embed(&self, n: usize) -> Self {
        assert!(n >= self.rows && n >= self.cols);
        let mut out = Self::zeros(n, n);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues ascend and
/// `vectors` holds the matching eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// `V diag(f(λ)) V†`.
    pub fn reassemble(&self, mut f: impl FnMut(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let weights: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = CMatrix::from_fn(n, n, |i, j| {
            let mut acc = ZERO;
            for (k, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    acc += self.vectors[(i, k)] * self.vectors[(j, k)].conj() * w;
                }
            }
            acc
        });
        out.hermitize();
        out
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        (0..self.vectors.rows()).map(|i| self.vectors[(i, k)]).collect()
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver. Only the Hermitian part of `m` is used.
pub fn eigh(m: &CMatrix) -> HermitianEigen {
    assert!(m.is_square(), "eigh needs a square matrix");
    let n = m.rows();
    let mut a = m.hermitian_part();
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius_norm();

    if scale > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)].norm_sqr();
                }
            }
            if off.sqrt() <= 1e-16 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    rotate(&mut a, &mut v, p, q, scale);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    HermitianEigen {
        values: order.iter().map(|&k| a[(k, k)].re).collect(),
        vectors: CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]),
    }
}

// One Jacobi rotation annihilating a[p][q]. The phase of a[p][q] is folded
// into the rotation so the 2x2 problem becomes real symmetric.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize, scale: f64) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag <= f64::MIN_POSITIVE * scale {
        return;
    }
    let phase = apq / mag;
    let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let jpp = C64::new(c, 0.0);
    let jpq = C64::new(s, 0.0);
    let jqp = -phase.conj() * s;
    let jqq = phase.conj() * c;

    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * jpp + akq * jqp;
        a[(k, q)] = akp * jpq + akq * jqq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
        a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * jpp + vkq * jqp;
        v[(k, q)] = vkp * jpq + vkq * jqq;
    }
}

/// Real dense matrix stored column by column, which is the access pattern of
/// Householder QR.
#[derive(Clone, Debug)]
pub struct ColumnMatrix {
    rows: usize,
    columns: Vec<Vec<f64>>,
}

impl ColumnMatrix {
    pub fn from_columns(rows: usize, columns: Vec<Vec<f64>>) -> Self {
        assert!(columns.iter().all(|c| c.len() == rows));
        Self { rows, columns }
    }

    /// Builds from row-major data with `cols` columns.
    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols);
        let columns = (0..cols)
            .map(|j| (0..rows).map(|i| data[i * cols + j]).collect())
            .collect();
        Self { rows, columns }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (col, &xj) in self.columns.iter().zip(x) {
            for (o, &c) in out.iter_mut().zip(col) {
                *o += c * xj;
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub x: Vec<f64>,
    pub rank: usize,
    /// Columns left undetermined by a rank-deficient system, in pivot order.
    pub deficient: Vec<usize>,
    pub residual_norm: f64,
}

/// Minimizes `‖A x − b‖₂` by Householder QR with column pivoting.
///
/// Columns whose pivot falls below `rcond · |R₀₀|` are treated as dependent;
/// their coefficients are set to zero and reported in `deficient`.
pub fn lstsq(a: &ColumnMatrix, b: &[f64], rcond: f64) -> LeastSquares {
    assert_eq!(a.rows, b.len(), "lstsq: rhs length mismatch");
    let m = a.rows;
    let n = a.cols();
    let mut cols = a.columns.clone();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag = vec![0.0; n.min(m)];
    let mut rank = 0;

    for k in 0..n.min(m) {
        let mut best = k;
        let mut best_norm = -1.0;
        for (j, col) in cols.iter().enumerate().skip(k) {
            let s: f64 = col[k..].iter().map(|x| x * x).sum();
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        cols.swap(k, best);
        perm.swap(k, best);

        let norm = best_norm.sqrt();
        if k > 0 && norm <= rcond * diag[0].abs() || norm == 0.0 {
            break;
        }
        let x0 = cols[k][k];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            let reflect = |target: &mut [f64]| {
                let dot: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
                let f = 2.0 * dot / vnorm2;
                for (t, &vi) in target.iter_mut().zip(&v) {
                    *t -= f * vi;
                }
            };
            for col in cols.iter_mut().skip(k + 1) {
                reflect(&mut col[k..]);
            }
            reflect(&mut rhs[k..]);
        }
        cols[k][k] = alpha;
        for x in cols[k][k + 1..].iter_mut() {
            *x = 0.0;
        }
        diag[k] = alpha;
        rank = k + 1;
    }

    let mut z = vec![0.0; n];
    for k in (0..rank).rev() {
        let mut acc = rhs[k];
        for j in k + 1..rank {
            acc -= cols[j][k] * z[j];
        }
        z[k] = acc / cols[k][k];
    }
    let mut x = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = z[k];
    }
    let fitted = a.mul_vec(&x);
    let residual_norm = fitted.iter().zip(b).map(|(f, y)| (f - y) * (f - y)).sum::<f64>().sqrt();
    LeastSquares {
        x,
        rank,
        deficient: perm[rank..].to_vec(),
        residual_norm,
    }
}

/// Solves a small dense system by Gaussian elimination with partial
/// pivoting. `a` is row-major `n × n`. Returns `None` when singular.
pub(crate) fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    for k in 0..n {
        let pivot = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))?;
        if a[pivot * n + k] == 0.0 || !a[pivot * n + k].is_finite() {
            return None;
        }
        if pivot != k {
            for j in 0..n {
                a.swap(k * n + j, pivot * n + j);
            }
            b.swap(k, pivot);
        }
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            for j in k..n {
                a[i * n + j] -= f * a[k * n + j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc -= a[k * n + j] * x[j];
        }
        x[k] = acc / a[k * n + k];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = CMatrix::from_fn(n, n, |_, _| C64::new(next(), next()));
        m.hermitian_part()
    }

    #[test]
    fn eigh_reassembles_input() {
        for (n, seed) in [(1, 1), (2, 2), (7, 3), (25, 4)] {
            let h = random_hermitian(n, seed);
            let e = eigh(&h);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            let back = e.reassemble(|l| l);
            assert!(back.max_abs_diff(&h) < 1e-12, "n={n}");
            let vv = &e.vectors.adjoint() * &e.vectors;
            assert!(vv.max_abs_diff(&CMatrix::identity(n)) < 1e-12);
        }
    }

    #[test]
    fn eigh_of_diagonal_is_sorted_diagonal() {
        let d = CMatrix::from_diag(&[C64::new(3.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.5, 0.0)]);
        let e = eigh(&d);
        assert_eq!(e.values, vec![-1.0, 0.5, 3.0]);
    }

    #[test]
    fn eigh_handles_purely_imaginary_coupling() {
        // [[0, -i], [i, 0]] is σ_y with eigenvalues ±1.
        let m = CMatrix::from_row_major(2, 2, vec![ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO]);
        let e = eigh(&m);
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        assert!((e.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        // 6 x 3 system with a known solution.
        let x_true = [1.5, -2.0, 0.25];
        let rows: Vec<f64> = (0..6)
            .flat_map(|i| {
                let t = i as f64;
                [1.0, t, t * t]
            })
            .collect();
        let a = ColumnMatrix::from_rows(6, 3, &rows);
        let b = a.mul_vec(&x_true);
        let sol = lstsq(&a, &b, 1e-12);
        assert_eq!(sol.rank, 3);
        for (x, t) in sol.x.iter().zip(x_true) {
            assert!((x - t).abs() < 1e-12);
        }
        assert!(sol.residual_norm < 1e-12);
    }

    #[test]
    fn lstsq_reports_dependent_column() {
        // third column = first + second
        let rows: Vec<f64> = (0..5)
            .flat_map(|i| {
                let t = i as f64;
                [1.0, t, 1.0 + t]
            })
            .collect();
        let a = ColumnMatrix::from_rows(5, 3, &rows);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let sol = lstsq(&a, &b, 1e-10);
        assert_eq!(sol.rank, 2);
        assert_eq!(sol.deficient.len(), 1);
        assert!(sol.residual_norm < 1e-10);
    }

    #[test]
    fn solve_dense_small_system() {
        let x = solve_dense(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
        assert!(solve_dense(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0]).is_none());
    }
}
