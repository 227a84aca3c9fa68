//! Dense matrices and a symmetric eigensolver.
//!
//! The solver is the classic pair of Householder tridiagonalization and
//! implicit-QL iteration with eigenvector accumulation (the EISPACK
//! `tred2`/`tql2` routines), adequate and deterministic for the graph
//! sizes this crate targets (n up to a few hundred).

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::float;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("QL iteration failed to converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.at(r, c));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    let v = out.at(r, c) + a * other.at(k, c);
                    out.set(r, c, v);
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

/// Eigendecomposition of a symmetric matrix: `A = V diag(values) Vᵀ`,
/// eigenvalues ascending, eigenvectors the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    /// Column `k` of the eigenvector matrix.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.vectors.rows()).map(|r| self.vectors.at(r, k)).collect()
    }
}

const MAX_QL_SWEEPS: usize = 60;

/// Eigendecomposition of a symmetric matrix.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let sym_tol = 1e-10 * matrix_abs_max(a).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if float::abs(a.at(i, j) - a.at(j, i)) > sym_tol {
                return Err(LinalgError::NotSymmetric { i, j });
            }
        }
    }
    if n == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }

    let mut v = a.clone();
    // Force exact symmetry so the tridiagonalization sees one value per pair.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (v.at(i, j) + v.at(j, i));
            v.set(i, j, m);
            v.set(j, i, m);
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    Ok(SymEigen {
        values: d,
        vectors: v,
    })
}

fn matrix_abs_max(a: &Matrix) -> f64 {
    let mut m = 0.0;
    for &x in &a.data {
        let ax = float::abs(x);
        if ax > m {
            m = ax;
        }
    }
    m
}

/// Householder reduction to tridiagonal form with accumulation (tred2).
fn tred2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v.at(n - 1, j);
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += float::abs(*item);
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v.at(i - 1, j);
                v.set(i, j, 0.0);
                v.set(j, i, 0.0);
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = float::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v.set(j, i, f);
                g = e[j] + v.at(j, j) * f;
                for k in (j + 1)..i {
                    g += v.at(k, j) * d[k];
                    e[k] += v.at(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let val = v.at(k, j) - (f * e[k] + g * d[k]);
                    v.set(k, j, val);
                }
                d[j] = v.at(i - 1, j);
                v.set(i, j, 0.0);
            }
        }
        d[i] = h;
    }

    // Accumulate the Householder transformations.
    for i in 0..(n - 1) {
        let diag = v.at(i, i);
        v.set(n - 1, i, diag);
        v.set(i, i, 1.0);
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v.at(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v.at(k, i + 1) * v.at(k, j);
                }
                for k in 0..=i {
                    let val = v.at(k, j) - g * d[k];
                    v.set(k, j, val);
                }
            }
        }
        for k in 0..=i {
            v.set(k, i + 1, 0.0);
        }
    }
    for j in 0..n {
        d[j] = v.at(n - 1, j);
        v.set(n - 1, j, 0.0);
    }
    v.set(n - 1, n - 1, 1.0);
    e[0] = 0.0;
}

/// Implicit QL iteration with eigenvector accumulation (tql2), followed
/// by an ascending sort of the eigenpairs.
fn tql2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON; // 2^-52
    for l in 0..n {
        tst1 = tst1.max(float::abs(d[l]) + float::abs(e[l]));
        let mut m = l;
        while m < n {
            if float::abs(e[m]) <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_SWEEPS {
                    return Err(LinalgError::NoConvergence {
                        iterations: MAX_QL_SWEEPS,
                    });
                }

                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = float::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g2 = c * e[i];
                    h = c * p;
                    r = float::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g2;
                    d[i + 1] = h + s * (c * g2 + s * d[i]);

                    for k in 0..n {
                        h = v.at(k, i + 1);
                        v.set(k, i + 1, s * v.at(k, i) + c * h);
                        v.set(k, i, c * v.at(k, i) - s * h);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if float::abs(e[l]) <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // Ascending selection sort carrying eigenvector columns along.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in (i + 1)..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for j in 0..n {
                let tmp = v.at(j, i);
                v.set(j, i, v.at(j, k));
                v.set(j, k, tmp);
            }
        }
    }
    Ok(())
}

/// Induced 2-norm of a (not necessarily symmetric) matrix: the largest
/// singular value, computed as `sqrt(λ_max(AᵀA))`.
pub fn induced_norm2(a: &Matrix) -> Result<f64, LinalgError> {
    let gram = a.transpose().matmul(a);
    let eig = sym_eigen(&gram)?;
    let lam = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    Ok(float::sqrt(lam))
}

/// Unit vector `v` maximizing `‖Av‖ / ‖v‖` (top right-singular direction).
pub fn top_singular_direction(a: &Matrix) -> Result<Vec<f64>, LinalgError> {
    let gram = a.transpose().matmul(a);
    let eig = sym_eigen(&gram)?;
    let k = eig.values.len().saturating_sub(1);
    Ok(eig.vector(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x = rng.next_f64() * 2.0 - 1.0;
                m.set(i, j, x);
                m.set(j, i, x);
            }
        }
        m
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[1,-1],[-1,1]] has spectrum {0, 2}.
        let m = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let eig = sym_eigen(&m).unwrap();
        assert!((eig.values[0] - 0.0).abs() < 1e-12);
        assert!((eig.values[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_random_matrices() {
        for seed in 0..5 {
            let n = 8;
            let a = random_symmetric(n, seed);
            let eig = sym_eigen(&a).unwrap();
            // A v_k = λ_k v_k
            for k in 0..n {
                let v = eig.vector(k);
                let av = a.matvec(&v);
                for i in 0..n {
                    assert!(
                        (av[i] - eig.values[k] * v[i]).abs() < 1e-9,
                        "residual at seed {seed}, pair {k}"
                    );
                }
            }
            // Vᵀ V = I
            for p in 0..n {
                for q in 0..n {
                    let dot: f64 = (0..n)
                        .map(|r| eig.vectors.at(r, p) * eig.vectors.at(r, q))
                        .sum();
                    let want = if p == q { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
            // eigenvalues ascending
            for w in eig.values.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
        }
    }

    #[test]
    fn trace_equals_eigenvalue_sum() {
        let a = random_symmetric(12, 77);
        let eig = sym_eigen(&a).unwrap();
        let trace: f64 = (0..12).map(|i| a.at(i, i)).sum();
        let sum: f64 = eig.values.iter().sum();
        assert!((trace - sum).abs() < 1e-9);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(
            sym_eigen(&m),
            Err(LinalgError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn induced_norm_of_diagonal() {
        let m = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, -3.0]]);
        assert!((induced_norm2(&m).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn induced_norm_matches_power_iteration_oracle() {
        // Oracle: straight power iteration on AᵀA, written independently.
        for seed in 0..10 {
            let mut rng = Rng::new(1000 + seed);
            let n = 5;
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    a.set(i, j, rng.next_f64() * 2.0 - 1.0);
                }
            }
            let gram = a.transpose().matmul(&a);
            let mut v = vec![1.0; n];
            for _ in 0..3000 {
                let w = gram.matvec(&v);
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                v = w.into_iter().map(|x| x / norm).collect();
            }
            let rayleigh: f64 = {
                let gv = gram.matvec(&v);
                v.iter().zip(&gv).map(|(a, b)| a * b).sum()
            };
            let oracle = rayleigh.max(0.0).sqrt();
            let got = induced_norm2(&a).unwrap();
            assert!((got - oracle).abs() < 1e-8, "seed {seed}: {got} vs {oracle}");
        }
    }
}
