//! Discretized `L²(μ)` function space and federated-function algebra.
//!
//! Functions are represented exactly by their values on a finite sample
//! grid carrying atomic probability measures, so every integral is a
//! weighted sum and every identity below is checkable to machine
//! precision. A federated function stacks one grid function per device;
//! matrices act on the stack exactly as they act on numerical vectors,
//! and the induced 2-norm carries over unchanged, which is what lets the
//! consensus analysis run inside this space.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::float;
use crate::linalg::{self, Matrix};
use crate::sum::Accumulator;

/// Weight vectors must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuncSpaceError {
    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("weight vector length {got} does not match grid size {want}")]
    WeightLength { got: usize, want: usize },
    #[error("device counts differ: {left} vs {right}")]
    ArityMismatch { left: usize, right: usize },
    #[error("matrix is {rows}x{cols} but the federated function has {parts} parts")]
    MatrixArity {
        rows: usize,
        cols: usize,
        parts: usize,
    },
    #[error("weights must be nonnegative (index {index}: {value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("device {device} puts mass on grid point {point} where the global measure is zero")]
    AbsoluteContinuity { device: usize, point: usize },
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("grid point {index} has dimension {got}, expected {want}")]
    PointDimension {
        index: usize,
        got: usize,
        want: usize,
    },
    #[error("empty grid")]
    EmptyGrid,
    #[error("eigensolver failure: {0}")]
    Linalg(#[from] linalg::LinalgError),
}

/// Shared sample grid: `S` points in `R^N`, outputs in `R^M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    points: Vec<f64>,
    len: usize,
    dim_in: usize,
    dim_out: usize,
}

impl SampleGrid {
    pub fn new(points: &[Vec<f64>], dim_out: usize) -> Result<Self, FuncSpaceError> {
        if points.is_empty() {
            return Err(FuncSpaceError::EmptyGrid);
        }
        let dim_in = points[0].len();
        let mut flat = Vec::with_capacity(points.len() * dim_in);
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim_in {
                return Err(FuncSpaceError::PointDimension {
                    index,
                    got: p.len(),
                    want: dim_in,
                });
            }
            flat.extend_from_slice(p);
        }
        Ok(Self {
            points: flat,
            len: points.len(),
            dim_in,
            dim_out,
        })
    }

    /// Evenly spaced scalar grid on `[0, 1]`.
    pub fn uniform_1d(len: usize, dim_out: usize) -> Result<Self, FuncSpaceError> {
        if len == 0 {
            return Err(FuncSpaceError::EmptyGrid);
        }
        let denom = (len - 1).max(1) as f64;
        let points: Vec<Vec<f64>> = (0..len).map(|s| vec![s as f64 / denom]).collect();
        Self::new(&points, dim_out)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn point(&self, s: usize) -> &[f64] {
        &self.points[s * self.dim_in..(s + 1) * self.dim_in]
    }
}

/// A function sampled on a grid: row `s` holds `f(x_s) ∈ R^M`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FunctionGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, FuncSpaceError> {
        if values.len() != rows * cols {
            return Err(FuncSpaceError::ShapeMismatch {
                left_rows: rows,
                left_cols: cols,
                right_rows: values.len() / cols.max(1),
                right_cols: cols,
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_fn(grid: &SampleGrid, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut out = Self::zeros(grid.len(), grid.dim_out());
        for s in 0..grid.len() {
            let (rows, cols) = (out.rows, out.cols);
            let _ = rows;
            f(grid.point(s), &mut out.values[s * cols..(s + 1) * cols]);
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.cols..(s + 1) * self.cols]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.values[s * self.cols..(s + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert!(self.same_shape(other));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert!(self.same_shape(other));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// `self += a·x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert!(self.same_shape(x));
        for (v, xv) in self.values.iter_mut().zip(&x.values) {
            *v += a * xv;
        }
    }

    /// Row `s` scaled by `factors[s]` (pointwise multiplication by a
    /// scalar function on the grid, e.g. a density ratio `ν`).
    pub fn scale_rows(&self, factors: &[f64]) -> Self {
        debug_assert_eq!(factors.len(), self.rows);
        let mut out = self.clone();
        for s in 0..self.rows {
            let f = factors[s];
            for v in out.row_mut(s) {
                *v *= f;
            }
        }
        out
    }
}

fn check_weights(weights: &[f64], grid_len: usize) -> Result<(), FuncSpaceError> {
    if weights.len() != grid_len {
        return Err(FuncSpaceError::WeightLength {
            got: weights.len(),
            want: grid_len,
        });
    }
    let mut acc = Accumulator::new();
    for (index, &w) in weights.iter().enumerate() {
        if w < 0.0 || !w.is_finite() {
            return Err(FuncSpaceError::NegativeWeight { index, value: w });
        }
        acc.add(w);
    }
    let sum = acc.value();
    if float::abs(sum - 1.0) > WEIGHT_SUM_TOL {
        return Err(FuncSpaceError::WeightSum { sum });
    }
    Ok(())
}

/// Global measure `μ`, per-device measures `μ_i`, the pointwise density
/// ratios `ν_i = dμ_i/dμ`, and their suprema `S_i` (the non-IIDness of
/// each device; 1 exactly when `μ_i = μ`).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSet {
    global: Vec<f64>,
    local: Vec<Vec<f64>>,
    nu: Vec<Vec<f64>>,
    s_sup: Vec<f64>,
}

impl MeasureSet {
    /// Builds from per-device weights with `μ = (1/n) Σ μ_i`.
    pub fn from_locals(local: Vec<Vec<f64>>) -> Result<Self, FuncSpaceError> {
        let n = local.len();
        let s = local.first().map_or(0, Vec::len);
        let mut global = vec![0.0; s];
        for w in &local {
            check_weights(w, s)?;
            for (g, &v) in global.iter_mut().zip(w) {
                *g += v / n as f64;
            }
        }
        Self::new(global, local)
    }

    /// Builds from an explicit global measure; every device must be
    /// absolutely continuous with respect to it.
    pub fn new(global: Vec<f64>, local: Vec<Vec<f64>>) -> Result<Self, FuncSpaceError> {
        let s = global.len();
        check_weights(&global, s)?;
        let mut nu = Vec::with_capacity(local.len());
        let mut s_sup = Vec::with_capacity(local.len());
        for (device, w) in local.iter().enumerate() {
            check_weights(w, s)?;
            let mut ratios = vec![0.0; s];
            let mut sup = 0.0;
            for (point, (&wi, &wg)) in w.iter().zip(&global).enumerate() {
                if wg == 0.0 {
                    if wi != 0.0 {
                        return Err(FuncSpaceError::AbsoluteContinuity { device, point });
                    }
                    // ν is 0 on zero-mass points by convention.
                } else {
                    ratios[point] = wi / wg;
                    if ratios[point] > sup {
                        sup = ratios[point];
                    }
                }
            }
            nu.push(ratios);
            s_sup.push(sup);
        }
        Ok(Self {
            global,
            local,
            nu,
            s_sup,
        })
    }

    /// IID case: every device carries the uniform measure.
    pub fn uniform(devices: usize, grid_len: usize) -> Self {
        let w = vec![1.0 / grid_len as f64; grid_len];
        Self::from_locals(vec![w; devices]).expect("uniform weights are valid")
    }

    /// Two-block skew: the first half of the devices overweight the first
    /// half of the grid by `(1 + skew)` and underweight the rest by
    /// `(1 − skew)`; the other devices mirror it. `S_i = 1 + skew`.
    pub fn two_block(devices: usize, grid_len: usize, skew: f64) -> Result<Self, FuncSpaceError> {
        assert!((0.0..1.0).contains(&skew), "skew must be in [0, 1)");
        assert!(grid_len.is_multiple_of(2), "two-block measures need an even grid");
        let s = grid_len as f64;
        let hi = (1.0 + skew) / s;
        let lo = (1.0 - skew) / s;
        let half = grid_len / 2;
        let local: Vec<Vec<f64>> = (0..devices)
            .map(|i| {
                (0..grid_len)
                    .map(|p| {
                        let in_first_block = p < half;
                        if (i < devices / 2) == in_first_block {
                            hi
                        } else {
                            lo
                        }
                    })
                    .collect()
            })
            .collect();
        Self::from_locals(local)
    }

    pub fn device_count(&self) -> usize {
        self.local.len()
    }

    pub fn grid_len(&self) -> usize {
        self.global.len()
    }

    /// Global weights `μ`.
    pub fn global(&self) -> &[f64] {
        &self.global
    }

    /// Device weights `μ_i`.
    pub fn local(&self, i: usize) -> &[f64] {
        &self.local[i]
    }

    /// Density ratio `ν_i` on the grid.
    pub fn nu(&self, i: usize) -> &[f64] {
        &self.nu[i]
    }

    /// `S_i = sup ν_i`.
    pub fn s_sup(&self, i: usize) -> f64 {
        self.s_sup[i]
    }
}

/// `⟨f, g⟩ = Σ_s w_s ⟨f(x_s), g(x_s)⟩`
pub fn inner(f: &FunctionGrid, g: &FunctionGrid, weights: &[f64]) -> Result<f64, FuncSpaceError> {
    if !f.same_shape(g) {
        return Err(FuncSpaceError::ShapeMismatch {
            left_rows: f.rows,
            left_cols: f.cols,
            right_rows: g.rows,
            right_cols: g.cols,
        });
    }
    if weights.len() != f.rows {
        return Err(FuncSpaceError::WeightLength {
            got: weights.len(),
            want: f.rows,
        });
    }
    let mut acc = Accumulator::new();
    for s in 0..f.rows {
        let w = weights[s];
        if w == 0.0 {
            continue;
        }
        let mut dot = Accumulator::new();
        for (a, b) in f.row(s).iter().zip(g.row(s)) {
            dot.add(a * b);
        }
        acc.add(w * dot.value());
    }
    Ok(acc.value())
}

/// `‖f‖ = √⟨f, f⟩`
pub fn norm(f: &FunctionGrid, weights: &[f64]) -> Result<f64, FuncSpaceError> {
    Ok(float::sqrt(inner(f, f, weights)?.max(0.0)))
}

/// One grid function per device, all on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedFunction {
    parts: Vec<FunctionGrid>,
}

impl FederatedFunction {
    pub fn new(parts: Vec<FunctionGrid>) -> Result<Self, FuncSpaceError> {
        if let Some(first) = parts.first() {
            for p in &parts[1..] {
                if !first.same_shape(p) {
                    return Err(FuncSpaceError::ShapeMismatch {
                        left_rows: first.rows,
                        left_cols: first.cols,
                        right_rows: p.rows,
                        right_cols: p.cols,
                    });
                }
            }
        }
        Ok(Self { parts })
    }

    pub fn zeros(parts: usize, rows: usize, cols: usize) -> Self {
        Self {
            parts: (0..parts).map(|_| FunctionGrid::zeros(rows, cols)).collect(),
        }
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn part(&self, i: usize) -> &FunctionGrid {
        &self.parts[i]
    }

    pub fn part_mut(&mut self, i: usize) -> &mut FunctionGrid {
        &mut self.parts[i]
    }

    pub fn parts(&self) -> &[FunctionGrid] {
        &self.parts
    }

    pub fn rows(&self) -> usize {
        self.parts.first().map_or(0, FunctionGrid::rows)
    }

    pub fn cols(&self) -> usize {
        self.parts.first().map_or(0, FunctionGrid::cols)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FuncSpaceError> {
        if self.part_count() != other.part_count() {
            return Err(FuncSpaceError::ArityMismatch {
                left: self.part_count(),
                right: other.part_count(),
            });
        }
        Ok(Self {
            parts: self
                .parts
                .iter()
                .zip(&other.parts)
                .map(|(a, b)| a.sub(b))
                .collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.parts.iter().all(FunctionGrid::is_finite)
    }
}

/// `⟨a, b⟩_F = Σ_i ⟨a_i, b_i⟩` under the global measure.
pub fn fed_inner(
    a: &FederatedFunction,
    b: &FederatedFunction,
    global_weights: &[f64],
) -> Result<f64, FuncSpaceError> {
    if a.part_count() != b.part_count() {
        return Err(FuncSpaceError::ArityMismatch {
            left: a.part_count(),
            right: b.part_count(),
        });
    }
    let mut acc = Accumulator::new();
    for (pa, pb) in a.parts.iter().zip(&b.parts) {
        acc.add(inner(pa, pb, global_weights)?);
    }
    Ok(acc.value())
}

/// `‖a‖_F = √⟨a, a⟩_F`
pub fn fed_norm(a: &FederatedFunction, global_weights: &[f64]) -> Result<f64, FuncSpaceError> {
    Ok(float::sqrt(fed_inner(a, a, global_weights)?.max(0.0)))
}

/// Matrix acting on the device axis: part `i` of the result is
/// `Σ_j A_ij a_j`.
pub fn matrix_apply(a: &Matrix, x: &FederatedFunction) -> Result<FederatedFunction, FuncSpaceError> {
    let n = x.part_count();
    if a.rows() != n || a.cols() != n {
        return Err(FuncSpaceError::MatrixArity {
            rows: a.rows(),
            cols: a.cols(),
            parts: n,
        });
    }
    let mut parts = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = FunctionGrid::zeros(x.rows(), x.cols());
        for j in 0..n {
            let coeff = a.at(i, j);
            if coeff != 0.0 {
                acc.axpy(coeff, x.part(j));
            }
        }
        parts.push(acc);
    }
    FederatedFunction::new(parts)
}

/// Every part replaced by the across-device mean `ā = (1/n) Σ a_i`.
pub fn mean_fed(a: &FederatedFunction) -> FederatedFunction {
    let n = a.part_count();
    let mut mean = FunctionGrid::zeros(a.rows(), a.cols());
    for p in a.parts() {
        mean.axpy(1.0 / n as f64, p);
    }
    FederatedFunction {
        parts: vec![mean; n],
    }
}

/// Mean part only.
pub fn mean_part(a: &FederatedFunction) -> FunctionGrid {
    let n = a.part_count();
    let mut mean = FunctionGrid::zeros(a.rows(), a.cols());
    for p in a.parts() {
        mean.axpy(1.0 / n as f64, p);
    }
    mean
}

/// Root-mean-square disagreement
/// `D = √((1/n) Σ_i ‖a_i − ā‖²) = (1/√n)·‖a − ā‖_F`.
pub fn rms_distance(a: &FederatedFunction, global_weights: &[f64]) -> Result<f64, FuncSpaceError> {
    let centered = a.sub(&mean_fed(a))?;
    Ok(fed_norm(&centered, global_weights)? / float::sqrt(a.part_count() as f64))
}

/// Federated function attaining `‖Aâ‖_F = ‖A‖·‖â‖_F`: part `i` is the
/// constant grid at `v_i`, where `v` is the top right-singular direction
/// of `A`. For `A = 0` any nonzero choice gives the (zero) ratio.
pub fn operator_norm_witness(
    a: &Matrix,
    rows: usize,
    cols: usize,
) -> Result<FederatedFunction, FuncSpaceError> {
    let v = linalg::top_singular_direction(a)?;
    let parts = v
        .into_iter()
        .map(|vi| FunctionGrid::constant(rows, cols, vi))
        .collect();
    FederatedFunction::new(parts)
}

/// CSV snapshot of a grid function: header `x_0..x_{N−1},y_0..y_{M−1}`,
/// one row per grid point.
pub fn function_grid_csv(grid: &SampleGrid, f: &FunctionGrid) -> String {
    let mut out = String::new();
    let mut cols = Vec::new();
    for d in 0..grid.dim_in() {
        cols.push(format!("x_{d}"));
    }
    for m in 0..f.cols() {
        cols.push(format!("y_{m}"));
    }
    out.push_str(&cols.join(","));
    out.push('\n');
    for s in 0..grid.len() {
        let mut fields = Vec::new();
        for x in grid.point(s) {
            fields.push(format!("{x}"));
        }
        for y in f.row(s) {
            fields.push(format!("{y}"));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_grid(rows: usize, cols: usize, rng: &mut Rng) -> FunctionGrid {
        let values = (0..rows * cols).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        FunctionGrid::from_values(rows, cols, values).unwrap()
    }

    fn random_fed(n: usize, rows: usize, cols: usize, rng: &mut Rng) -> FederatedFunction {
        FederatedFunction::new((0..n).map(|_| random_grid(rows, cols, rng)).collect()).unwrap()
    }

    fn uniform_weights(s: usize) -> Vec<f64> {
        vec![1.0 / s as f64; s]
    }

    /// Plain-loop inner product, the independent route the compensated
    /// implementation is checked against.
    fn naive_inner(f: &FunctionGrid, g: &FunctionGrid, w: &[f64]) -> f64 {
        let mut total = 0.0;
        for s in 0..f.rows() {
            for m in 0..f.cols() {
                total += w[s] * f.row(s)[m] * g.row(s)[m];
            }
        }
        total
    }

    /// Power-iteration induced norm, independent of the eigensolver.
    fn power_norm(a: &Matrix) -> f64 {
        let gram = a.transpose().matmul(a);
        let n = gram.rows();
        let mut v = vec![1.0; n];
        for _ in 0..3000 {
            let w = gram.matvec(&v);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v = w.into_iter().map(|x| x / norm).collect();
        }
        let gv = gram.matvec(&v);
        let rayleigh: f64 = v.iter().zip(&gv).map(|(a, b)| a * b).sum();
        rayleigh.max(0.0).sqrt()
    }

    #[test]
    fn inner_of_constant_ones_is_one() {
        let f = FunctionGrid::constant(8, 1, 1.0);
        let w = uniform_weights(8);
        assert!((inner(&f, &f, &w).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inner_disjoint_supports_is_zero() {
        let mut f = FunctionGrid::zeros(4, 1);
        let mut g = FunctionGrid::zeros(4, 1);
        f.row_mut(0)[0] = 3.0;
        g.row_mut(1)[0] = 5.0;
        let w = uniform_weights(4);
        assert_eq!(inner(&f, &g, &w).unwrap(), 0.0);
    }

    #[test]
    fn inner_matches_naive_oracle() {
        let mut rng = Rng::new(21);
        for _ in 0..20 {
            let f = random_grid(8, 3, &mut rng);
            let g = random_grid(8, 3, &mut rng);
            let mut w: Vec<f64> = (0..8).map(|_| rng.next_f64()).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            let got = inner(&f, &g, &w).unwrap();
            assert!((got - naive_inner(&f, &g, &w)).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_shape_mismatch_rejected() {
        let f = FunctionGrid::zeros(4, 1);
        let g = FunctionGrid::zeros(4, 2);
        assert!(matches!(
            inner(&f, &g, &uniform_weights(4)),
            Err(FuncSpaceError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn cauchy_schwarz() {
        let mut rng = Rng::new(4);
        let w = uniform_weights(16);
        for _ in 0..50 {
            let f = random_grid(16, 2, &mut rng);
            let g = random_grid(16, 2, &mut rng);
            let lhs = inner(&f, &g, &w).unwrap().abs();
            let rhs = norm(&f, &w).unwrap() * norm(&g, &w).unwrap();
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn fed_norm_of_identical_parts() {
        let mut rng = Rng::new(5);
        let f = random_grid(8, 2, &mut rng);
        let w = uniform_weights(8);
        let a = FederatedFunction::new(vec![f.clone(); 4]).unwrap();
        let want = 2.0 * norm(&f, &w).unwrap(); // √4 = 2
        assert!((fed_norm(&a, &w).unwrap() - want).abs() < 1e-12);
        let zero = FederatedFunction::zeros(4, 8, 2);
        assert_eq!(fed_norm(&zero, &w).unwrap(), 0.0);
    }

    #[test]
    fn fed_inner_matches_per_part_oracle() {
        let mut rng = Rng::new(6);
        let w = uniform_weights(8);
        let a = random_fed(5, 8, 2, &mut rng);
        let b = random_fed(5, 8, 2, &mut rng);
        let oracle: f64 = (0..5)
            .map(|i| naive_inner(a.part(i), b.part(i), &w))
            .sum();
        assert!((fed_inner(&a, &b, &w).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn matrix_apply_identity_and_mean() {
        let mut rng = Rng::new(7);
        let a = random_fed(4, 6, 2, &mut rng);
        let id = Matrix::identity(4);
        assert_eq!(matrix_apply(&id, &a).unwrap(), a);

        let mut avg = Matrix::zeros(4, 4);
        for r in 0..4 {
            for c in 0..4 {
                avg.set(r, c, 0.25);
            }
        }
        let averaged = matrix_apply(&avg, &a).unwrap();
        let mean = mean_fed(&a);
        let w = uniform_weights(6);
        let diff = averaged.sub(&mean).unwrap();
        assert!(fed_norm(&diff, &w).unwrap() < 1e-12);
    }

    #[test]
    fn matrix_apply_arity_check() {
        let a = FederatedFunction::zeros(3, 4, 1);
        let m = Matrix::identity(4);
        assert!(matches!(
            matrix_apply(&m, &a),
            Err(FuncSpaceError::MatrixArity { .. })
        ));
    }

    #[test]
    fn induced_norm_inequality_on_random_pairs() {
        let mut rng = Rng::new(8);
        let w = uniform_weights(8);
        for _ in 0..30 {
            let mut m = Matrix::zeros(5, 5);
            for r in 0..5 {
                for c in 0..5 {
                    m.set(r, c, rng.next_f64() * 2.0 - 1.0);
                }
            }
            let a = random_fed(5, 8, 2, &mut rng);
            let lhs = fed_norm(&matrix_apply(&m, &a).unwrap(), &w).unwrap();
            let rhs = power_norm(&m) * fed_norm(&a, &w).unwrap();
            assert!(lhs <= rhs + 1e-9, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn rms_distance_cases() {
        let mut rng = Rng::new(9);
        let w = uniform_weights(8);
        let f = random_grid(8, 2, &mut rng);

        let same = FederatedFunction::new(vec![f.clone(); 3]).unwrap();
        assert!(rms_distance(&same, &w).unwrap() < 1e-12);

        // two parts f and −f: mean 0, D = ‖f‖
        let anti = FederatedFunction::new(vec![f.clone(), f.scale(-1.0)]).unwrap();
        let want = norm(&f, &w).unwrap();
        assert!((rms_distance(&anti, &w).unwrap() - want).abs() < 1e-12);

        // random case vs the definition written as loops
        let a = random_fed(4, 8, 2, &mut rng);
        let mean = mean_part(&a);
        let mut acc = 0.0;
        for i in 0..4 {
            let d = a.part(i).sub(&mean);
            acc += naive_inner(&d, &d, &w);
        }
        let oracle = (acc / 4.0).sqrt();
        assert!((rms_distance(&a, &w).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn witness_identity_and_diagonal() {
        let w = uniform_weights(4);
        let id = Matrix::identity(3);
        let hat = operator_norm_witness(&id, 4, 2).unwrap();
        let ratio = fed_norm(&matrix_apply(&id, &hat).unwrap(), &w).unwrap()
            / fed_norm(&hat, &w).unwrap();
        assert!((ratio - 1.0).abs() < 1e-9);

        let diag = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        let hat = operator_norm_witness(&diag, 4, 2).unwrap();
        // concentrates on part 0 (the dominant direction)
        assert!(hat.part(0).row(0)[0].abs() > 0.999);
        assert!(hat.part(1).row(0)[0].abs() < 1e-6);
        let ratio = fed_norm(&matrix_apply(&diag, &hat).unwrap(), &w).unwrap()
            / fed_norm(&hat, &w).unwrap();
        assert!((ratio - 2.0).abs() < 1e-9);
    }

    #[test]
    fn witness_achieves_induced_norm_on_random_matrices() {
        let mut rng = Rng::new(10);
        let w = uniform_weights(4);
        for _ in 0..50 {
            let mut m = Matrix::zeros(5, 5);
            for r in 0..5 {
                for c in 0..5 {
                    m.set(r, c, rng.next_f64() * 2.0 - 1.0);
                }
            }
            let hat = operator_norm_witness(&m, 4, 3).unwrap();
            let ratio = fed_norm(&matrix_apply(&m, &hat).unwrap(), &w).unwrap()
                / fed_norm(&hat, &w).unwrap();
            let oracle = power_norm(&m);
            assert!((ratio - oracle).abs() < 1e-8, "{ratio} vs {oracle}");
        }
    }

    #[test]
    fn measure_set_uniform_is_iid() {
        let ms = MeasureSet::uniform(4, 8);
        for i in 0..4 {
            assert!((ms.s_sup(i) - 1.0).abs() < 1e-12);
            assert!(ms.nu(i).iter().all(|&v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn measure_set_two_block() {
        let ms = MeasureSet::two_block(10, 8, 0.5).unwrap();
        for i in 0..10 {
            assert!((ms.s_sup(i) - 1.5).abs() < 1e-12);
            let total: f64 = ms.local(i).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        // global is uniform when the device groups are balanced
        for &g in ms.global() {
            assert!((g - 1.0 / 8.0).abs() < 1e-12);
        }
        // (1/n) Σ_i ν_i(x_s) = 1 at every point
        for s in 0..8 {
            let mean: f64 = (0..10).map(|i| ms.nu(i)[s]).sum::<f64>() / 10.0;
            assert!((mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn measure_set_rejects_absolute_continuity_violation() {
        let global = vec![0.5, 0.5, 0.0, 0.0];
        let local = vec![vec![0.0, 0.0, 0.5, 0.5]];
        assert!(matches!(
            MeasureSet::new(global, local),
            Err(FuncSpaceError::AbsoluteContinuity { device: 0, point: 2 })
        ));
    }

    #[test]
    fn measure_set_rejects_bad_sum() {
        assert!(matches!(
            MeasureSet::from_locals(vec![vec![0.5, 0.6]]),
            Err(FuncSpaceError::WeightSum { .. })
        ));
    }

    #[test]
    fn s_sup_at_least_one() {
        let mut rng = Rng::new(11);
        for _ in 0..20 {
            let mut locals = Vec::new();
            for _ in 0..5 {
                let mut w: Vec<f64> = (0..8).map(|_| rng.next_f64() + 0.01).collect();
                let t: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= t);
                locals.push(w);
            }
            let ms = MeasureSet::from_locals(locals).unwrap();
            for i in 0..5 {
                assert!(ms.s_sup(i) >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn global_norm_is_mixture_of_local_norms() {
        // ‖f‖²_μ = (1/n) Σ_i ‖f‖²_{μ_i} when μ is the average measure.
        let mut rng = Rng::new(12);
        let mut locals = Vec::new();
        for _ in 0..6 {
            let mut w: Vec<f64> = (0..8).map(|_| rng.next_f64() + 0.01).collect();
            let t: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= t);
            locals.push(w);
        }
        let ms = MeasureSet::from_locals(locals).unwrap();
        let f = random_grid(8, 2, &mut rng);
        let global = norm(&f, ms.global()).unwrap();
        let mix: f64 = (0..6)
            .map(|i| norm(&f, ms.local(i)).unwrap().powi(2))
            .sum::<f64>()
            / 6.0;
        assert!((global * global - mix).abs() < 1e-12);
    }

    #[test]
    fn density_scaled_norm_bound() {
        // ‖d·ν_i‖_μ ≤ √S_i · ‖d‖_{μ_i}
        let mut rng = Rng::new(13);
        let ms = MeasureSet::two_block(4, 8, 0.7).unwrap();
        for _ in 0..30 {
            let d = random_grid(8, 2, &mut rng);
            for i in 0..4 {
                let lhs = norm(&d.scale_rows(ms.nu(i)), ms.global()).unwrap();
                let rhs = float::sqrt(ms.s_sup(i)) * norm(&d, ms.local(i)).unwrap();
                assert!(lhs <= rhs + 1e-12, "device {i}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn csv_snapshot_shape() {
        let grid = SampleGrid::uniform_1d(3, 2).unwrap();
        let f = FunctionGrid::constant(3, 2, 1.5);
        let csv = function_grid_csv(&grid, &f);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x_0,y_0,y_1");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,1.5,1.5");
    }
}
