//! Sparse symmetric matrices and SPD solvers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric matrix in compressed sparse row form, both triangles stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSym<T> {
    order: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

/// Accumulates `(row, col, value)` contributions; duplicates are summed.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder<T> {
    order: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> TripletBuilder<T> {
    pub fn new(order: usize) -> Self {
        TripletBuilder { order, entries: Vec::new() }
    }

    pub fn with_capacity(order: usize, cap: usize) -> Self {
        TripletBuilder { order, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.order && col < self.order);
        self.entries.push((row, col, value));
    }

    /// Builds the matrix, checking structural and numerical symmetry.
    pub fn build(mut self) -> Result<SparseSym<T>> {
        if let Some(&(r, c, _)) = self.entries.iter().find(|e| e.0 >= self.order || e.1 >= self.order) {
            return Err(Error::Matrix(format!("entry ({r},{c}) outside order {}", self.order)));
        }
        self.entries.sort_unstable_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; self.order + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.order {
            row_ptr[r + 1] += row_ptr[r];
        }
        let m = SparseSym { order: self.order, row_ptr, col_idx, values };
        m.check_symmetry()?;
        Ok(m)
    }
}

impl<T: Scalar> SparseSym<T> {
    pub fn identity(order: usize) -> Self {
        SparseSym {
            order,
            row_ptr: (0..=order).collect(),
            col_idx: (0..order).collect(),
            values: vec![T::one(); order],
        }
    }

    /// Tridiagonal matrix with constant diagonals.
    pub fn tridiagonal(order: usize, sub: T, diag: T) -> Self {
        let mut b = TripletBuilder::new(order);
        for i in 0..order {
            b.add(i, i, diag);
            if i + 1 < order {
                b.add(i, i + 1, sub);
                b.add(i + 1, i, sub);
            }
        }
        b.build().expect("tridiagonal is symmetric")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(col, value)` over one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.order).map(|i| self.get(i, i)).collect()
    }

    fn check_symmetry(&self) -> Result<()> {
        for r in 0..self.order {
            for (c, v) in self.row(r) {
                let t = self.get(c, r);
                let scale = v.abs().max(t.abs());
                if (v - t).abs() > T::lit(64.0) * T::epsilon() * scale {
                    return Err(Error::Matrix(format!("asymmetric entries at ({r},{c}): {v} vs {t}")));
                }
            }
        }
        Ok(())
    }

    /// `A x`.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.order {
            return Err(Error::Domain(format!("vector of length {} for order {}", x.len(), self.order)));
        }
        let mut y = vec![T::zero(); self.order];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    #[inline]
    fn matvec_into(&self, x: &[T], y: &mut [T]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    /// Quadratic form `x^T A x`.
    pub fn energy(&self, x: &[T]) -> Result<T> {
        let ax = self.matvec(x)?;
        Ok(dot(x, &ax))
    }

    /// Extracts rows `rows` and columns `cols` (index maps into `self`).
    pub fn submatrix(&self, rows: &[usize], col_map: &[Option<usize>], ncols: usize) -> SparseRect<T> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            for (c, v) in self.row(r) {
                if let Some(cc) = col_map[c] {
                    col_idx.push(cc);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseRect { nrows: rows.len(), ncols, row_ptr, col_idx, values }
    }

    /// Residual norm attainable in floating point for the iterate `x`:
    /// a small multiple of `eps * || |A| |x| ||`.
    fn rounding_floor(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for r in 0..self.order {
            let mut s = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += (self.values[k] * x[self.col_idx[k]]).abs();
            }
            acc += s * s;
        }
        T::lit(16.0) * T::epsilon() * acc.sqrt()
    }

    /// Solves `A x = b` for SPD `A` (Jacobi-preconditioned CG from zero).
    pub fn solve_spd(&self, b: &[T], rtol: T) -> Result<Vec<T>> {
        self.solve_spd_from(b, None, rtol).map(|s| s.x)
    }

    /// Jacobi-preconditioned conjugate gradients with an optional warm start.
    ///
    /// Stops once `||b - A x|| <= rtol ||b||`, or once the true residual
    /// reaches the rounding floor `16 eps || |A| |x| ||` when `rtol` asks
    /// for more than floating point can deliver. Non-positive curvature or a
    /// non-positive diagonal is reported as a matrix error.
    pub fn solve_spd_from(&self, b: &[T], x0: Option<&[T]>, rtol: T) -> Result<CgSolution<T>> {
        let n = self.order;
        if b.len() != n || x0.is_some_and(|x| x.len() != n) {
            return Err(Error::Domain("right-hand side length does not match the matrix".into()));
        }
        let diag = self.diagonal();
        if let Some(i) = diag.iter().position(|&d| !(d > T::zero())) {
            return Err(Error::Matrix(format!("non-positive diagonal entry {} at row {i}", diag[i])));
        }
        let bnorm = norm2(b);
        let mut x = x0.map_or_else(|| vec![T::zero(); n], |x| x.to_vec());
        if bnorm == T::zero() {
            return Ok(CgSolution { x: vec![T::zero(); n], iterations: 0, residual: T::zero() });
        }
        let target = rtol * bnorm;
        let mut r = vec![T::zero(); n];
        self.matvec_into(&x, &mut r);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let mut rnorm = norm2(&r);
        if rnorm <= target.max(self.rounding_floor(&x)) {
            return Ok(CgSolution { x, iterations: 0, residual: rnorm / bnorm });
        }
        let mut z: Vec<T> = r.iter().zip(&diag).map(|(&ri, &d)| ri / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![T::zero(); n];
        let max_iter = 20 * n + 1000;
        for it in 1..=max_iter {
            self.matvec_into(&p, &mut ap);
            let curv = dot(&p, &ap);
            if !(curv > T::zero()) {
                return Err(Error::Matrix(format!("non-positive curvature {curv} at CG iteration {it}")));
            }
            let alpha = rz / curv;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            rnorm = norm2(&r);
            if rnorm <= target {
                // guard against drift of the recursive residual
                self.matvec_into(&x, &mut ap);
                let true_res = ap.iter().zip(b).map(|(&a, &bi)| (bi - a) * (bi - a)).sum::<T>().sqrt();
                if true_res <= target.max(self.rounding_floor(&x)) {
                    return Ok(CgSolution { x, iterations: it, residual: true_res / bnorm });
                }
                for i in 0..n {
                    r[i] = b[i] - ap[i];
                }
                rnorm = true_res;
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Convergence { iterations: max_iter, residual: (rnorm / bnorm).as_f64() })
    }
}

/// Result of a CG solve.
#[derive(Clone, Debug)]
pub struct CgSolution<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Achieved relative residual.
    pub residual: T,
}

/// Rectangular sparse block (CSR), used for Dirichlet coupling columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRect<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseRect<T> {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.values[k] * x[self.col_idx[k]]).sum())
            .collect()
    }
}

/// Banded Cholesky factorization; a direct cross-check for small systems.
#[derive(Clone, Debug)]
pub struct BandCholesky<T> {
    order: usize,
    bandwidth: usize,
    /// Row-major band of `L`: entry `(i, j)` with `i - bandwidth <= j <= i`
    /// lives at `i * (bandwidth + 1) + (j + bandwidth - i)`.
    band: Vec<T>,
}

impl<T: Scalar> BandCholesky<T> {
    pub fn factor(a: &SparseSym<T>) -> Result<Self> {
        let n = a.order();
        let mut bw = 0;
        for r in 0..n {
            for (c, _) in a.row(r) {
                bw = bw.max(r.abs_diff(c));
            }
        }
        let w = bw + 1;
        let mut band = vec![T::zero(); n * w];
        for r in 0..n {
            for (c, v) in a.row(r) {
                if c <= r {
                    band[r * w + (c + bw - r)] = v;
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = band[i * w + (j + bw - i)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(s > T::zero()) {
                        return Err(Error::Matrix(format!("non-positive pivot {s} at row {i}")));
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { order: n, bandwidth: bw, band })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let (n, bw) = (self.order, self.bandwidth);
        if b.len() != n {
            return Err(Error::Domain("right-hand side length does not match the factor".into()));
        }
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.band[i * w + (k + bw - i)] * y[k];
            }
            y[i] = s / self.band[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.band[k * w + (i + bw - k)] * y[k];
            }
            y[i] = s / self.band[i * w + bw];
        }
        Ok(y)
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
