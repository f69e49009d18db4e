//! Quadrature on simplices.
//!
//! Volume rules are collapsed (Duffy) tensor products of Gauss-Jacobi rules, so
//! every weight is positive and a rule with `m` points per direction is exact
//! for total degree `2m - 1`. Weighted integrals use a globally adaptive scheme
//! over uniform simplex subdivisions, which grades automatically toward the
//! points where a weight vanishes or blows up.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Simplex};
use crate::scalar::Scalar;
use crate::weights::Weight;

/// Highest supported exactness degree in 2D.
pub const MAX_DEGREE_2D: usize = 19;
/// Highest supported exactness degree in 3D.
pub const MAX_DEGREE_3D: usize = 14;

/// Relative tolerance used for weighted integrals unless told otherwise.
pub const DEFAULT_WEIGHTED_RTOL: f64 = 1e-10;
/// Maximum subdivision depth of the adaptive integrator.
pub const DEFAULT_MAX_DEPTH: usize = 30;

/// Quadrature rule on the reference simplex, with points in barycentric form.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadRule<T> {
    pub dim: usize,
    /// `dim + 1` meaningful barycentric coordinates per point.
    pub points: Vec<[T; 4]>,
    /// Positive weights summing to `1/dim!`.
    pub weights: Vec<T>,
    pub degree: usize,
}

impl<T: Scalar> QuadRule<T> {
    /// Rule of the requested exactness degree.
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        quad_rule(dim, degree)
    }

    /// Degree 19 in 2D, degree 14 in 3D.
    pub fn default_for(dim: usize) -> Result<Self> {
        match dim {
            2 => quad_rule(2, MAX_DEGREE_2D),
            3 => quad_rule(3, MAX_DEGREE_3D),
            _ => Err(Error::Capability(format!("quadrature in dimension {dim}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integral over the reference simplex of a function of the Cartesian
    /// reference coordinates.
    pub fn integrate_reference(&self, mut f: impl FnMut(&[T]) -> T) -> T {
        let mut acc = T::zero();
        let mut x = [T::zero(); 3];
        for (p, &w) in self.points.iter().zip(&self.weights) {
            x[..self.dim].copy_from_slice(&p[1..=self.dim]);
            acc += w * f(&x[..self.dim]);
        }
        acc
    }
}

/// Collapsed Gauss-Jacobi rule on the reference simplex.
pub fn quad_rule<T: Scalar>(dim: usize, degree: usize) -> Result<QuadRule<T>> {
    let max = match dim {
        2 => MAX_DEGREE_2D,
        3 => MAX_DEGREE_3D,
        _ => return Err(Error::Capability(format!("quadrature in dimension {dim}"))),
    };
    if degree > max {
        return Err(Error::Capability(format!("degree {degree} rule in {dim}D (max {max})")));
    }
    let m = degree / 2 + 1;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    if dim == 2 {
        let (xa, wa) = gauss_jacobi_unit(m, 1.0);
        let (xb, wb) = gauss_jacobi_unit(m, 0.0);
        for (&s, &ws) in xa.iter().zip(&wa) {
            for (&t, &wt) in xb.iter().zip(&wb) {
                let x = s;
                let y = t * (1.0 - s);
                push_point(&mut points, &mut weights, &[x, y], ws * wt);
            }
        }
    } else {
        let (xa, wa) = gauss_jacobi_unit(m, 2.0);
        let (xb, wb) = gauss_jacobi_unit(m, 1.0);
        let (xc, wc) = gauss_jacobi_unit(m, 0.0);
        for (&s, &ws) in xa.iter().zip(&wa) {
            for (&t, &wt) in xb.iter().zip(&wb) {
                for (&r, &wr) in xc.iter().zip(&wc) {
                    let x = s;
                    let y = t * (1.0 - s);
                    let z = r * (1.0 - s) * (1.0 - t);
                    push_point(&mut points, &mut weights, &[x, y, z], ws * wt * wr);
                }
            }
        }
    }
    Ok(QuadRule { dim, points, weights, degree })
}

fn push_point<T: Scalar>(points: &mut Vec<[T; 4]>, weights: &mut Vec<T>, x: &[f64], w: f64) {
    let mut b = [T::zero(); 4];
    let s: f64 = x.iter().sum();
    b[0] = T::lit(1.0 - s);
    for (k, &c) in x.iter().enumerate() {
        b[k + 1] = T::lit(c);
    }
    points.push(b);
    weights.push(T::lit(w));
}

/// Gauss-Jacobi nodes and weights on `[0,1]` for the weight `(1-t)^alpha`.
///
/// Golub-Welsch on the Jacobi recurrence, followed by Newton polishing of the
/// nodes on the three-term recurrence.
pub fn gauss_jacobi_unit(m: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let beta = 0.0;
    let ab = alpha + beta;
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m];
    for k in 0..m {
        let kf = k as f64;
        diag[k] = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        if k + 1 < m {
            let j = kf + 1.0;
            let num = 4.0 * j * (j + alpha) * (j + beta) * (j + ab);
            let den = (2.0 * j + ab).powi(2) * (2.0 * j + ab + 1.0) * (2.0 * j + ab - 1.0);
            off[k] = (num / den).sqrt();
        }
    }
    // integral of (1-x)^alpha over [-1,1] (beta = 0)
    let mu0 = 2f64.powf(alpha + 1.0) / (alpha + 1.0);
    let (nodes, first) = symmetric_tridiagonal_eigen(&diag, &off);
    let mut pairs: Vec<(f64, f64)> = nodes
        .iter()
        .zip(&first)
        .map(|(&x, &v)| (polish_jacobi_root(m, alpha, beta, x), mu0 * v * v))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = 2f64.powf(ab + 1.0);
    let xs = pairs.iter().map(|&(x, _)| 0.5 * (1.0 + x)).collect();
    let ws = pairs.iter().map(|&(_, w)| w / scale).collect();
    (xs, ws)
}

/// Jacobi polynomial `P_m^{(a,b)}` and its derivative at `x`.
fn jacobi_eval(m: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    if m == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = 0.5 * (a - b + (a + b + 2.0) * x);
    for k in 2..=m {
        let k = k as f64;
        let c = 2.0 * k + a + b;
        let a1 = 2.0 * k * (k + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (a * a - b * b);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    let mf = m as f64;
    let dp = 0.5 * (mf + a + b + 1.0) * jacobi_eval(m - 1, a + 1.0, b + 1.0, x).0;
    (p1, dp)
}

fn polish_jacobi_root(m: usize, a: f64, b: f64, mut x: f64) -> f64 {
    for _ in 0..3 {
        let (p, dp) = jacobi_eval(m, a, b, x);
        if dp == 0.0 {
            break;
        }
        let dx = p / dp;
        x -= dx;
        if dx.abs() < 1e-16 {
            break;
        }
    }
    x
}

/// Eigenvalues and first eigenvector components of a symmetric tridiagonal
/// matrix (implicit QL with Wilkinson shifts).
fn symmetric_tridiagonal_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    // first row of the accumulated eigenvector matrix
    let mut z = vec![0.0; n];
    if n > 0 {
        z[0] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 60, "tridiagonal eigensolver failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    (d, z)
}

/// Integral of `f` over one mesh cell with a fixed rule.
pub fn integrate_on_cell<T: Scalar>(mesh: &Mesh<T>, cell: usize, f: impl Fn(&[T]) -> T, rule: &QuadRule<T>) -> T {
    integrate_simplex(&mesh.simplex(cell), &f, rule)
}

/// Integral of `f` over a simplex with a fixed rule.
pub fn integrate_simplex<T: Scalar>(s: &Simplex<T>, f: impl Fn(&[T]) -> T, rule: &QuadRule<T>) -> T {
    let vol = s.volume() * crate::scalar::factorial::<T>(s.dim);
    let mut acc = T::zero();
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let x = s.point_at(p);
        acc += w * f(&x[..s.dim]);
    }
    acc * vol
}

/// Adaptive integral of `f * w` over one mesh cell.
pub fn integrate_weighted<T: Scalar>(
    mesh: &Mesh<T>,
    cell: usize,
    f: impl Fn(&[T]) -> T,
    w: &Weight<T>,
    rule: &QuadRule<T>,
    rtol: T,
) -> Result<T> {
    let mut out = [T::zero()];
    adaptive_integrate(
        &mesh.simplex(cell),
        rule,
        1,
        |x, _lam, vals| vals[0] = f(x) * w.value(x),
        AdaptiveOptions { rtol, max_depth: DEFAULT_MAX_DEPTH },
        &mut out,
    )?;
    Ok(out[0])
}

/// Controls of the adaptive integrator.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOptions<T> {
    /// Accepted when the summed coarse/fine discrepancy is at most `rtol`
    /// times the integral of the absolute integrand.
    pub rtol: T,
    pub max_depth: usize,
}

impl<T: Scalar> Default for AdaptiveOptions<T> {
    fn default() -> Self {
        AdaptiveOptions { rtol: T::lit(DEFAULT_WEIGHTED_RTOL), max_depth: DEFAULT_MAX_DEPTH }
    }
}

struct Piece<T> {
    simplex: Simplex<T>,
    /// Parent-barycentric coordinates of the piece's vertices.
    bary: [[T; 4]; 4],
    depth: usize,
    /// Fixed-rule values of the children, `ncomp` per child.
    child_vals: Vec<T>,
    value: Vec<T>,
    abs: T,
    err: T,
}

/// Globally adaptive integration of a vector-valued integrand over a simplex.
///
/// The integrand receives the physical point, the barycentric coordinates of
/// that point with respect to the root simplex, and an output slice of length
/// `ncomp`. Each piece is estimated twice (fixed rule on the piece, and the sum
/// over its `2^dim` children); the piece with the largest discrepancy is split
/// until the total discrepancy falls below tolerance.
pub fn adaptive_integrate<T: Scalar>(
    root: &Simplex<T>,
    rule: &QuadRule<T>,
    ncomp: usize,
    mut integrand: impl FnMut(&[T], &[T], &mut [T]),
    opts: AdaptiveOptions<T>,
    out: &mut [T],
) -> Result<()> {
    let dim = root.dim;
    let fact = crate::scalar::factorial::<T>(dim);
    let mut scratch = vec![T::zero(); ncomp];

    // Fixed-rule values (per component, and of the summed absolute value).
    let mut eval = |s: &Simplex<T>, bary: &[[T; 4]; 4], vals: &mut [T]| -> T {
        let jac = s.volume() * fact;
        for v in vals.iter_mut() {
            *v = T::zero();
        }
        let mut abs = T::zero();
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            let x = s.point_at(p);
            let mut lam = [T::zero(); 4];
            for (k, &pk) in p.iter().enumerate().take(dim + 1) {
                for (l, bl) in lam.iter_mut().zip(&bary[k]).take(dim + 1) {
                    *l += pk * *bl;
                }
            }
            integrand(&x[..dim], &lam[..=dim], &mut scratch);
            for (v, &s) in vals.iter_mut().zip(&scratch) {
                *v += w * s;
            }
            abs += w * scratch.iter().fold(T::zero(), |a, &s| a + s.abs());
        }
        for v in vals.iter_mut() {
            *v *= jac;
        }
        abs * jac
    };

    let half = T::lit(0.5);
    let child_bary = |bary: &[[T; 4]; 4]| -> Vec<[[T; 4]; 4]> {
        // same midpoint pattern and child order as Simplex::children
        let mut out = Vec::new();
        let mids = |a: usize, b: usize| -> [T; 4] {
            let mut m = [T::zero(); 4];
            for i in 0..4 {
                m[i] = (bary[a][i] + bary[b][i]) * half;
            }
            m
        };
        if dim == 2 {
            let (m01, m02, m12) = (mids(0, 1), mids(0, 2), mids(1, 2));
            let z = [T::zero(); 4];
            out.push([bary[0], m01, m02, z]);
            out.push([m01, bary[1], m12, z]);
            out.push([m02, m12, bary[2], z]);
            out.push([m12, m02, m01, z]);
        } else {
            let (m01, m02, m03) = (mids(0, 1), mids(0, 2), mids(0, 3));
            let (m12, m13, m23) = (mids(1, 2), mids(1, 3), mids(2, 3));
            out.push([bary[0], m01, m02, m03]);
            out.push([m01, bary[1], m12, m13]);
            out.push([m02, m12, bary[2], m23]);
            out.push([m03, m13, m23, bary[3]]);
            out.push([m01, m02, m03, m13]);
            out.push([m01, m02, m12, m13]);
            out.push([m02, m03, m13, m23]);
            out.push([m02, m12, m13, m23]);
        }
        out
    };

    let mut root_bary = [[T::zero(); 4]; 4];
    for (k, row) in root_bary.iter_mut().enumerate().take(dim + 1) {
        row[k] = T::one();
    }
    let mut coarse = vec![T::zero(); ncomp];
    eval(root, &root_bary, &mut coarse);

    let mut make_piece = |simplex: Simplex<T>, bary: [[T; 4]; 4], depth: usize, coarse: &[T]| -> Piece<T> {
        let kids = simplex.children();
        let kid_bary = child_bary(&bary);
        let mut child_vals = vec![T::zero(); ncomp * kids.len()];
        let mut value = vec![T::zero(); ncomp];
        let mut abs = T::zero();
        for (k, (kid, kb)) in kids.iter().zip(&kid_bary).enumerate() {
            let slot = &mut child_vals[k * ncomp..(k + 1) * ncomp];
            abs += eval(kid, kb, slot);
            for (v, &s) in value.iter_mut().zip(slot.iter()) {
                *v += s;
            }
        }
        let err = value.iter().zip(coarse).fold(T::zero(), |a, (&f, &c)| a + (f - c).abs());
        Piece { simplex, bary, depth, child_vals, value, abs, err }
    };

    // Max-heap on the discrepancy; running sums are re-checked exactly before
    // accepting so that drift in the incremental totals cannot end early.
    let first = make_piece(*root, root_bary, 0, &coarse);
    let mut total_err = first.err;
    let mut total_abs = first.abs;
    let mut heap = BinaryHeap::new();
    heap.push(ByErr(first));
    let max_pieces = 200_000;
    let sum_values = |heap: &BinaryHeap<ByErr<T>>, k: usize| heap.iter().fold(T::zero(), |a, p| a + p.0.value[k]);
    loop {
        if !total_err.is_finite() || !total_abs.is_finite() {
            return Err(Error::Accuracy { estimate: sum_values(&heap, 0).as_f64(), achieved: f64::INFINITY });
        }
        if total_err <= opts.rtol * total_abs {
            total_err = heap.iter().fold(T::zero(), |a, p| a + p.0.err);
            total_abs = heap.iter().fold(T::zero(), |a, p| a + p.0.abs);
            if total_err <= opts.rtol * total_abs {
                for (k, o) in out.iter_mut().enumerate().take(ncomp) {
                    *o = sum_values(&heap, k);
                }
                return Ok(());
            }
        }
        let worst = heap.peek().expect("at least one piece");
        if worst.0.depth >= opts.max_depth || heap.len() >= max_pieces {
            let achieved = if total_abs > T::zero() { (total_err / total_abs).as_f64() } else { f64::INFINITY };
            return Err(Error::Accuracy { estimate: sum_values(&heap, 0).as_f64(), achieved });
        }
        let p = heap.pop().expect("at least one piece").0;
        total_err -= p.err;
        total_abs -= p.abs;
        let kids = p.simplex.children();
        let kid_bary = child_bary(&p.bary);
        for (k, (kid, kb)) in kids.into_iter().zip(kid_bary).enumerate() {
            let coarse = &p.child_vals[k * ncomp..(k + 1) * ncomp];
            let piece = make_piece(kid, kb, p.depth + 1, coarse);
            total_err += piece.err;
            total_abs += piece.abs;
            heap.push(ByErr(piece));
        }
    }
}

/// Orders pieces by discrepancy for the refinement heap.
struct ByErr<T>(Piece<T>);

impl<T: Scalar> PartialEq for ByErr<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for ByErr<T> {}

impl<T: Scalar> PartialOrd for ByErr<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for ByErr<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.err.partial_cmp(&other.0.err).unwrap_or(Ordering::Equal)
    }
}
