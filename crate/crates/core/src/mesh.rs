//! Structured simplicial meshes of the unit square and unit cube.
//!
//! Level `k` partitions `(0,1)^n` into `2^k` segments per axis. Every square is
//! split along its `(0,0)-(1,1)` diagonal into two triangles; every cube is split
//! into the six Kuhn tetrahedra sharing the main diagonal. The construction is
//! conforming, all cells of a level are congruent up to reflection, and `h`
//! halves exactly from one level to the next.

use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis permutations generating the Kuhn tetrahedra, in cell order.
const KUHN_PATHS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// A simplex embedded in up to three dimensions.
///
/// Unused coordinates (the third one in 2D) and the unused vertex slot (the
/// fourth one in 2D) are kept at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Simplex<T> {
    pub dim: usize,
    pub verts: [[T; 3]; 4],
}

impl<T: Scalar> Simplex<T> {
    pub fn new(dim: usize, corners: &[[T; 3]]) -> Self {
        debug_assert_eq!(corners.len(), dim + 1);
        let mut verts = [[T::zero(); 3]; 4];
        verts[..=dim].copy_from_slice(corners);
        Simplex { dim, verts }
    }

    /// Columns `v_k - v_0`, k = 1..=dim.
    fn edge_matrix(&self) -> [[T; 3]; 3] {
        let mut j = [[T::zero(); 3]; 3];
        for k in 1..=self.dim {
            for r in 0..self.dim {
                j[r][k - 1] = self.verts[k][r] - self.verts[0][r];
            }
        }
        j
    }

    /// Signed volume; positive for counter-clockwise / right-handed ordering.
    pub fn signed_volume(&self) -> T {
        let j = self.edge_matrix();
        match self.dim {
            2 => (j[0][0] * j[1][1] - j[0][1] * j[1][0]) / T::lit(2.0),
            _ => det3(&j) / T::lit(6.0),
        }
    }

    pub fn volume(&self) -> T {
        self.signed_volume().abs()
    }

    /// Physical point with the given barycentric coordinates.
    #[inline]
    pub fn point_at(&self, bary: &[T]) -> [T; 3] {
        let mut x = [T::zero(); 3];
        for (k, &l) in bary.iter().enumerate().take(self.dim + 1) {
            for r in 0..self.dim {
                x[r] += l * self.verts[k][r];
            }
        }
        x
    }

    /// Gradients of the barycentric coordinate functions (constant on the simplex).
    pub fn bary_gradients(&self) -> Result<[[T; 3]; 4]> {
        let inv = self.inverse_edge_matrix()?;
        let mut g = [[T::zero(); 3]; 4];
        for k in 1..=self.dim {
            for r in 0..self.dim {
                g[k][r] = inv[k - 1][r];
            }
        }
        for r in 0..self.dim {
            g[0][r] = -(1..=self.dim).map(|k| g[k][r]).sum::<T>();
        }
        Ok(g)
    }

    fn inverse_edge_matrix(&self) -> Result<[[T; 3]; 3]> {
        let j = self.edge_matrix();
        let mut inv = [[T::zero(); 3]; 3];
        match self.dim {
            2 => {
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if det == T::zero() {
                    return Err(Error::Domain("degenerate triangle".into()));
                }
                inv[0][0] = j[1][1] / det;
                inv[0][1] = -j[0][1] / det;
                inv[1][0] = -j[1][0] / det;
                inv[1][1] = j[0][0] / det;
            }
            _ => {
                let det = det3(&j);
                if det == T::zero() {
                    return Err(Error::Domain("degenerate tetrahedron".into()));
                }
                for r in 0..3 {
                    for c in 0..3 {
                        // cofactor transpose
                        let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
                        let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
                        inv[r][c] = (j[r1][c1] * j[r2][c2] - j[r1][c2] * j[r2][c1]) / det;
                    }
                }
            }
        }
        Ok(inv)
    }

    /// Barycentric coordinates of `x` (may be negative when `x` is outside).
    pub fn barycentric_of(&self, x: &[T]) -> Result<[T; 4]> {
        let inv = self.inverse_edge_matrix()?;
        let mut lam = [T::zero(); 4];
        for k in 0..self.dim {
            let mut s = T::zero();
            for r in 0..self.dim {
                s += inv[k][r] * (x[r] - self.verts[0][r]);
            }
            lam[k + 1] = s;
        }
        lam[0] = T::one() - (1..=self.dim).map(|k| lam[k]).sum::<T>();
        Ok(lam)
    }

    /// Longest edge length.
    pub fn diameter(&self) -> T {
        let mut d = T::zero();
        for a in 0..=self.dim {
            for b in a + 1..=self.dim {
                d = d.max(dist(&self.verts[a][..self.dim], &self.verts[b][..self.dim]));
            }
        }
        d
    }

    /// Diameter of the inscribed ball, `2 n |T| / sum of facet measures`.
    pub fn inscribed_diameter(&self) -> T {
        let n = self.dim;
        let mut facets = T::zero();
        for skip in 0..=n {
            let c: Vec<[T; 3]> = (0..=n).filter(|&k| k != skip).map(|k| self.verts[k]).collect();
            facets += if n == 2 {
                dist(&c[0][..2], &c[1][..2])
            } else {
                let u = sub3(&c[1], &c[0]);
                let v = sub3(&c[2], &c[0]);
                let w = cross3(&u, &v);
                norm3(&w) / T::lit(2.0)
            };
        }
        T::lit(2.0) * T::from_count(n) * self.volume() / facets
    }

    /// Uniform subdivision into `2^dim` children of equal volume.
    ///
    /// Triangles use the four-triangle midpoint split; tetrahedra use Bey's
    /// ordering, which keeps the children in at most three similarity classes
    /// under repeated refinement.
    pub fn children(&self) -> Vec<Simplex<T>> {
        let v = &self.verts;
        let half = T::lit(0.5);
        let mid = |a: usize, b: usize| -> [T; 3] {
            [
                (v[a][0] + v[b][0]) * half,
                (v[a][1] + v[b][1]) * half,
                (v[a][2] + v[b][2]) * half,
            ]
        };
        if self.dim == 2 {
            let (m01, m02, m12) = (mid(0, 1), mid(0, 2), mid(1, 2));
            vec![
                Simplex::new(2, &[v[0], m01, m02]),
                Simplex::new(2, &[m01, v[1], m12]),
                Simplex::new(2, &[m02, m12, v[2]]),
                Simplex::new(2, &[m12, m02, m01]),
            ]
        } else {
            let (m01, m02, m03) = (mid(0, 1), mid(0, 2), mid(0, 3));
            let (m12, m13, m23) = (mid(1, 2), mid(1, 3), mid(2, 3));
            vec![
                Simplex::new(3, &[v[0], m01, m02, m03]),
                Simplex::new(3, &[m01, v[1], m12, m13]),
                Simplex::new(3, &[m02, m12, v[2], m23]),
                Simplex::new(3, &[m03, m13, m23, v[3]]),
                Simplex::new(3, &[m01, m02, m03, m13]),
                Simplex::new(3, &[m01, m02, m12, m13]),
                Simplex::new(3, &[m02, m03, m13, m23]),
                Simplex::new(3, &[m02, m12, m13, m23]),
            ]
        }
    }
}

fn det3<T: Scalar>(j: &[[T; 3]; 3]) -> T {
    j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
}

fn sub3<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm3<T: Scalar>(a: &[T; 3]) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Euclidean distance between two points of equal dimension.
pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>().sqrt()
}

/// Cell containing a point together with the point's barycentric coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellLocation<T> {
    pub cell_index: usize,
    /// `dim + 1` entries are meaningful; the rest are zero.
    pub barycentric: [T; 4],
}

/// Conforming simplicial mesh of `(0,1)^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh<T> {
    dim: usize,
    level: usize,
    /// Segments per axis.
    segments: usize,
    coords: Vec<T>,
    cells: Vec<usize>,
    boundary: Vec<bool>,
    h: T,
}

impl<T: Scalar> Mesh<T> {
    /// Structured mesh with `2^level` segments per axis.
    pub fn unit(dim: usize, level: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Capability(format!("dimension {dim} (only 2 and 3)")));
        }
        let overflow = || Error::Overflow(format!("level {level} in dimension {dim}"));
        let n = u32::try_from(level)
            .ok()
            .and_then(|l| 1usize.checked_shl(l))
            .filter(|&n| n != 0)
            .ok_or_else(overflow)?;
        let np = n.checked_add(1).ok_or_else(overflow)?;
        let nverts = (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(np)).ok_or_else(overflow)?;
        let nblocks = (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(n)).ok_or_else(overflow)?;
        let per_block = if dim == 2 { 2 } else { 6 };
        let ncells = nblocks.checked_mul(per_block).ok_or_else(overflow)?;
        ncells.checked_mul(dim + 1).ok_or_else(overflow)?;
        nverts.checked_mul(dim).ok_or_else(overflow)?;

        let step = T::one() / T::from_count(n);
        let mut coords = Vec::with_capacity(nverts * dim);
        let mut boundary = Vec::with_capacity(nverts);
        let vid = |idx: &[usize]| -> usize { idx.iter().rev().fold(0, |acc, &i| acc * np + i) };
        let mut idx = vec![0usize; dim];
        for flat in 0..nverts {
            let mut rem = flat;
            for slot in idx.iter_mut() {
                *slot = rem % np;
                rem /= np;
            }
            for &i in &idx {
                coords.push(if i == n { T::one() } else { T::from_count(i) * step });
            }
            boundary.push(idx.iter().any(|&i| i == 0 || i == n));
        }

        let mut cells = Vec::with_capacity(ncells * (dim + 1));
        let mut bidx = vec![0usize; dim];
        for block in 0..nblocks {
            let mut rem = block;
            for slot in bidx.iter_mut() {
                *slot = rem % n;
                rem /= n;
            }
            if dim == 2 {
                let (i, j) = (bidx[0], bidx[1]);
                let v00 = vid(&[i, j]);
                let v10 = vid(&[i + 1, j]);
                let v01 = vid(&[i, j + 1]);
                let v11 = vid(&[i + 1, j + 1]);
                cells.extend_from_slice(&[v00, v10, v11]);
                cells.extend_from_slice(&[v00, v11, v01]);
            } else {
                for (p, path) in KUHN_PATHS.iter().enumerate() {
                    let mut corner = [bidx[0], bidx[1], bidx[2]];
                    let mut tet = [vid(&corner), 0, 0, 0];
                    for (s, &axis) in path.iter().enumerate() {
                        corner[axis] += 1;
                        tet[s + 1] = vid(&corner);
                    }
                    // odd permutations come out left-handed
                    if p == 1 || p == 2 || p == 5 {
                        tet.swap(2, 3);
                    }
                    cells.extend_from_slice(&tet);
                }
            }
        }
        let h = T::from_count(dim).sqrt() * step;
        Ok(Mesh { dim, level, segments: n, coords, cells, boundary, h })
    }

    /// Next level of the same family.
    pub fn refine_uniform(&self) -> Result<Self> {
        let next = self
            .level
            .checked_add(1)
            .ok_or_else(|| Error::Overflow("refinement level".into()))?;
        Mesh::unit(self.dim, next)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Segments per axis, `2^level`.
    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Maximum cell diameter.
    pub fn h(&self) -> T {
        self.h
    }

    pub fn num_vertices(&self) -> usize {
        self.boundary.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    /// Number of vertices not on the boundary.
    pub fn num_interior_vertices(&self) -> usize {
        self.boundary.iter().filter(|&&b| !b).count()
    }

    pub fn vertex(&self, v: usize) -> &[T] {
        &self.coords[v * self.dim..(v + 1) * self.dim]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn simplex(&self, c: usize) -> Simplex<T> {
        let mut verts = [[T::zero(); 3]; 4];
        for (k, &v) in self.cell(c).iter().enumerate() {
            verts[k][..self.dim].copy_from_slice(self.vertex(v));
        }
        Simplex { dim: self.dim, verts }
    }

    pub fn cell_volume(&self, c: usize) -> T {
        self.simplex(c).volume()
    }

    /// Ratio of the largest cell diameter to the smallest inscribed diameter.
    pub fn shape_regularity(&self) -> T {
        let mut dmax = T::zero();
        let mut rmin = T::infinity();
        for c in 0..self.num_cells() {
            let s = self.simplex(c);
            dmax = dmax.max(s.diameter());
            rmin = rmin.min(s.inscribed_diameter());
        }
        dmax / rmin
    }

    /// Finds the lowest-index cell containing `x` in its closure.
    pub fn locate(&self, x: &[T]) -> Result<CellLocation<T>> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!("point of dimension {} in a {}D mesh", x.len(), self.dim)));
        }
        if x.iter().any(|&c| !(c >= T::zero() && c <= T::one())) {
            return Err(Error::Domain(format!("point {:?} outside the closed unit cube", x)));
        }
        let n = self.segments;
        let eps = T::epsilon() * T::lit(64.0);
        let nt = T::from_count(n);
        let range = |c: T| -> (usize, usize) {
            let clampi = |v: T| -> usize {
                let f = v.floor();
                if f < T::zero() {
                    0
                } else {
                    f.to_usize().unwrap_or(n).min(n - 1)
                }
            };
            (clampi((c - eps) * nt), clampi((c + eps) * nt))
        };
        let ranges: Vec<(usize, usize)> = x.iter().map(|&c| range(c)).collect();
        let per_block = if self.dim == 2 { 2 } else { 6 };
        let mut candidates = Vec::new();
        let mut push_block = |b: usize| {
            for k in 0..per_block {
                candidates.push(b * per_block + k);
            }
        };
        if self.dim == 2 {
            for j in ranges[1].0..=ranges[1].1 {
                for i in ranges[0].0..=ranges[0].1 {
                    push_block(i + n * j);
                }
            }
        } else {
            for k in ranges[2].0..=ranges[2].1 {
                for j in ranges[1].0..=ranges[1].1 {
                    for i in ranges[0].0..=ranges[0].1 {
                        push_block(i + n * (j + n * k));
                    }
                }
            }
        }
        candidates.sort_unstable();
        let tol = T::epsilon() * T::lit(1024.0);
        for c in candidates {
            let mut lam = self.simplex(c).barycentric_of(x)?;
            if lam[..=self.dim].iter().all(|&l| l >= -tol) {
                let mut s = T::zero();
                for l in lam[..=self.dim].iter_mut() {
                    *l = l.max(T::zero());
                    s += *l;
                }
                for l in lam[..=self.dim].iter_mut() {
                    *l = *l / s;
                }
                return Ok(CellLocation { cell_index: c, barycentric: lam });
            }
        }
        Err(Error::Domain(format!("no cell contains {:?}", x)))
    }

    /// Plain-text dump: a header, one vertex per line, then one cell per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# dim {} level {}", self.dim, self.level)?;
        writeln!(out, "# vertices {}", self.num_vertices())?;
        for v in 0..self.num_vertices() {
            let line: Vec<String> = self.vertex(v).iter().map(|c| format!("{}", c)).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        writeln!(out, "# cells {}", self.num_cells())?;
        for c in 0..self.num_cells() {
            let line: Vec<String> = self.cell(c).iter().map(|i| i.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}
