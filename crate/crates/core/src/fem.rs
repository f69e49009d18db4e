//! P1 Lagrange and piecewise-constant spaces: assembly, loads, projections,
//! point evaluation and error norms.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{norm2, SparseRect, SparseSym, TripletBuilder};
use crate::mesh::{dist, Mesh};
use crate::quadrature::{adaptive_integrate, AdaptiveOptions, QuadRule, DEFAULT_MAX_DEPTH};
use crate::scalar::{factorial, Scalar};
use crate::weights::Weight;

/// Continuous piecewise-linear function, one coefficient per vertex.
#[derive(Clone, Debug)]
pub struct P1Function<T> {
    pub mesh: Arc<Mesh<T>>,
    pub coeffs: Vec<T>,
}

/// Piecewise-constant function, one coefficient per cell.
#[derive(Clone, Debug)]
pub struct PCFunction<T> {
    pub mesh: Arc<Mesh<T>>,
    pub coeffs: Vec<T>,
}

impl<T: Scalar> P1Function<T> {
    pub fn new(mesh: Arc<Mesh<T>>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != mesh.num_vertices() {
            return Err(Error::Domain(format!(
                "{} coefficients for {} vertices",
                coeffs.len(),
                mesh.num_vertices()
            )));
        }
        Ok(P1Function { mesh, coeffs })
    }

    pub fn zero(mesh: Arc<Mesh<T>>) -> Self {
        let n = mesh.num_vertices();
        P1Function { mesh, coeffs: vec![T::zero(); n] }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<Mesh<T>>, f: impl Fn(&[T]) -> T) -> Self {
        let coeffs = (0..mesh.num_vertices()).map(|v| f(mesh.vertex(v))).collect();
        P1Function { mesh, coeffs }
    }

    /// Value inside cell `c` at barycentric coordinates `lam`.
    #[inline]
    pub fn eval_in_cell(&self, c: usize, lam: &[T]) -> T {
        self.mesh.cell(c).iter().zip(lam).map(|(&v, &l)| l * self.coeffs[v]).sum()
    }

    /// Whether all boundary coefficients vanish.
    pub fn has_zero_trace(&self) -> bool {
        self.mesh.boundary_mask().iter().zip(&self.coeffs).all(|(&b, &c)| !b || c == T::zero())
    }
}

impl<T: Scalar> PCFunction<T> {
    pub fn new(mesh: Arc<Mesh<T>>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != mesh.num_cells() {
            return Err(Error::Domain(format!("{} coefficients for {} cells", coeffs.len(), mesh.num_cells())));
        }
        Ok(PCFunction { mesh, coeffs })
    }

    pub fn constant(mesh: Arc<Mesh<T>>, value: T) -> Self {
        let n = mesh.num_cells();
        PCFunction { mesh, coeffs: vec![value; n] }
    }
}

/// Diffusion coefficient of the form `c(x) * Identity`.
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient<T> {
    Unit,
    Constant(T),
    Weighted(Weight<T>),
}

/// How cell integrals of non-polynomial integrands are evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum QuadPolicy<T> {
    /// Default fixed rule on every cell.
    Fixed,
    /// Adaptive integration on every cell.
    Adaptive { rtol: T },
    /// Adaptive integration on cells close to one of `points` (within two
    /// cell diameters of the centroid), fixed rule elsewhere.
    Hybrid { points: Vec<Vec<T>>, rtol: T },
}

impl<T: Scalar> QuadPolicy<T> {
    /// Adaptive near the singular points of `w`, fixed elsewhere.
    pub fn near_singularities(w: &Weight<T>, rtol: T) -> Self {
        QuadPolicy::Hybrid { points: w.singular_points(), rtol }
    }

    fn adaptive_rtol(&self, mesh: &Mesh<T>, c: usize) -> Option<T> {
        match self {
            QuadPolicy::Fixed => None,
            QuadPolicy::Adaptive { rtol } => Some(*rtol),
            QuadPolicy::Hybrid { points, rtol } => {
                let s = mesh.simplex(c);
                let mut centroid = [T::zero(); 3];
                let share = T::one() / T::from_count(s.dim + 1);
                for v in &s.verts[..=s.dim] {
                    for r in 0..s.dim {
                        centroid[r] += v[r] * share;
                    }
                }
                let reach = T::lit(2.0) * s.diameter();
                points.iter().any(|z| dist(&centroid[..s.dim], z) <= reach).then_some(*rtol)
            }
        }
    }
}

/// Vector-valued integral over cell `c`; the integrand receives the physical
/// point and the barycentric coordinates within the cell.
pub fn integrate_cell_vec<T: Scalar>(
    mesh: &Mesh<T>,
    c: usize,
    rule: &QuadRule<T>,
    policy: &QuadPolicy<T>,
    ncomp: usize,
    mut integrand: impl FnMut(&[T], &[T], &mut [T]),
    out: &mut [T],
) -> Result<()> {
    let s = mesh.simplex(c);
    match policy.adaptive_rtol(mesh, c) {
        Some(rtol) => adaptive_integrate(&s, rule, ncomp, integrand, AdaptiveOptions { rtol, max_depth: DEFAULT_MAX_DEPTH }, out),
        None => {
            let jac = s.volume() * factorial::<T>(s.dim);
            let mut scratch = vec![T::zero(); ncomp];
            for o in out.iter_mut() {
                *o = T::zero();
            }
            for (p, &w) in rule.points.iter().zip(&rule.weights) {
                let x = s.point_at(p);
                integrand(&x[..s.dim], &p[..=s.dim], &mut scratch);
                for (o, &v) in out.iter_mut().zip(&scratch) {
                    *o += w * v;
                }
            }
            for o in out.iter_mut() {
                *o *= jac;
            }
            Ok(())
        }
    }
}

/// Local stiffness matrix `vol * grad(lam_i) . grad(lam_j)` of cell `c`.
pub fn local_stiffness<T: Scalar>(mesh: &Mesh<T>, c: usize) -> Result<[[T; 4]; 4]> {
    let s = mesh.simplex(c);
    let g = s.bary_gradients()?;
    let vol = s.volume();
    let mut k = [[T::zero(); 4]; 4];
    for i in 0..=s.dim {
        for j in 0..=s.dim {
            k[i][j] = vol * (0..s.dim).map(|r| g[i][r] * g[j][r]).sum::<T>();
        }
    }
    Ok(k)
}

/// Exact unit-weight local mass matrix `vol/((n+1)(n+2)) (1 + delta_ij)`.
pub fn local_mass<T: Scalar>(mesh: &Mesh<T>, c: usize) -> [[T; 4]; 4] {
    let n = mesh.dim();
    let base = mesh.cell_volume(c) / T::from_count((n + 1) * (n + 2));
    let mut m = [[T::zero(); 4]; 4];
    for (i, row) in m.iter_mut().enumerate().take(n + 1) {
        for (j, e) in row.iter_mut().enumerate().take(n + 1) {
            *e = if i == j { base + base } else { base };
        }
    }
    m
}

/// Full (boundary rows included) stiffness matrix `∫ c ∇φ_i·∇φ_j`.
pub fn assemble_stiffness<T: Scalar>(mesh: &Mesh<T>, coef: &Coefficient<T>, policy: &QuadPolicy<T>) -> Result<SparseSym<T>> {
    let np = mesh.dim() + 1;
    let rule = QuadRule::default_for(mesh.dim())?;
    let mut b = TripletBuilder::with_capacity(mesh.num_vertices(), mesh.num_cells() * np * np);
    for c in 0..mesh.num_cells() {
        let k = local_stiffness(mesh, c)?;
        let scale = match coef {
            Coefficient::Unit => T::one(),
            Coefficient::Constant(v) => *v,
            Coefficient::Weighted(w) if w.is_unit() => T::one(),
            Coefficient::Weighted(w) => {
                let mut acc = [T::zero()];
                integrate_cell_vec(mesh, c, &rule, policy, 1, |x, _, o| o[0] = w.value(x), &mut acc)?;
                acc[0] / mesh.cell_volume(c)
            }
        };
        let cell = mesh.cell(c);
        for i in 0..np {
            for j in 0..np {
                b.add(cell[i], cell[j], scale * k[i][j]);
            }
        }
    }
    b.build()
}

/// Full mass matrix `∫ w φ_i φ_j`.
pub fn assemble_mass<T: Scalar>(mesh: &Mesh<T>, w: &Weight<T>, policy: &QuadPolicy<T>) -> Result<SparseSym<T>> {
    let np = mesh.dim() + 1;
    let mut b = TripletBuilder::with_capacity(mesh.num_vertices(), mesh.num_cells() * np * np);
    let rule = QuadRule::default_for(mesh.dim())?;
    let pairs: Vec<(usize, usize)> = (0..np).flat_map(|i| (i..np).map(move |j| (i, j))).collect();
    let mut vals = vec![T::zero(); pairs.len()];
    for c in 0..mesh.num_cells() {
        let local = if w.is_unit() {
            local_mass(mesh, c)
        } else {
            integrate_cell_vec(
                mesh,
                c,
                &rule,
                policy,
                pairs.len(),
                |x, lam, o| {
                    let wx = w.value(x);
                    for (k, &(i, j)) in pairs.iter().enumerate() {
                        o[k] = wx * lam[i] * lam[j];
                    }
                },
                &mut vals,
            )?;
            let mut m = [[T::zero(); 4]; 4];
            for (k, &(i, j)) in pairs.iter().enumerate() {
                m[i][j] = vals[k];
                m[j][i] = vals[k];
            }
            m
        };
        let cell = mesh.cell(c);
        for i in 0..np {
            for j in 0..np {
                b.add(cell[i], cell[j], local[i][j]);
            }
        }
    }
    b.build()
}

/// `b_i = ∫ f φ_i` with the default fixed rule.
pub fn load_function<T: Scalar>(mesh: &Mesh<T>, f: impl Fn(&[T]) -> T) -> Result<Vec<T>> {
    load_weighted(mesh, f, &Weight::unit(mesh.dim()), &QuadPolicy::Fixed)
}

/// `b_i = ∫ f w φ_i` under the given integration policy.
pub fn load_weighted<T: Scalar>(mesh: &Mesh<T>, f: impl Fn(&[T]) -> T, w: &Weight<T>, policy: &QuadPolicy<T>) -> Result<Vec<T>> {
    let np = mesh.dim() + 1;
    let rule = QuadRule::default_for(mesh.dim())?;
    let unit = w.is_unit();
    let mut b = vec![T::zero(); mesh.num_vertices()];
    let mut vals = [T::zero(); 4];
    for c in 0..mesh.num_cells() {
        integrate_cell_vec(
            mesh,
            c,
            &rule,
            policy,
            np,
            |x, lam, o| {
                let v = if unit { f(x) } else { f(x) * w.value(x) };
                for (oi, &l) in o.iter_mut().zip(lam) {
                    *oi = v * l;
                }
            },
            &mut vals[..np],
        )?;
        for (&v, &val) in mesh.cell(c).iter().zip(&vals[..np]) {
            b[v] += val;
        }
    }
    Ok(b)
}

/// `b_i = ∫ u φ_i` for a piecewise-constant `u` (exact).
pub fn load_pc<T: Scalar>(u: &PCFunction<T>) -> Vec<T> {
    let mesh = &u.mesh;
    let share = T::one() / T::from_count(mesh.dim() + 1);
    let mut b = vec![T::zero(); mesh.num_vertices()];
    for (c, &uc) in u.coeffs.iter().enumerate() {
        let v = uc * mesh.cell_volume(c) * share;
        for &i in mesh.cell(c) {
            b[i] += v;
        }
    }
    b
}

/// `b_i = Σ_k coeffs_k φ_i(z_k)` for interior points `z_k`.
pub fn load_dirac<T: Scalar>(mesh: &Mesh<T>, points: &[Vec<T>], coeffs: &[T]) -> Result<Vec<T>> {
    if points.len() != coeffs.len() {
        return Err(Error::Domain(format!("{} points but {} coefficients", points.len(), coeffs.len())));
    }
    let mut b = vec![T::zero(); mesh.num_vertices()];
    for (z, &a) in points.iter().zip(coeffs) {
        if z.len() != mesh.dim() || z.iter().any(|&c| !(c > T::zero() && c < T::one())) {
            return Err(Error::Domain(format!("point {:?} is not interior to the unit cube", z)));
        }
        let loc = mesh.locate(z)?;
        for (&v, &l) in mesh.cell(loc.cell_index).iter().zip(&loc.barycentric) {
            b[v] += a * l;
        }
    }
    Ok(b)
}

/// Value of `u` at `x` (closed domain).
pub fn point_eval<T: Scalar>(u: &P1Function<T>, x: &[T]) -> Result<T> {
    let loc = u.mesh.locate(x)?;
    Ok(u.eval_in_cell(loc.cell_index, &loc.barycentric))
}

/// Cellwise `w⁻¹`-weighted averages `∫_T w⁻¹ f / ∫_T w⁻¹`.
pub fn project_pc<T: Scalar>(
    mesh: &Arc<Mesh<T>>,
    f: impl Fn(&[T]) -> T,
    w: &Weight<T>,
    policy: &QuadPolicy<T>,
) -> Result<PCFunction<T>> {
    let rule = QuadRule::default_for(mesh.dim())?;
    let inv = w.clone().reciprocal();
    let unit = w.is_unit();
    let mut coeffs = Vec::with_capacity(mesh.num_cells());
    let mut vals = [T::zero(); 2];
    for c in 0..mesh.num_cells() {
        integrate_cell_vec(
            mesh,
            c,
            &rule,
            policy,
            2,
            |x, _, o| {
                let wi = if unit { T::one() } else { inv.value(x) };
                o[0] = wi * f(x);
                o[1] = wi;
            },
            &mut vals,
        )?;
        coeffs.push(vals[0] / vals[1]);
    }
    Ok(PCFunction { mesh: Arc::clone(mesh), coeffs })
}

/// Discrete function whose error is being measured.
#[derive(Clone, Copy, Debug)]
pub enum Discrete<'a, T> {
    P1(&'a P1Function<T>),
    PC(&'a PCFunction<T>),
}

impl<'a, T: Scalar> Discrete<'a, T> {
    fn mesh(&self) -> &'a Arc<Mesh<T>> {
        match self {
            Discrete::P1(u) => &u.mesh,
            Discrete::PC(u) => &u.mesh,
        }
    }

    #[inline]
    fn eval(&self, c: usize, lam: &[T]) -> T {
        match self {
            Discrete::P1(u) => u.eval_in_cell(c, lam),
            Discrete::PC(u) => u.coeffs[c],
        }
    }
}

impl<'a, T> From<&'a P1Function<T>> for Discrete<'a, T> {
    fn from(u: &'a P1Function<T>) -> Self {
        Discrete::P1(u)
    }
}

impl<'a, T> From<&'a PCFunction<T>> for Discrete<'a, T> {
    fn from(u: &'a PCFunction<T>) -> Self {
        Discrete::PC(u)
    }
}

/// Error norm selector.
#[derive(Clone, Debug, PartialEq)]
pub enum NormKind<T> {
    L2,
    WeightedL2(Weight<T>),
    /// Maximum over quadrature nodes and vertices of every cell.
    Linf,
    /// As `Linf`, skipping samples within `radius` of any of `points`.
    LinfExcluding { points: Vec<Vec<T>>, radius: T },
}

/// Norm of `discrete - exact`.
pub fn error_norm<'a, T: Scalar>(
    discrete: impl Into<Discrete<'a, T>>,
    exact: impl Fn(&[T]) -> T,
    kind: &NormKind<T>,
    policy: &QuadPolicy<T>,
) -> Result<T>
where
    T: 'a,
{
    let u = discrete.into();
    let mesh = u.mesh();
    let rule = QuadRule::default_for(mesh.dim())?;
    match kind {
        NormKind::L2 | NormKind::WeightedL2(_) => {
            let w = match kind {
                NormKind::WeightedL2(w) if !w.is_unit() => Some(w),
                _ => None,
            };
            let mut total = T::zero();
            let mut acc = [T::zero()];
            for c in 0..mesh.num_cells() {
                integrate_cell_vec(
                    mesh,
                    c,
                    &rule,
                    policy,
                    1,
                    |x, lam, o| {
                        let d = u.eval(c, lam) - exact(x);
                        o[0] = match w {
                            Some(w) => w.value(x) * d * d,
                            None => d * d,
                        };
                    },
                    &mut acc,
                )?;
                total += acc[0];
            }
            Ok(total.sqrt())
        }
        NormKind::Linf | NormKind::LinfExcluding { .. } => {
            let (points, radius): (&[Vec<T>], T) = match kind {
                NormKind::LinfExcluding { points, radius } => (points, *radius),
                _ => (&[], T::zero()),
            };
            let n = mesh.dim();
            let mut vertex_lams = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let mut lam = [T::zero(); 4];
                lam[k] = T::one();
                vertex_lams.push(lam);
            }
            let mut best = T::zero();
            for c in 0..mesh.num_cells() {
                let s = mesh.simplex(c);
                for lam in rule.points.iter().chain(&vertex_lams) {
                    let x = s.point_at(lam);
                    let x = &x[..n];
                    if points.iter().any(|z| dist(x, z) < radius) {
                        continue;
                    }
                    let d = (u.eval(c, &lam[..=n]) - exact(x)).abs();
                    if d > best || d.is_nan() {
                        best = d;
                    }
                }
            }
            Ok(best)
        }
    }
}

/// Dirichlet elimination: the interior block of a full symmetric matrix and
/// its coupling to boundary columns.
#[derive(Clone, Debug)]
pub struct DirichletSystem<T> {
    order: usize,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    k_ii: SparseSym<T>,
    k_ib: SparseRect<T>,
}

impl<T: Scalar> DirichletSystem<T> {
    pub fn new(full: &SparseSym<T>, is_boundary: &[bool]) -> Result<Self> {
        let order = full.order();
        if is_boundary.len() != order {
            return Err(Error::Domain("boundary mask length does not match the matrix".into()));
        }
        let interior: Vec<usize> = (0..order).filter(|&i| !is_boundary[i]).collect();
        let boundary: Vec<usize> = (0..order).filter(|&i| is_boundary[i]).collect();
        let mut imap = vec![None; order];
        let mut bmap = vec![None; order];
        for (k, &i) in interior.iter().enumerate() {
            imap[i] = Some(k);
        }
        for (k, &i) in boundary.iter().enumerate() {
            bmap[i] = Some(k);
        }
        let mut b = TripletBuilder::new(interior.len());
        for (r, &i) in interior.iter().enumerate() {
            for (c, v) in full.row(i) {
                if let Some(cc) = imap[c] {
                    b.add(r, cc, v);
                }
            }
        }
        let k_ii = b.build()?;
        let k_ib = full.submatrix(&interior, &bmap, boundary.len());
        Ok(DirichletSystem { order, interior, boundary, k_ii, k_ib })
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn reduced(&self) -> &SparseSym<T> {
        &self.k_ii
    }

    fn reduced_rhs(&self, rhs: &[T], g: Option<&[T]>) -> Vec<T> {
        let mut r: Vec<T> = self.interior.iter().map(|&i| rhs[i]).collect();
        if let Some(g) = g {
            let gb: Vec<T> = self.boundary.iter().map(|&i| g[i]).collect();
            for (ri, c) in r.iter_mut().zip(self.k_ib.matvec(&gb)) {
                *ri -= c;
            }
        }
        r
    }

    /// Solves with Dirichlet values taken from the boundary entries of `g`
    /// (zero when absent); returns the full vertex vector.
    pub fn solve(&self, rhs: &[T], g: Option<&[T]>, warm: Option<&[T]>, rtol: T) -> Result<Vec<T>> {
        if rhs.len() != self.order || g.is_some_and(|g| g.len() != self.order) || warm.is_some_and(|w| w.len() != self.order) {
            return Err(Error::Domain("vector length does not match the system".into()));
        }
        let r = self.reduced_rhs(rhs, g);
        let x0: Option<Vec<T>> = warm.map(|w| self.interior.iter().map(|&i| w[i]).collect());
        let sol = self.k_ii.solve_spd_from(&r, x0.as_deref(), rtol)?;
        let mut full = vec![T::zero(); self.order];
        if let Some(g) = g {
            for &i in &self.boundary {
                full[i] = g[i];
            }
        }
        for (&i, &v) in self.interior.iter().zip(&sol.x) {
            full[i] = v;
        }
        Ok(full)
    }

    /// Relative residual of the interior equations for a full vector `x`.
    pub fn residual(&self, x: &[T], rhs: &[T]) -> Result<T> {
        let r = self.reduced_rhs(rhs, Some(x));
        let xi: Vec<T> = self.interior.iter().map(|&i| x[i]).collect();
        let ax = self.k_ii.matvec(&xi)?;
        let diff: Vec<T> = ax.iter().zip(&r).map(|(&a, &b)| a - b).collect();
        let scale = norm2(&r);
        Ok(if scale > T::zero() { norm2(&diff) / scale } else { norm2(&diff) })
    }
}

/// Ratio `‖v‖_{L²(w)} / ‖∇v‖_{L²(w)}` from assembled weighted mass and
/// stiffness matrices; bounded uniformly in `h` when a Poincaré inequality holds.
pub fn poincare_ratio<T: Scalar>(mass: &SparseSym<T>, stiffness: &SparseSym<T>, v: &[T]) -> Result<T> {
    let num = mass.energy(v)?;
    let den = stiffness.energy(v)?;
    if !(den > T::zero()) {
        return Err(Error::Domain("zero gradient energy".into()));
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mesh(dim: usize, level: usize) -> Arc<Mesh<f64>> {
        Arc::new(Mesh::unit(dim, level).unwrap())
    }

    fn center() -> usize {
        // interior vertex of the level-1 square mesh
        1 + 3
    }

    #[test]
    fn reference_triangle_local_matrices() {
        let m = mesh(2, 0);
        // cell 0 is (0,0),(1,0),(1,1); its local stiffness mirrors the reference triangle
        let k = local_stiffness(&m, 0).unwrap();
        let expect = [[0.5, -0.5, 0.0], [-0.5, 1.0, -0.5], [0.0, -0.5, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expect[i][j]).abs() < 1e-14);
            }
        }
        let ms = local_mass(&m, 0);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 } else { 1.0 } * 0.5 / 12.0;
                assert!((ms[i][j] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn interior_diagonal_of_level_one_mesh() {
        let m = mesh(2, 1);
        let k = assemble_stiffness(&m, &Coefficient::Unit, &QuadPolicy::Fixed).unwrap();
        assert!((k.get(center(), center()) - 4.0).abs() < 1e-14);
        let ones = vec![1.0; m.num_vertices()];
        assert!(norm2(&k.matvec(&ones).unwrap()) < 1e-12);
        let k2 = assemble_stiffness(&m, &Coefficient::Constant(2.0), &QuadPolicy::Fixed).unwrap();
        for r in 0..k.order() {
            for (c, v) in k.row(r) {
                assert_eq!(k2.get(r, c), 2.0 * v);
            }
        }
        let flat = Weight::power(vec![0.5, 0.5], 0.0).unwrap();
        let kw = assemble_stiffness(&m, &Coefficient::Weighted(flat), &QuadPolicy::Adaptive { rtol: 1e-12 }).unwrap();
        assert!((kw.get(center(), center()) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_interior_dof_solve_matches_hand() {
        let m = mesh(2, 1);
        let k = assemble_stiffness(&m, &Coefficient::Unit, &QuadPolicy::Fixed).unwrap();
        let sys = DirichletSystem::new(&k, m.boundary_mask()).unwrap();
        assert_eq!(sys.num_interior(), 1);
        let b = load_function(&m, |_| 1.0).unwrap();
        let x = sys.solve(&b, None, None, 1e-12).unwrap();
        assert!((x[center()] - b[center()] / 4.0).abs() < 1e-15);
    }

    #[test]
    fn unit_mass_partition_of_unity() {
        let m = mesh(3, 2);
        let mm = assemble_mass(&m, &Weight::unit(3), &QuadPolicy::Fixed).unwrap();
        let ones = vec![1.0; m.num_vertices()];
        assert_relative_eq!(mm.energy(&ones).unwrap(), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn weighted_mass_matches_reference() {
        // cell 0 of the level-1 mesh is (0,0),(0.5,0),(0.5,0.5)
        let m = mesh(2, 1);
        let w = Weight::power(vec![0.0, 0.0], 0.5).unwrap();
        let mm = assemble_mass(&m, &w, &QuadPolicy::near_singularities(&w, 1e-12)).unwrap();
        let cell = m.cell(0).to_vec();
        assert_eq!(m.vertex(cell[1]), &[0.5, 0.0]);
        let reference = [
            [0.00960560922510566572, 0.00581852867855108811, 0.00618848285283099404],
            [0.00581852867855108811, 0.0133932731524069627, 0.00697157722252184565],
            [0.00618848285283099404, 0.00697157722252184565, 0.0146881127623866335],
        ];
        // neighbouring cells add to the global entry; check the local matrix below
        assert!(mm.get(cell[1], cell[1]) > reference[1][1]);
        let rule = QuadRule::default_for(2).unwrap();
        let mut vals = [0.0; 6];
        integrate_cell_vec(&m, 0, &rule, &QuadPolicy::Adaptive { rtol: 1e-12 }, 6, |x, lam, o| {
            let wx = w.value(x);
            let mut k = 0;
            for i in 0..3 {
                for j in i..3 {
                    o[k] = wx * lam[i] * lam[j];
                    k += 1;
                }
            }
        }, &mut vals)
        .unwrap();
        let mut k = 0;
        for i in 0..3 {
            for j in i..3 {
                assert!((vals[k] - reference[i][j]).abs() < 1e-10, "{i}{j}: {}", vals[k]);
                k += 1;
            }
        }
    }

    #[test]
    fn load_examples() {
        let m = mesh(2, 1);
        let b = load_function(&m, |_| 1.0).unwrap();
        // interior vertex touches six triangles of area 1/8
        assert!((b[center()] - 6.0 * 0.125 / 3.0).abs() < 1e-14);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(load_function(&m, |_| 0.0).unwrap().iter().all(|&v| v == 0.0));
        let mm = assemble_mass(&m, &Weight::unit(2), &QuadPolicy::Fixed).unwrap();
        let j = center();
        let hat = P1Function::interpolate(Arc::clone(&m), |x| if x == [0.5, 0.5] { 1.0 } else { 0.0 });
        let bj = load_function(&m, |x| point_eval(&hat, x).unwrap()).unwrap();
        for i in 0..m.num_vertices() {
            assert!((bj[i] - mm.get(i, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn dirac_loads() {
        let m = mesh(2, 2);
        let b = load_dirac(&m, &[vec![0.5, 0.5]], &[1.0]).unwrap();
        let v = 2 + 5 * 2;
        for (i, &x) in b.iter().enumerate() {
            assert_eq!(x, if i == v { 1.0 } else { 0.0 });
        }
        let s = m.simplex(7);
        let bc = s.point_at(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let b = load_dirac(&m, &[bc[..2].to_vec()], &[3.0]).unwrap();
        for &vtx in m.cell(7) {
            assert!((b[vtx] - 1.0).abs() < 1e-14);
        }
        assert!((b.iter().sum::<f64>() - 3.0).abs() < 1e-14);
        let p = vec![0.3, 0.1];
        let q = vec![0.31, 0.12];
        let both = load_dirac(&m, &[p.clone(), q.clone()], &[1.0, -1.0]).unwrap();
        let bp = load_dirac(&m, &[p], &[1.0]).unwrap();
        let bq = load_dirac(&m, &[q], &[1.0]).unwrap();
        for i in 0..both.len() {
            assert!((both[i] - (bp[i] - bq[i])).abs() < 1e-15);
        }
        assert!(matches!(load_dirac(&m, &[vec![0.0, 0.5]], &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(load_dirac(&m, &[vec![1.5, 0.5]], &[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn point_evaluation() {
        let m = mesh(3, 2);
        let lin = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2];
        let u = P1Function::interpolate(Arc::clone(&m), lin);
        for x in [[0.13, 0.77, 0.41], [0.5, 0.5, 0.5], [1.0, 0.0, 0.3]] {
            assert!((point_eval(&u, &x).unwrap() - lin(&x)).abs() < 1e-14);
        }
        assert_eq!(point_eval(&u, m.vertex(17)).unwrap(), u.coeffs[17]);
        assert!(matches!(point_eval(&u, &[1.1, 0.5, 0.5]), Err(Error::Domain(_))));
        // shared facet: both neighbours agree
        let m2 = mesh(2, 2);
        let u2 = P1Function::interpolate(Arc::clone(&m2), |x| (7.0 * x[0]).sin() + x[1] * x[1]);
        let x = [0.3, 0.3];
        let a = u2.eval_in_cell(4, &m2.simplex(4).barycentric_of(&x).unwrap());
        let b = u2.eval_in_cell(5, &m2.simplex(5).barycentric_of(&x).unwrap());
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn projections() {
        let m = mesh(2, 2);
        let unit = Weight::unit(2);
        let p = project_pc(&m, |x| 3.0 * x[0] - x[1], &unit, &QuadPolicy::Fixed).unwrap();
        for c in 0..m.num_cells() {
            let s = m.simplex(c);
            let bc = s.point_at(&[1.0 / 3.0; 3]);
            assert!((p.coeffs[c] - (3.0 * bc[0] - bc[1])).abs() < 1e-13);
        }
        let w = Weight::power(vec![0.5, 0.5], 0.5).unwrap();
        let pol = QuadPolicy::near_singularities(&w, 1e-12);
        let p = project_pc(&m, |_| 2.5, &w, &pol).unwrap();
        assert!(p.coeffs.iter().all(|&v| (v - 2.5).abs() < 1e-12));

        let m1 = mesh(2, 1);
        let w0 = Weight::power(vec![0.0, 0.0], 0.5).unwrap();
        let p = project_pc(&m1, |x| x[0], &w0, &QuadPolicy::Adaptive { rtol: 1e-12 }).unwrap();
        assert!((p.coeffs[0] - 0.3).abs() < 1e-10);
    }

    #[test]
    fn error_norm_examples() {
        let m = mesh(2, 3);
        let lin = |x: &[f64]| 0.2 + x[0] - 3.0 * x[1];
        let u = P1Function::interpolate(Arc::clone(&m), lin);
        assert!(error_norm(&u, lin, &NormKind::L2, &QuadPolicy::Fixed).unwrap() < 1e-12);
        let z = P1Function::zero(Arc::clone(&m));
        assert!((error_norm(&z, |_| 1.0, &NormKind::L2, &QuadPolicy::Fixed).unwrap() - 1.0).abs() < 1e-13);
        assert_eq!(error_norm(&z, |x| x[0], &NormKind::Linf, &QuadPolicy::Fixed).unwrap(), 1.0);
        let pc = PCFunction::constant(Arc::clone(&m), 0.0);
        let w = Weight::power(vec![0.5, 0.5], 0.5).unwrap();
        let wl2 = error_norm(&pc, |_| 1.0, &NormKind::WeightedL2(w.clone()), &QuadPolicy::near_singularities(&w, 1e-12)).unwrap();
        // ∫ |x - c|^{1/2} over the unit square, by symmetry a quarter-square integral
        assert!((wl2 * wl2 - 0.855816118983034561 / 2f64.sqrt()).abs() < 1e-9);
        let excl = NormKind::LinfExcluding { points: vec![vec![1.0, 1.0]], radius: 0.3 };
        assert!(error_norm(&z, |x| x[0] * x[1], &excl, &QuadPolicy::Fixed).unwrap() < 1.0);
    }

    #[test]
    fn dirichlet_lifting_reproduces_harmonic() {
        let m = mesh(2, 3);
        let k = assemble_stiffness(&m, &Coefficient::Unit, &QuadPolicy::Fixed).unwrap();
        let sys = DirichletSystem::new(&k, m.boundary_mask()).unwrap();
        let rhs = vec![0.0; m.num_vertices()];
        let lin = P1Function::interpolate(Arc::clone(&m), |x| 1.0 + x[0] - 2.0 * x[1]);
        let y = sys.solve(&rhs, Some(&lin.coeffs), None, 1e-13).unwrap();
        for (a, b) in y.iter().zip(&lin.coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(sys.residual(&y, &rhs).unwrap() < 1e-10);
    }

    #[test]
    fn poincare_ratio_bounded_under_refinement() {
        let w = Weight::power(vec![0.5, 0.5], 0.5).unwrap();
        for weight in [Weight::unit(2), w] {
            let pol = QuadPolicy::near_singularities(&weight, 1e-10);
            let mut worst: f64 = 0.0;
            for level in 3..=4 {
                let m = mesh(2, level);
                let mm = assemble_mass(&m, &weight, &pol).unwrap();
                let coef = if weight.is_unit() { Coefficient::Unit } else { Coefficient::Weighted(weight.clone()) };
                let kk = assemble_stiffness(&m, &coef, &pol).unwrap();
                let v: Vec<f64> = (0..m.num_vertices())
                    .map(|i| if m.is_boundary(i) { 0.0 } else { ((i * 37) % 17) as f64 / 17.0 })
                    .collect();
                worst = worst.max(poincare_ratio(&mm, &kk, &v).unwrap());
            }
            assert!(worst < 1.0 / std::f64::consts::PI * 1.5);
        }
    }
}
