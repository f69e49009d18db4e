//! Discrete optimality systems for the three control problems, a primal-dual
//! active-set solver, and a projected-gradient oracle.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_mass, assemble_stiffness, integrate_cell_vec, load_dirac, load_weighted, Coefficient, DirichletSystem,
    P1Function, PCFunction, QuadPolicy,
};
use crate::linalg::{dot, SparseSym};
use crate::mesh::{CellLocation, Mesh};
use crate::quadrature::QuadRule;
use crate::weights::Weight;

/// Scalar field on the domain.
pub type Field = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Wraps a closure as a [`Field`].
pub fn field(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Field {
    Arc::new(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    /// Distributed control, state operator `-div(ω ∇·)`, weighted tracking.
    WeightedElliptic,
    /// Distributed control, tracking of point values.
    PointObservation,
    /// Finitely many point-source controls, distributed tracking.
    PointSource,
}

/// Kind-specific observation data.
#[derive(Clone)]
pub enum ProblemData {
    WeightedElliptic { weight: Weight<f64>, desired: Field },
    PointObservation { points: Vec<Vec<f64>>, targets: Vec<f64> },
    PointSource { points: Vec<Vec<f64>>, desired: Field },
}

impl fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemData::WeightedElliptic { weight, .. } => f.debug_struct("WeightedElliptic").field("weight", weight).finish(),
            ProblemData::PointObservation { points, targets } => {
                f.debug_struct("PointObservation").field("points", points).field("targets", targets).finish()
            }
            ProblemData::PointSource { points, .. } => f.debug_struct("PointSource").field("points", points).finish(),
        }
    }
}

/// Box constraints on the control.
#[derive(Clone, Debug, PartialEq)]
pub enum Bounds {
    Uniform { lower: f64, upper: f64 },
    PerComponent { lower: Vec<f64>, upper: Vec<f64> },
}

/// A control problem independent of the mesh.
#[derive(Clone)]
pub struct ControlProblem {
    pub data: ProblemData,
    pub lambda: f64,
    pub bounds: Bounds,
    /// Extra right-hand side of the state equation.
    pub forcing: Option<Field>,
    /// Dirichlet data of the state (zero when absent).
    pub state_bc: Option<Field>,
    /// Dirichlet data of the adjoint (zero when absent).
    pub adjoint_bc: Option<Field>,
    /// Points near which the data fields are singular or kinked; integrals
    /// of data on nearby cells use adaptive quadrature.
    pub singular_points: Vec<Vec<f64>>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("data", &self.data)
            .field("lambda", &self.lambda)
            .field("bounds", &self.bounds)
            .field("forcing", &self.forcing.is_some())
            .field("state_bc", &self.state_bc.is_some())
            .field("adjoint_bc", &self.adjoint_bc.is_some())
            .finish()
    }
}

impl ControlProblem {
    pub fn kind(&self) -> ProblemKind {
        match self.data {
            ProblemData::WeightedElliptic { .. } => ProblemKind::WeightedElliptic,
            ProblemData::PointObservation { .. } => ProblemKind::PointObservation,
            ProblemData::PointSource { .. } => ProblemKind::PointSource,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.data {
            ProblemData::WeightedElliptic { weight, .. } => weight.dim(),
            ProblemData::PointObservation { points, .. } | ProblemData::PointSource { points, .. } => {
                points.first().map_or(0, Vec::len)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Admissibility(format!("regularization {} must be positive", self.lambda)));
        }
        let check_points = |points: &[Vec<f64>]| -> Result<()> {
            if points.is_empty() {
                return Err(Error::Admissibility("empty point set".into()));
            }
            for z in points {
                if z.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
                    return Err(Error::Admissibility(format!("point {:?} is not interior", z)));
                }
            }
            Ok(())
        };
        match &self.data {
            ProblemData::WeightedElliptic { .. } => {}
            ProblemData::PointObservation { points, targets } => {
                check_points(points)?;
                if targets.len() != points.len() {
                    return Err(Error::Admissibility("one target per observation point is required".into()));
                }
            }
            ProblemData::PointSource { points, .. } => check_points(points)?,
        }
        let bad = |a: f64, b: f64| !(a <= b) || !a.is_finite() || !b.is_finite();
        match &self.bounds {
            Bounds::Uniform { lower, upper } => {
                if bad(*lower, *upper) {
                    return Err(Error::Admissibility(format!("bounds [{lower}, {upper}]")));
                }
            }
            Bounds::PerComponent { lower, upper } => {
                if lower.len() != upper.len() || lower.iter().zip(upper).any(|(&a, &b)| bad(a, b)) {
                    return Err(Error::Admissibility("per-component bounds must satisfy lower <= upper".into()));
                }
            }
        }
        Ok(())
    }

    /// Assembles the discrete problem on `mesh`.
    pub fn instantiate(&self, mesh: Arc<Mesh<f64>>, opts: SolverOptions) -> Result<ProblemInstance> {
        ProblemInstance::new(self.clone(), mesh, opts)
    }
}

/// Tolerances of the linear and nonlinear solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub linear_rtol: f64,
    pub quad_rtol: f64,
    /// Control-update tolerance of PDAS and the oracle.
    pub tol: f64,
    pub max_iter: usize,
    pub inner_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { linear_rtol: 1e-12, quad_rtol: 1e-10, tol: 1e-10, max_iter: 100, inner_max_iter: 10_000 }
    }
}

/// Discrete control: cellwise constant or one value per source point.
#[derive(Clone, Debug)]
pub enum ControlVector {
    Cells(PCFunction<f64>),
    Points(Vec<f64>),
}

impl ControlVector {
    pub fn values(&self) -> &[f64] {
        match self {
            ControlVector::Cells(u) => &u.coeffs,
            ControlVector::Points(v) => v,
        }
    }
}

/// Output of [`ProblemInstance::pdas_solve`].
#[derive(Clone, Debug)]
pub struct PdasResult {
    pub control: ControlVector,
    pub state: P1Function<f64>,
    pub adjoint: P1Function<f64>,
    pub iterations: usize,
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
    /// Reduced cost after each outer iteration.
    pub cost_history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Inactive,
    Lower,
    Upper,
}

/// A control problem assembled on a mesh.
pub struct ProblemInstance {
    problem: ControlProblem,
    mesh: Arc<Mesh<f64>>,
    opts: SolverOptions,
    system: DirichletSystem<f64>,
    /// Tracking mass matrix (weighted for the weighted problem).
    mass: Option<SparseSym<f64>>,
    /// `∫ w y_d φ_i`.
    desired_load: Vec<f64>,
    /// `∫ w y_d²`.
    desired_sq: f64,
    forcing_load: Vec<f64>,
    state_g: Option<Vec<f64>>,
    adjoint_g: Option<Vec<f64>>,
    /// Mass of each control component in the control inner product.
    control_mass: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    locations: Vec<CellLocation<f64>>,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("problem", &self.problem)
            .field("level", &self.mesh.level())
            .field("dim", &self.mesh.dim())
            .finish()
    }
}

impl ProblemInstance {
    pub fn new(problem: ControlProblem, mesh: Arc<Mesh<f64>>, opts: SolverOptions) -> Result<Self> {
        problem.validate()?;
        if problem.dim() != mesh.dim() {
            return Err(Error::Admissibility(format!("{}D problem on a {}D mesh", problem.dim(), mesh.dim())));
        }
        let dim = mesh.dim();
        let policy = QuadPolicy::Hybrid { points: problem.singular_points.clone(), rtol: opts.quad_rtol };
        let unit = Weight::unit(dim);

        let (coef, tracking_weight) = match &problem.data {
            ProblemData::WeightedElliptic { weight, .. } => (Coefficient::Weighted(weight.clone()), Some(weight.clone())),
            ProblemData::PointSource { .. } => (Coefficient::Unit, Some(unit.clone())),
            ProblemData::PointObservation { .. } => (Coefficient::Unit, None),
        };
        let stiffness = assemble_stiffness(&mesh, &coef, &policy)?;
        let system = DirichletSystem::new(&stiffness, mesh.boundary_mask())?;

        let (mass, desired_load, desired_sq) = match (&problem.data, &tracking_weight) {
            (ProblemData::WeightedElliptic { desired, .. } | ProblemData::PointSource { desired, .. }, Some(w)) => {
                let mass = assemble_mass(&mesh, w, &policy)?;
                let d = load_weighted(&mesh, |x| desired(x), w, &policy)?;
                let rule = QuadRule::default_for(dim)?;
                let mut sq = 0.0;
                let mut acc = [0.0];
                for c in 0..mesh.num_cells() {
                    integrate_cell_vec(&mesh, c, &rule, &policy, 1, |x, _, o| {
                        let v = desired(x);
                        o[0] = w.value(x) * v * v;
                    }, &mut acc)?;
                    sq += acc[0];
                }
                (Some(mass), d, sq)
            }
            (ProblemData::PointObservation { targets, .. }, _) => {
                (None, Vec::new(), targets.iter().map(|t| t * t).sum())
            }
            _ => unreachable!("tracking weight matches problem data"),
        };

        // Only the weighted problem has an unbounded forcing; elsewhere the
        // forcing is bounded and the fixed rule suffices.
        let forcing_policy = match &problem.data {
            ProblemData::WeightedElliptic { .. } => policy.clone(),
            _ => QuadPolicy::Fixed,
        };
        let forcing_load = match &problem.forcing {
            Some(f) => load_weighted(&mesh, |x| f(x), &unit, &forcing_policy)?,
            None => vec![0.0; mesh.num_vertices()],
        };
        let trace = |g: &Option<Field>| -> Option<Vec<f64>> {
            g.as_ref().map(|g| {
                (0..mesh.num_vertices()).map(|v| if mesh.is_boundary(v) { g(mesh.vertex(v)) } else { 0.0 }).collect()
            })
        };
        let state_g = trace(&problem.state_bc);
        let adjoint_g = trace(&problem.adjoint_bc);

        let ncontrols = match &problem.data {
            ProblemData::PointSource { points, .. } => points.len(),
            _ => mesh.num_cells(),
        };
        let control_mass = match &problem.data {
            ProblemData::PointSource { .. } => vec![1.0; ncontrols],
            ProblemData::PointObservation { .. } => (0..ncontrols).map(|c| mesh.cell_volume(c)).collect(),
            ProblemData::WeightedElliptic { weight, .. } => {
                let inv = weight.clone().reciprocal();
                let rule = QuadRule::default_for(dim)?;
                let mut out = Vec::with_capacity(ncontrols);
                let mut acc = [0.0];
                for c in 0..ncontrols {
                    integrate_cell_vec(&mesh, c, &rule, &policy, 1, |x, _, o| o[0] = inv.value(x), &mut acc)?;
                    out.push(acc[0]);
                }
                out
            }
        };
        let (lower, upper) = match &problem.bounds {
            Bounds::Uniform { lower, upper } => (vec![*lower; ncontrols], vec![*upper; ncontrols]),
            Bounds::PerComponent { lower, upper } => {
                if lower.len() != ncontrols {
                    return Err(Error::Admissibility(format!(
                        "{} bound pairs for {} control components",
                        lower.len(),
                        ncontrols
                    )));
                }
                (lower.clone(), upper.clone())
            }
        };
        let locations = match &problem.data {
            ProblemData::PointObservation { points, .. } | ProblemData::PointSource { points, .. } => {
                points.iter().map(|z| mesh.locate(z)).collect::<Result<Vec<_>>>()?
            }
            ProblemData::WeightedElliptic { .. } => Vec::new(),
        };

        Ok(ProblemInstance {
            problem,
            mesh,
            opts,
            system,
            mass,
            desired_load,
            desired_sq,
            forcing_load,
            state_g,
            adjoint_g,
            control_mass,
            lower,
            upper,
            locations,
        })
    }

    pub fn problem(&self) -> &ControlProblem {
        &self.problem
    }

    pub fn kind(&self) -> ProblemKind {
        self.problem.kind()
    }

    pub fn mesh(&self) -> &Arc<Mesh<f64>> {
        &self.mesh
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn num_controls(&self) -> usize {
        self.control_mass.len()
    }

    pub fn control_mass(&self) -> &[f64] {
        &self.control_mass
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Wraps raw control values in the kind-appropriate container.
    pub fn control_vector(&self, values: Vec<f64>) -> Result<ControlVector> {
        if values.len() != self.num_controls() {
            return Err(Error::Domain(format!("{} control values for {} components", values.len(), self.num_controls())));
        }
        Ok(match self.kind() {
            ProblemKind::PointSource => ControlVector::Points(values),
            _ => ControlVector::Cells(PCFunction::new(Arc::clone(&self.mesh), values)?),
        })
    }

    /// Norm induced by the control inner product.
    pub fn control_norm(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.control_mass).map(|(&v, &m)| m * v * v).sum::<f64>().sqrt()
    }

    fn state_rhs(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut b = self.forcing_load.clone();
        match &self.problem.data {
            ProblemData::PointSource { points, .. } => {
                for (bi, di) in b.iter_mut().zip(load_dirac(&self.mesh, points, u)?) {
                    *bi += di;
                }
            }
            _ => {
                let share = 1.0 / (self.mesh.dim() + 1) as f64;
                for (c, &uc) in u.iter().enumerate() {
                    let v = uc * self.mesh.cell_volume(c) * share;
                    for &i in self.mesh.cell(c) {
                        b[i] += v;
                    }
                }
            }
        }
        Ok(b)
    }

    fn adjoint_rhs(&self, y: &[f64]) -> Result<Vec<f64>> {
        match &self.problem.data {
            ProblemData::PointObservation { targets, .. } => {
                let mut b = vec![0.0; self.mesh.num_vertices()];
                for (loc, &t) in self.locations.iter().zip(targets) {
                    let cell = self.mesh.cell(loc.cell_index);
                    let yz: f64 = cell.iter().zip(&loc.barycentric).map(|(&v, &l)| l * y[v]).sum();
                    for (&v, &l) in cell.iter().zip(&loc.barycentric) {
                        b[v] += (yz - t) * l;
                    }
                }
                Ok(b)
            }
            _ => {
                let mass = self.mass.as_ref().expect("tracking mass assembled");
                let mut b = mass.matvec(y)?;
                for (bi, &d) in b.iter_mut().zip(&self.desired_load) {
                    *bi -= d;
                }
                Ok(b)
            }
        }
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.num_controls() {
            return Err(Error::Domain(format!("{} control values for {} components", u.len(), self.num_controls())));
        }
        Ok(())
    }

    /// State coefficients for raw control values, optionally warm-started.
    pub fn state_coeffs(&self, u: &[f64], warm: Option<&[f64]>) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let b = self.state_rhs(u)?;
        self.system.solve(&b, self.state_g.as_deref(), warm, self.opts.linear_rtol)
    }

    /// Adjoint coefficients for state coefficients `y`.
    pub fn adjoint_coeffs(&self, y: &[f64], warm: Option<&[f64]>) -> Result<Vec<f64>> {
        if y.len() != self.mesh.num_vertices() {
            return Err(Error::Domain("state does not live on this mesh".into()));
        }
        let b = self.adjoint_rhs(y)?;
        self.system.solve(&b, self.adjoint_g.as_deref(), warm, self.opts.linear_rtol)
    }

    pub fn solve_state(&self, u: &ControlVector) -> Result<P1Function<f64>> {
        let y = self.state_coeffs(u.values(), None)?;
        P1Function::new(Arc::clone(&self.mesh), y)
    }

    pub fn solve_adjoint(&self, y: &P1Function<f64>) -> Result<P1Function<f64>> {
        if !Arc::ptr_eq(&y.mesh, &self.mesh) && *y.mesh != *self.mesh {
            return Err(Error::Domain("state lives on a different mesh".into()));
        }
        let p = self.adjoint_coeffs(&y.coeffs, None)?;
        P1Function::new(Arc::clone(&self.mesh), p)
    }

    /// Control-space representation `g` of the adjoint: cell averages,
    /// `ω⁻¹`-normalized cell integrals, or point values.
    pub fn adjoint_representation(&self, p: &[f64]) -> Vec<f64> {
        match &self.problem.data {
            ProblemData::PointSource { .. } => self
                .locations
                .iter()
                .map(|loc| self.mesh.cell(loc.cell_index).iter().zip(&loc.barycentric).map(|(&v, &l)| l * p[v]).sum())
                .collect(),
            ProblemData::PointObservation { .. } => (0..self.num_controls())
                .map(|c| {
                    let cell = self.mesh.cell(c);
                    cell.iter().map(|&v| p[v]).sum::<f64>() / cell.len() as f64
                })
                .collect(),
            ProblemData::WeightedElliptic { .. } => (0..self.num_controls())
                .map(|c| {
                    let cell = self.mesh.cell(c);
                    let integral = self.mesh.cell_volume(c) * cell.iter().map(|&v| p[v]).sum::<f64>() / cell.len() as f64;
                    integral / self.control_mass[c]
                })
                .collect(),
        }
    }

    fn clamp_from(&self, g: &[f64]) -> Vec<f64> {
        g.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&gi, (&a, &b))| (-gi / self.problem.lambda).max(a).min(b))
            .collect()
    }

    /// `u = clamp(-g(p) / λ)` componentwise.
    pub fn clamp_update(&self, p: &P1Function<f64>) -> Result<ControlVector> {
        if p.coeffs.len() != self.mesh.num_vertices() {
            return Err(Error::Domain("adjoint does not live on this mesh".into()));
        }
        self.control_vector(self.clamp_from(&self.adjoint_representation(&p.coeffs)))
    }

    /// Reduced cost `½‖C y − y_d‖² + (λ/2)‖u‖²` for a control and its state.
    pub fn reduced_cost(&self, u: &[f64], y: &[f64]) -> Result<f64> {
        let tracking = match &self.problem.data {
            ProblemData::PointObservation { targets, .. } => self
                .locations
                .iter()
                .zip(targets)
                .map(|(loc, &t)| {
                    let yz: f64 = self.mesh.cell(loc.cell_index).iter().zip(&loc.barycentric).map(|(&v, &l)| l * y[v]).sum();
                    (yz - t) * (yz - t)
                })
                .sum::<f64>(),
            _ => {
                let mass = self.mass.as_ref().expect("tracking mass assembled");
                (mass.energy(y)? - 2.0 * dot(y, &self.desired_load) + self.desired_sq).max(0.0)
            }
        };
        let n = self.control_norm(u);
        Ok(0.5 * tracking + 0.5 * self.problem.lambda * n * n)
    }

    /// Worst violation of the discrete variational inequality
    /// `(g_i + λ u_i)(v - u_i) >= 0` over `v ∈ {a_i, b_i}`.
    pub fn vi_violation(&self, u: &[f64], p: &[f64]) -> f64 {
        let g = self.adjoint_representation(p);
        let lam = self.problem.lambda;
        let mut worst: f64 = 0.0;
        for i in 0..u.len() {
            let grad = g[i] + lam * u[i];
            for v in [self.lower[i], self.upper[i]] {
                worst = worst.max(-(grad * (v - u[i])));
            }
        }
        worst
    }

    /// Relative residuals of the state and adjoint systems for a triple.
    pub fn system_residuals(&self, u: &[f64], y: &[f64], p: &[f64]) -> Result<(f64, f64)> {
        let rs = self.system.residual(y, &self.state_rhs(u)?)?;
        let ra = self.system.residual(p, &self.adjoint_rhs(y)?)?;
        Ok((rs, ra))
    }

    fn pin(&self, status: &[Status], g: &[f64]) -> Vec<f64> {
        let free = self.clamp_from(g);
        status
            .iter()
            .zip(free)
            .enumerate()
            .map(|(i, (s, f))| match s {
                Status::Inactive => f,
                Status::Lower => self.lower[i],
                Status::Upper => self.upper[i],
            })
            .collect()
    }

    /// Primal-dual active-set solve from empty active sets.
    pub fn pdas_solve(&self) -> Result<PdasResult> {
        self.pdas_solve_from(&[], &[])
    }

    /// Primal-dual active-set solve from the given initial active sets.
    pub fn pdas_solve_from(&self, lower0: &[usize], upper0: &[usize]) -> Result<PdasResult> {
        let n = self.num_controls();
        let mut status = vec![Status::Inactive; n];
        for &i in lower0 {
            *status.get_mut(i).ok_or_else(|| Error::Domain(format!("active index {i} out of range")))? = Status::Lower;
        }
        for &i in upper0 {
            *status.get_mut(i).ok_or_else(|| Error::Domain(format!("active index {i} out of range")))? = Status::Upper;
        }
        let zeros = vec![0.0; n];
        let mut u = self.pin(&status, &zeros);
        let mut y: Option<Vec<f64>> = None;
        let mut p: Option<Vec<f64>> = None;
        let mut history = Vec::new();
        let tol = self.opts.tol;
        let mut last_update = f64::INFINITY;
        for it in 1..=self.opts.max_iter {
            let u_prev = u.clone();
            let mut inner = 0;
            loop {
                let ys = self.state_coeffs(&u, y.as_deref())?;
                let ps = self.adjoint_coeffs(&ys, p.as_deref())?;
                let next = self.pin(&status, &self.adjoint_representation(&ps));
                let diff: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
                let d = self.control_norm(&diff);
                u = next;
                y = Some(ys);
                p = Some(ps);
                if d <= tol / 10.0 {
                    break;
                }
                inner += 1;
                if inner >= self.opts.inner_max_iter {
                    return Err(Error::NonConvergence {
                        method: "active-set inner iteration",
                        iterations: inner,
                        update_norm: d,
                        last_control: u,
                    });
                }
            }
            let ys = self.state_coeffs(&u, y.as_deref())?;
            let ps = self.adjoint_coeffs(&ys, p.as_deref())?;
            history.push(self.reduced_cost(&u, &ys)?);
            let g = self.adjoint_representation(&ps);
            let lam = self.problem.lambda;
            let new_status: Vec<Status> = (0..n)
                .map(|i| {
                    let mu = -(g[i] + lam * u[i]);
                    let probe = u[i] + mu / lam;
                    if probe < self.lower[i] {
                        Status::Lower
                    } else if probe > self.upper[i] {
                        Status::Upper
                    } else {
                        Status::Inactive
                    }
                })
                .collect();
            let diff: Vec<f64> = u.iter().zip(&u_prev).map(|(a, b)| a - b).collect();
            last_update = self.control_norm(&diff);
            y = Some(ys);
            p = Some(ps);
            if new_status == status && last_update <= tol {
                let collect = |s: Status| (0..n).filter(|&i| status[i] == s).collect::<Vec<_>>();
                return Ok(PdasResult {
                    control: self.control_vector(u)?,
                    state: P1Function::new(Arc::clone(&self.mesh), y.expect("state computed"))?,
                    adjoint: P1Function::new(Arc::clone(&self.mesh), p.expect("adjoint computed"))?,
                    iterations: it,
                    active_lower: collect(Status::Lower),
                    active_upper: collect(Status::Upper),
                    cost_history: history,
                });
            }
            status = new_status;
        }
        Err(Error::NonConvergence {
            method: "primal-dual active set",
            iterations: self.opts.max_iter,
            update_norm: last_update,
            last_control: u,
        })
    }

    /// Projected gradient iteration `u ← P(u − step (λu + g(u)))`.
    pub fn projected_gradient_oracle(&self, step: f64, tol: f64, max_iter: usize) -> Result<ControlVector> {
        let lam = self.problem.lambda;
        if !(step > 0.0 && step < 2.0 / lam) {
            return Err(Error::Domain(format!("step {step} outside (0, 2/λ)")));
        }
        let n = self.num_controls();
        let mut u: Vec<f64> = (0..n).map(|i| 0f64.max(self.lower[i]).min(self.upper[i])).collect();
        let mut y: Option<Vec<f64>> = None;
        let mut p: Option<Vec<f64>> = None;
        let mut update = f64::INFINITY;
        for _ in 0..max_iter {
            let ys = self.state_coeffs(&u, y.as_deref())?;
            let ps = self.adjoint_coeffs(&ys, p.as_deref())?;
            let g = self.adjoint_representation(&ps);
            let next: Vec<f64> = (0..n)
                .map(|i| (u[i] - step * (lam * u[i] + g[i])).max(self.lower[i]).min(self.upper[i]))
                .collect();
            let diff: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
            update = self.control_norm(&diff);
            u = next;
            y = Some(ys);
            p = Some(ps);
            if update <= tol {
                return self.control_vector(u);
            }
        }
        Err(Error::NonConvergence { method: "projected gradient", iterations: max_iter, update_norm: update, last_control: u })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_obs(level: usize, points: Vec<Vec<f64>>, targets: Vec<f64>, bounds: (f64, f64)) -> ProblemInstance {
        let problem = ControlProblem {
            data: ProblemData::PointObservation { points, targets },
            lambda: 1.0,
            bounds: Bounds::Uniform { lower: bounds.0, upper: bounds.1 },
            forcing: None,
            state_bc: None,
            adjoint_bc: None,
            singular_points: Vec::new(),
        };
        problem.instantiate(Arc::new(Mesh::unit(2, level).unwrap()), SolverOptions::default()).unwrap()
    }

    fn point_source(level: usize, bounds: (f64, f64), desired: Field) -> ProblemInstance {
        let problem = ControlProblem {
            data: ProblemData::PointSource { points: vec![vec![0.5, 0.5]], desired },
            lambda: 1.0,
            bounds: Bounds::Uniform { lower: bounds.0, upper: bounds.1 },
            forcing: None,
            state_bc: None,
            adjoint_bc: None,
            singular_points: vec![vec![0.5, 0.5]],
        };
        problem.instantiate(Arc::new(Mesh::unit(2, level).unwrap()), SolverOptions::default()).unwrap()
    }

    #[test]
    fn zero_control_zero_state() {
        let inst = point_obs(2, vec![vec![0.5, 0.5]], vec![1.0], (-0.4, -0.2));
        let u = inst.control_vector(vec![0.0; inst.num_controls()]).unwrap();
        let y = inst.solve_state(&u).unwrap();
        assert!(y.coeffs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_dof_point_source_state_and_adjoint() {
        let inst = point_source(1, (0.3, 0.7), field(|_| 0.0));
        let y = inst.solve_state(&ControlVector::Points(vec![1.0])).unwrap();
        assert!((y.coeffs[4] - 0.25).abs() < 1e-14);

        let obs = point_obs(1, vec![vec![0.5, 0.5]], vec![-1.0], (-0.4, -0.2));
        let y0 = P1Function::zero(Arc::clone(obs.mesh()));
        let p = obs.solve_adjoint(&y0).unwrap();
        assert!((p.coeffs[4] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn adjoint_vanishes_when_targets_are_met() {
        let inst = point_obs(2, vec![vec![0.5, 0.5]], vec![0.0], (-0.4, -0.2));
        let p = inst.solve_adjoint(&P1Function::zero(Arc::clone(inst.mesh()))).unwrap();
        assert!(p.coeffs.iter().all(|&v| v == 0.0));
        let src = point_source(2, (0.3, 0.7), field(|_| 0.0));
        let p = src.solve_adjoint(&P1Function::zero(Arc::clone(src.mesh()))).unwrap();
        assert!(p.coeffs.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn clamp_examples() {
        let inst = point_obs(1, vec![vec![0.5, 0.5]], vec![1.0], (-0.4, -0.2));
        let zero = P1Function::zero(Arc::clone(inst.mesh()));
        assert!(inst.clamp_update(&zero).unwrap().values().iter().all(|&v| v == -0.2));
        let p = P1Function::new(Arc::clone(inst.mesh()), vec![0.3; inst.mesh().num_vertices()]).unwrap();
        assert!(inst.clamp_update(&p).unwrap().values().iter().all(|&v| (v + 0.3).abs() < 1e-15));

        let src = point_source(2, (0.3, 0.7), field(|_| 0.0));
        let bubble = P1Function::interpolate(Arc::clone(src.mesh()), |x| -32.0 * x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1]));
        assert_eq!(src.clamp_update(&bubble).unwrap().values(), &[0.7]);
    }

    #[test]
    fn pdas_matches_oracle_and_satisfies_vi() {
        let inst = point_obs(3, vec![vec![0.5, 0.5], vec![0.25, 0.75]], vec![1.0, -2.0], (-1.0, 1.0));
        let res = inst.pdas_solve().unwrap();
        let u = res.control.values();
        assert!(inst.vi_violation(u, &res.adjoint.coeffs) < 1e-10);
        let (rs, ra) = inst.system_residuals(u, &res.state.coeffs, &res.adjoint.coeffs).unwrap();
        assert!(rs < 1e-10 && ra < 1e-10);
        let oracle = inst.projected_gradient_oracle(1.0, 1e-11, 10_000).unwrap();
        let diff: Vec<f64> = u.iter().zip(oracle.values()).map(|(a, b)| a - b).collect();
        assert!(inst.control_norm(&diff) < 1e-9);
        for w in res.cost_history.windows(2).skip(1) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn interior_optimum_has_empty_active_sets() {
        let inst = point_obs(2, vec![vec![0.5, 0.5]], vec![0.1], (-100.0, 100.0));
        let res = inst.pdas_solve().unwrap();
        assert!(res.active_lower.is_empty() && res.active_upper.is_empty());
        let again = inst.clamp_update(&res.adjoint).unwrap();
        let diff: Vec<f64> = again.values().iter().zip(res.control.values()).map(|(a, b)| a - b).collect();
        assert!(inst.control_norm(&diff) < 1e-10);
    }

    #[test]
    fn different_initial_sets_same_control() {
        let inst = point_obs(2, vec![vec![0.5, 0.5]], vec![1.0], (-0.4, -0.2));
        let a = inst.pdas_solve().unwrap();
        let all: Vec<usize> = (0..inst.num_controls()).collect();
        let b = inst.pdas_solve_from(&all, &[]).unwrap();
        let diff: Vec<f64> = a.control.values().iter().zip(b.control.values()).map(|(x, y)| x - y).collect();
        assert!(inst.control_norm(&diff) < 1e-9);
    }

    #[test]
    fn collapsed_bounds_give_constant_control() {
        let inst = point_obs(2, vec![vec![0.5, 0.5]], vec![3.0], (0.25, 0.25));
        let u = inst.projected_gradient_oracle(0.5, 1e-12, 100).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn invalid_instances_rejected() {
        let mut problem = ControlProblem {
            data: ProblemData::PointObservation { points: vec![vec![0.5, 0.5]], targets: vec![1.0] },
            lambda: 0.0,
            bounds: Bounds::Uniform { lower: 0.0, upper: 1.0 },
            forcing: None,
            state_bc: None,
            adjoint_bc: None,
            singular_points: Vec::new(),
        };
        let mesh = Arc::new(Mesh::unit(2, 1).unwrap());
        assert!(matches!(problem.instantiate(Arc::clone(&mesh), SolverOptions::default()), Err(Error::Admissibility(_))));
        problem.lambda = 1.0;
        problem.bounds = Bounds::Uniform { lower: 1.0, upper: 0.0 };
        assert!(matches!(problem.instantiate(Arc::clone(&mesh), SolverOptions::default()), Err(Error::Admissibility(_))));
        problem.bounds = Bounds::Uniform { lower: 0.0, upper: 1.0 };
        problem.data = ProblemData::PointObservation { points: vec![vec![0.0, 0.5]], targets: vec![1.0] };
        assert!(matches!(problem.instantiate(mesh, SolverOptions::default()), Err(Error::Admissibility(_))));
    }
}
