//! Manufactured exact solutions and the concrete benchmark instances.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual::{laplacian, weighted_divergence, HyperDual, Real};
use crate::error::{Error, Result};
use crate::optctrl::{field, Bounds, ControlProblem, Field, ProblemData};
use crate::weights::Weight;

/// Names accepted by [`build`].
pub const PROBLEM_NAMES: [&str; 5] = ["point-obs-2d-1", "point-obs-2d-4", "point-obs-3d", "point-source-2d", "weighted-elliptic"];

/// Boundary data imposed on the discrete state/adjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BcOption {
    /// Homogeneous Dirichlet data everywhere.
    Zero,
    /// Traces of the exact fields, so the manufactured system is exact.
    #[default]
    Trace,
}

impl FromStr for BcOption {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(BcOption::Zero),
            "trace" => Ok(BcOption::Trace),
            _ => Err(Error::Config(format!("unknown boundary option `{s}` (expected zero or trace)"))),
        }
    }
}

impl fmt::Display for BcOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BcOption::Zero => "zero",
            BcOption::Trace => "trace",
        })
    }
}

/// Tunable parameters of the builders.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub bc: BcOption,
    pub lambda: f64,
    /// Exponent of the power weight of the weighted problem.
    pub alpha: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { bc: BcOption::Trace, lambda: 1.0, alpha: 0.5 }
    }
}

/// Exact optimal control.
#[derive(Clone)]
pub enum ExactControl {
    Field(Field),
    Vector(Vec<f64>),
}

/// Closed-form optimal triple of a benchmark and its data.
#[derive(Clone)]
pub struct ManufacturedSolution {
    pub control: ExactControl,
    pub state: Field,
    pub adjoint: Field,
    /// Points where the exact state is unbounded.
    pub state_singular_points: Vec<Vec<f64>>,
    /// Points where the exact adjoint is unbounded.
    pub adjoint_singular_points: Vec<Vec<f64>>,
    /// Weight of the natural control norm (`ω⁻¹` for the weighted problem).
    pub control_weight: Option<Weight<f64>>,
}

/// A named benchmark: the control problem plus its exact solution.
#[derive(Clone)]
pub struct ProblemSetup {
    pub name: &'static str,
    pub dim: usize,
    pub problem: ControlProblem,
    pub exact: ManufacturedSolution,
    shape: Shape,
}

impl fmt::Debug for ProblemSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSetup").field("name", &self.name).field("problem", &self.problem).finish()
    }
}

/// Closed forms of the exact fields, shared by the `f64` fields and the
/// hyper-dual residual audit.
#[derive(Clone, Debug, PartialEq)]
enum Shape {
    PointObs2dOne { z: Vec<Vec<f64>>, targets: Vec<f64>, bounds: (f64, f64), lambda: f64 },
    PointObs2dFour { z: Vec<Vec<f64>>, targets: Vec<f64>, bounds: (f64, f64), lambda: f64 },
    PointObs3d { z: Vec<Vec<f64>>, targets: Vec<f64>, bounds: (f64, f64), lambda: f64 },
    PointSource2d { d: Vec<Vec<f64>>, control: Vec<f64>, bounds: (f64, f64), lambda: f64 },
    Weighted { alpha: f64, bounds: (f64, f64), lambda: f64 },
}

const X0: [f64; 2] = [0.5, 0.5];

/// `-(1/2π) Σ ln|x - z|` (2D) or `(1/4π) Σ 1/|x - z|` (3D).
pub fn fundamental_phi(x: &[f64], points: &[Vec<f64>], dim: usize) -> Result<f64> {
    if dim != 2 && dim != 3 {
        return Err(Error::Capability(format!("fundamental solution in dimension {dim}")));
    }
    if x.len() != dim || points.iter().any(|z| z.len() != dim) {
        return Err(Error::Domain("point dimension mismatch".into()));
    }
    if let Some(z) = points.iter().find(|z| z.iter().zip(x).all(|(a, b)| a == b)) {
        return Err(Error::Singularity(format!("fundamental solution evaluated at its pole {:?}", z)));
    }
    Ok(phi(x, points))
}

fn phi<R: Real>(x: &[R], points: &[Vec<f64>]) -> R {
    let dim = x.len();
    let mut total = R::cst(0.0);
    for z in points {
        let mut r2 = R::cst(0.0);
        for (xi, &zi) in x.iter().zip(z) {
            let d = *xi - R::cst(zi);
            r2 = r2 + d * d;
        }
        total = total
            + if dim == 2 {
                // -(1/2π) ln r = -(1/4π) ln r²
                R::cst(-1.0 / (4.0 * PI)) * r2.ln()
            } else {
                R::cst(1.0 / (4.0 * PI)) * r2.sqrt().recip()
            };
    }
    total
}

fn clamp(v: f64, (a, b): (f64, f64)) -> f64 {
    v.max(a).min(b)
}

fn bubble2<R: Real>(x: &[R]) -> R {
    let one = R::cst(1.0);
    x[0] * x[1] * (one - x[0]) * (one - x[1])
}

fn sine2<R: Real>(x: &[R]) -> R {
    (R::cst(PI) * x[0]).sin() * (R::cst(PI) * x[1]).sin()
}

fn power_weight<R: Real>(x: &[R], alpha: f64) -> R {
    let dx = x[0] - R::cst(X0[0]);
    let dy = x[1] - R::cst(X0[1]);
    (dx * dx + dy * dy).powf(0.5 * alpha)
}

impl Shape {
    fn lambda(&self) -> f64 {
        match self {
            Shape::PointObs2dOne { lambda, .. }
            | Shape::PointObs2dFour { lambda, .. }
            | Shape::PointObs3d { lambda, .. }
            | Shape::PointSource2d { lambda, .. }
            | Shape::Weighted { lambda, .. } => *lambda,
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self {
            Shape::PointObs2dOne { bounds, .. }
            | Shape::PointObs2dFour { bounds, .. }
            | Shape::PointObs3d { bounds, .. }
            | Shape::PointSource2d { bounds, .. }
            | Shape::Weighted { bounds, .. } => *bounds,
        }
    }

    fn state<R: Real>(&self, x: &[R]) -> R {
        match self {
            Shape::PointObs2dOne { .. } => R::cst(32.0) * bubble2(x),
            Shape::PointObs2dFour { .. } => {
                R::cst(2.75) - R::cst(2.0) * x[0] - R::cst(2.0) * x[1] + R::cst(4.0) * x[0] * x[1]
            }
            Shape::PointObs3d { .. } => {
                let one = R::cst(1.0);
                R::cst(8192.0 / 27.0) * x[0] * x[1] * x[2] * (one - x[0]) * (one - x[1]) * (one - x[2])
            }
            Shape::PointSource2d { d, control, .. } => {
                let mut total = R::cst(0.0);
                for (z, &u) in d.iter().zip(control) {
                    total = total + R::cst(u) * phi(x, std::slice::from_ref(z));
                }
                total
            }
            Shape::Weighted { .. } => sine2(x),
        }
    }

    fn adjoint<R: Real>(&self, x: &[R]) -> R {
        match self {
            Shape::PointObs2dOne { z, .. } | Shape::PointObs2dFour { z, .. } | Shape::PointObs3d { z, .. } => phi(x, z),
            Shape::PointSource2d { .. } => R::cst(-32.0) * bubble2(x),
            Shape::Weighted { .. } => sine2(x),
        }
    }

    fn weight<R: Real>(&self, x: &[R]) -> R {
        match self {
            Shape::Weighted { alpha, .. } => power_weight(x, *alpha),
            _ => R::cst(1.0),
        }
    }

    /// Pointwise exact control for distributed problems.
    fn control_at(&self, x: &[f64]) -> f64 {
        clamp(-self.weight(x) * self.adjoint(x) / self.lambda(), self.bounds())
    }

    /// Hand-derived state forcing `f = -div(ω∇ȳ) - ū`.
    fn forcing(&self, x: &[f64]) -> Option<f64> {
        let u = || self.control_at(x);
        match self {
            Shape::PointObs2dOne { .. } => Some(64.0 * (x[0] * (1.0 - x[0]) + x[1] * (1.0 - x[1])) - u()),
            Shape::PointObs2dFour { .. } => Some(-u()),
            Shape::PointObs3d { .. } => {
                let q = |t: f64| t * (1.0 - t);
                let s = q(x[1]) * q(x[2]) + q(x[0]) * q(x[2]) + q(x[0]) * q(x[1]);
                Some(2.0 * 8192.0 / 27.0 * s - u())
            }
            Shape::PointSource2d { .. } => None,
            Shape::Weighted { alpha, .. } => {
                let (dx, dy) = (x[0] - X0[0], x[1] - X0[1]);
                let r2 = dx * dx + dy * dy;
                let w = r2.powf(0.5 * alpha);
                let (s0, c0) = (PI * x[0]).sin_cos();
                let (s1, c1) = (PI * x[1]).sin_cos();
                let y = s0 * s1;
                let grad_dot = PI * (dx * c0 * s1 + dy * s0 * c1);
                // -(ω Δȳ + ∇ω·∇ȳ) with Δȳ = -2π² ȳ, ∇ω = α r^{α-2} (x - x0)
                Some(2.0 * PI * PI * w * y - alpha * r2.powf(0.5 * alpha - 1.0) * grad_dot - u())
            }
        }
    }

    /// Hand-derived desired state for distributed tracking.
    fn desired(&self, x: &[f64]) -> Option<f64> {
        match self {
            Shape::PointSource2d { .. } => {
                Some(self.state(x) + 64.0 * (x[0] * (1.0 - x[0]) + x[1] * (1.0 - x[1])))
            }
            Shape::Weighted { alpha, .. } => {
                let (dx, dy) = (x[0] - X0[0], x[1] - X0[1]);
                let r2 = dx * dx + dy * dy;
                let (s0, c0) = (PI * x[0]).sin_cos();
                let (s1, c1) = (PI * x[1]).sin_cos();
                let y = s0 * s1;
                let grad_dot = PI * (dx * c0 * s1 + dy * s0 * c1);
                // ȳ + div(ω∇p̄)/ω with p̄ = ȳ
                Some(y - 2.0 * PI * PI * y + alpha * grad_dot / r2)
            }
            _ => None,
        }
    }

    fn singular_points(&self) -> Vec<Vec<f64>> {
        match self {
            Shape::PointObs2dOne { z, .. } | Shape::PointObs2dFour { z, .. } | Shape::PointObs3d { z, .. } => z.clone(),
            Shape::PointSource2d { d, .. } => d.clone(),
            Shape::Weighted { .. } => vec![X0.to_vec()],
        }
    }
}

fn shape_field<F>(shape: &Shape, f: F) -> Field
where
    F: Fn(&Shape, &[f64]) -> f64 + Send + Sync + 'static,
{
    let s = shape.clone();
    field(move |x| f(&s, x))
}

fn assemble(name: &'static str, dim: usize, shape: Shape, opts: &BuildOptions) -> Result<ProblemSetup> {
    let bounds = shape.bounds();
    let singular = shape.singular_points();
    let state = shape_field(&shape, |s, x| s.state(x));
    let adjoint = shape_field(&shape, |s, x| s.adjoint(x));
    let trace = opts.bc == BcOption::Trace;
    let (data, control, state_bc, adjoint_bc, state_sing, adjoint_sing, control_weight) = match &shape {
        Shape::PointObs2dOne { z, targets, .. } | Shape::PointObs2dFour { z, targets, .. } | Shape::PointObs3d { z, targets, .. } => {
            let state_bc = matches!(shape, Shape::PointObs2dFour { .. }).then(|| state.clone());
            (
                ProblemData::PointObservation { points: z.clone(), targets: targets.clone() },
                ExactControl::Field(shape_field(&shape, |s, x| s.control_at(x))),
                state_bc,
                Some(adjoint.clone()),
                Vec::new(),
                z.clone(),
                None,
            )
        }
        Shape::PointSource2d { d, control, .. } => (
            ProblemData::PointSource { points: d.clone(), desired: shape_field(&shape, |s, x| s.desired(x).unwrap_or(0.0)) },
            ExactControl::Vector(control.clone()),
            Some(state.clone()),
            None,
            d.clone(),
            Vec::new(),
            None,
        ),
        Shape::Weighted { alpha, .. } => {
            let weight = Weight::power(X0.to_vec(), *alpha)?;
            (
                ProblemData::WeightedElliptic { weight: weight.clone(), desired: shape_field(&shape, |s, x| s.desired(x).unwrap_or(0.0)) },
                ExactControl::Field(shape_field(&shape, |s, x| s.control_at(x))),
                None,
                None,
                Vec::new(),
                Vec::new(),
                Some(weight.reciprocal()),
            )
        }
    };
    let forcing = shape.forcing(&vec![0.5; dim]).map(|_| shape_field(&shape, |s, x| s.forcing(x).unwrap_or(0.0)));
    let problem = ControlProblem {
        data,
        lambda: opts.lambda,
        bounds: Bounds::Uniform { lower: bounds.0, upper: bounds.1 },
        forcing,
        state_bc: if trace { state_bc } else { None },
        adjoint_bc: if trace { adjoint_bc } else { None },
        singular_points: singular,
    };
    Ok(ProblemSetup {
        name,
        dim,
        problem,
        exact: ManufacturedSolution {
            control,
            state,
            adjoint,
            state_singular_points: state_sing,
            adjoint_singular_points: adjoint_sing,
            control_weight,
        },
        shape,
    })
}

fn check_lambda(opts: &BuildOptions) -> Result<()> {
    if opts.lambda > 0.0 && opts.lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Admissibility(format!("regularization {} must be positive", opts.lambda)))
    }
}

/// Asserts that the observation residuals `ȳ(z) - y_z` equal the unit
/// strength of the fundamental solutions.
fn check_unit_sources(shape: &Shape, z: &[Vec<f64>], targets: &[f64]) -> Result<()> {
    for (p, &t) in z.iter().zip(targets) {
        let coef = shape.state(p) - t;
        if (coef - 1.0).abs() > 1e-12 {
            return Err(Error::Admissibility(format!("observation residual {coef} at {:?} is not 1", p)));
        }
    }
    Ok(())
}

/// One observation point at the centre of the unit square.
pub fn build_point_obs_2d_one(opts: &BuildOptions) -> Result<ProblemSetup> {
    check_lambda(opts)?;
    let z = vec![vec![0.5, 0.5]];
    let targets = vec![1.0];
    let shape = Shape::PointObs2dOne { z: z.clone(), targets: targets.clone(), bounds: (-0.4, -0.2), lambda: opts.lambda };
    check_unit_sources(&shape, &z, &targets)?;
    assemble("point-obs-2d-1", 2, shape, opts)
}

/// Four observation points with a harmonic bilinear state.
pub fn build_point_obs_2d_four(opts: &BuildOptions) -> Result<ProblemSetup> {
    check_lambda(opts)?;
    let z = vec![vec![0.75, 0.75], vec![0.75, 0.25], vec![0.25, 0.75], vec![0.25, 0.25]];
    let targets = vec![1.0, 0.5, 0.5, 1.0];
    let shape = Shape::PointObs2dFour { z: z.clone(), targets: targets.clone(), bounds: (-1.2, -0.7), lambda: opts.lambda };
    check_unit_sources(&shape, &z, &targets)?;
    assemble("point-obs-2d-4", 2, shape, opts)
}

/// Eight observation points at the corners of `{0.25, 0.75}³`.
pub fn build_point_obs_3d(opts: &BuildOptions) -> Result<ProblemSetup> {
    check_lambda(opts)?;
    let mut z = Vec::new();
    for a in [0.25, 0.75] {
        for b in [0.25, 0.75] {
            for c in [0.25, 0.75] {
                z.push(vec![a, b, c]);
            }
        }
    }
    let targets = vec![1.0; z.len()];
    let shape = Shape::PointObs3d { z: z.clone(), targets: targets.clone(), bounds: (-15.0, -5.0), lambda: opts.lambda };
    check_unit_sources(&shape, &z, &targets)?;
    assemble("point-obs-3d", 3, shape, opts)
}

/// One point source at the centre of the unit square.
pub fn build_point_source_2d(opts: &BuildOptions) -> Result<ProblemSetup> {
    check_lambda(opts)?;
    let d = vec![vec![0.5, 0.5]];
    let bounds = (0.3, 0.7);
    let probe = Shape::PointSource2d { d: d.clone(), control: vec![0.0], bounds, lambda: opts.lambda };
    let control: Vec<f64> = d.iter().map(|z| clamp(-probe.adjoint(z) / opts.lambda, bounds)).collect();
    let shape = Shape::PointSource2d { d, control, bounds, lambda: opts.lambda };
    assemble("point-source-2d", 2, shape, opts)
}

/// Weighted elliptic problem with `ω = |x - (½, ½)|^α`.
pub fn build_weighted_elliptic(opts: &BuildOptions) -> Result<ProblemSetup> {
    check_lambda(opts)?;
    Weight::power(X0.to_vec(), opts.alpha)?;
    let shape = Shape::Weighted { alpha: opts.alpha, bounds: (-0.5, 0.5), lambda: opts.lambda };
    assemble("weighted-elliptic", 2, shape, opts)
}

/// Builder lookup by name.
pub fn build(name: &str, opts: &BuildOptions) -> Result<ProblemSetup> {
    match name {
        "point-obs-2d-1" => build_point_obs_2d_one(opts),
        "point-obs-2d-4" => build_point_obs_2d_four(opts),
        "point-obs-3d" => build_point_obs_3d(opts),
        "point-source-2d" => build_point_source_2d(opts),
        "weighted-elliptic" => build_weighted_elliptic(opts),
        _ => Err(Error::Config(format!("unknown problem `{name}`; known: {}", PROBLEM_NAMES.join(", ")))),
    }
}

/// Largest residuals found by [`ProblemSetup::residual_audit`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AuditReport {
    pub state: f64,
    pub adjoint: f64,
    pub clamp: f64,
    pub points: usize,
}

impl AuditReport {
    pub fn max(&self) -> f64 {
        self.state.max(self.adjoint).max(self.clamp)
    }
}

impl ProblemSetup {
    /// Checks the continuous optimality system at random interior points,
    /// skipping points within `0.01` of a singularity. Second derivatives come
    /// from hyper-dual arithmetic, independent of the closed-form forcing and
    /// desired-state formulas. Residuals are relative to `1 + |terms|`.
    pub fn residual_audit(&self, samples: usize, seed: u64) -> Result<AuditReport> {
        let s = &self.shape;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let singular = s.singular_points();
        let mut report = AuditReport::default();
        let lam = s.lambda();
        let rel = |r: f64, scale: f64| r.abs() / (1.0 + scale.abs());
        // unit-strength sources and discrete control consistency
        match s {
            Shape::PointObs2dOne { z, targets, .. } | Shape::PointObs2dFour { z, targets, .. } | Shape::PointObs3d { z, targets, .. } => {
                for (p, &t) in z.iter().zip(targets) {
                    report.adjoint = report.adjoint.max((s.state(p) - t - 1.0).abs());
                }
            }
            Shape::PointSource2d { d, control, bounds, .. } => {
                for (p, &u) in d.iter().zip(control) {
                    report.clamp = report.clamp.max((u - clamp(-s.adjoint(p) / lam, *bounds)).abs());
                }
            }
            Shape::Weighted { .. } => {}
        }
        while report.points < samples {
            let x: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            if singular.iter().any(|z| crate::mesh::dist(&x, z) < 0.01) {
                continue;
            }
            report.points += 1;
            let ybar = |p: &[HyperDual]| s.state(p);
            let pbar = |p: &[HyperDual]| s.adjoint(p);
            let w = |p: &[HyperDual]| s.weight(p);
            match s {
                Shape::PointObs2dOne { .. } | Shape::PointObs2dFour { .. } | Shape::PointObs3d { .. } => {
                    let lap = laplacian(ybar, &x);
                    let u = s.control_at(&x);
                    let f = s.forcing(&x).expect("forcing defined");
                    report.state = report.state.max(rel(-lap - u - f, lap.abs() + f.abs()));
                    let lap_p = laplacian(pbar, &x);
                    report.adjoint = report.adjoint.max(rel(lap_p, 0.0));
                    let uc = clamp(-s.adjoint(&x) / lam, s.bounds());
                    report.clamp = report.clamp.max((u - uc).abs());
                }
                Shape::PointSource2d { .. } => {
                    let lap = laplacian(ybar, &x);
                    report.state = report.state.max(rel(lap, 0.0));
                    let lap_p = laplacian(pbar, &x);
                    let yd = s.desired(&x).expect("desired state defined");
                    let y = s.state(&x);
                    report.adjoint = report.adjoint.max(rel(-lap_p - (y - yd), lap_p.abs() + y.abs() + yd.abs()));
                }
                Shape::Weighted { .. } => {
                    let div_y = weighted_divergence(w, ybar, &x);
                    let u = s.control_at(&x);
                    let f = s.forcing(&x).expect("forcing defined");
                    report.state = report.state.max(rel(-div_y - u - f, div_y.abs() + f.abs()));
                    let div_p = weighted_divergence(w, pbar, &x);
                    let wx = s.weight(&x);
                    let yd = s.desired(&x).expect("desired state defined");
                    let y = s.state(&x);
                    report.adjoint = report.adjoint.max(rel(-div_p - wx * (y - yd), div_p.abs() + (wx * yd).abs()));
                    let uc = clamp(-wx * s.adjoint(&x) / lam, s.bounds());
                    report.clamp = report.clamp.max((u - uc).abs());
                }
            }
        }
        Ok(report)
    }

    /// Exact control value at `x` for distributed problems.
    pub fn exact_control_at(&self, x: &[f64]) -> Option<f64> {
        match &self.exact.control {
            ExactControl::Field(f) => Some(f(x)),
            ExactControl::Vector(_) => None,
        }
    }

    /// Hand-derived state forcing, if the problem has one.
    pub fn forcing_at(&self, x: &[f64]) -> Option<f64> {
        self.shape.forcing(x)
    }

    /// Hand-derived desired state, for distributed tracking problems.
    pub fn desired_at(&self, x: &[f64]) -> Option<f64> {
        self.shape.desired(x)
    }
}
