//! Muckenhoupt weights: power weights, the point-set weight used for point
//! observations, reciprocals, and a sampling probe for the A2 constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{dist, Simplex};
use crate::quadrature::{adaptive_integrate, AdaptiveOptions, QuadRule};
use crate::scalar::Scalar;

/// A positive, locally integrable weight on `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight<T> {
    Unit { dim: usize },
    /// `|x - center|^alpha`.
    Power { center: Vec<T>, alpha: T },
    /// Weight built from a finite point set: `dist_z(x)^(n-2) / ln^2 dist_z(x)`
    /// near each point, constant elsewhere.
    Varpi { points: Vec<Vec<T>>, dim: usize, min_separation: T },
    Reciprocal(Box<Weight<T>>),
}

impl<T: Scalar> Weight<T> {
    pub fn unit(dim: usize) -> Self {
        Weight::Unit { dim }
    }

    /// Power weight, admissible (A2) only for `alpha` in `(-n, n)`.
    pub fn power(center: Vec<T>, alpha: T) -> Result<Self> {
        let n = T::from_count(center.len());
        if !(alpha > -n && alpha < n) {
            return Err(Error::Admissibility(format!(
                "power weight exponent {alpha} outside (-{n}, {n})"
            )));
        }
        Ok(Weight::Power { center, alpha })
    }

    /// Power weight without the A2 admissibility check (for diagnostics).
    pub fn power_unchecked(center: Vec<T>, alpha: T) -> Self {
        Weight::Power { center, alpha }
    }

    /// Point-set weight for observation points `points` in dimension `dim`.
    ///
    /// The separation `d_Z` is the minimum pairwise distance; a single point
    /// uses `d_Z = 1/2`.
    pub fn varpi(points: Vec<Vec<T>>, dim: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Admissibility("empty point set".into()));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Admissibility("point dimension mismatch".into()));
        }
        let mut sep = T::infinity();
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                sep = sep.min(dist(a, b));
            }
        }
        if points.len() == 1 {
            sep = T::lit(0.5);
        }
        if sep <= T::zero() {
            return Err(Error::Admissibility("repeated points".into()));
        }
        Ok(Weight::Varpi { points, dim, min_separation: sep })
    }

    pub fn reciprocal(self) -> Self {
        Weight::Reciprocal(Box::new(self))
    }

    pub fn dim(&self) -> usize {
        match self {
            Weight::Unit { dim } | Weight::Varpi { dim, .. } => *dim,
            Weight::Power { center, .. } => center.len(),
            Weight::Reciprocal(w) => w.dim(),
        }
    }

    pub fn is_unit(&self) -> bool {
        match self {
            Weight::Unit { .. } => true,
            Weight::Reciprocal(w) => w.is_unit(),
            _ => false,
        }
    }

    /// Points where the weight vanishes or blows up.
    pub fn singular_points(&self) -> Vec<Vec<T>> {
        match self {
            Weight::Unit { .. } => Vec::new(),
            Weight::Power { center, alpha } => {
                if *alpha == T::zero() {
                    Vec::new()
                } else {
                    vec![center.clone()]
                }
            }
            Weight::Varpi { points, .. } => points.clone(),
            Weight::Reciprocal(w) => w.singular_points(),
        }
    }

    /// Raw pointwise value; `0` where the weight vanishes and `+inf` where it
    /// blows up. Used inside quadrature loops.
    #[inline]
    pub fn value(&self, x: &[T]) -> T {
        match self {
            Weight::Unit { .. } => T::one(),
            Weight::Power { center, alpha } => {
                if *alpha == T::zero() {
                    T::one()
                } else {
                    dist(x, center).powf(*alpha)
                }
            }
            Weight::Varpi { points, dim, min_separation } => {
                let two = T::lit(2.0);
                let half = T::lit(0.5);
                let mut nearest: Option<T> = None;
                for z in points {
                    let d = dist(x, z) / (two * *min_separation);
                    if d < half && nearest.map_or(true, |n| d < n) {
                        nearest = Some(d);
                    }
                }
                let ln2 = two.ln();
                match nearest {
                    Some(d) => {
                        let l = d.ln();
                        if *dim == 2 {
                            T::one() / (l * l)
                        } else {
                            d / (l * l)
                        }
                    }
                    None => {
                        let c = if *dim == 2 { T::one() } else { half };
                        c / (ln2 * ln2)
                    }
                }
            }
            Weight::Reciprocal(w) => T::one() / w.value(x),
        }
    }

    /// Checked evaluation: blow-up points are reported as errors.
    pub fn eval(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!("point of dimension {} for a {}D weight", x.len(), self.dim())));
        }
        let v = self.value(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Singularity(format!("weight blows up at {:?}", x)))
        }
    }
}

/// Sampled lower envelope of the A2 constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct A2Estimate<T> {
    pub sampled_constant: T,
    pub ball_count: usize,
    pub min_radius: T,
}

/// Probes `sup_B (avg_B w)(avg_B 1/w)` over random balls.
///
/// Balls are taken in the max-norm (axis-aligned cubes), which changes the A2
/// constant only by a dimensional factor. Centers are uniform in `[-1,2]^n`
/// and half-widths log-uniform in `[min_radius, 1]`. Both averages are computed
/// with the adaptive integrator, so a weight that is not locally integrable
/// surfaces as an accuracy error. This is a heuristic probe, not a proof of
/// membership.
pub fn a2_estimate<T: Scalar>(w: &Weight<T>, balls: usize, min_radius: T, seed: u64) -> Result<A2Estimate<T>> {
    if balls == 0 {
        return Err(Error::Domain("at least one ball is required".into()));
    }
    if !(min_radius > T::zero() && min_radius <= T::one()) {
        return Err(Error::Domain(format!("min_radius {min_radius} outside (0, 1]")));
    }
    let dim = w.dim();
    let rule = QuadRule::<T>::new(dim, if dim == 2 { 11 } else { 7 })?;
    let inv = w.clone().reciprocal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_min = min_radius.as_f64().ln();
    let mut best = T::zero();
    for _ in 0..balls {
        let center: Vec<T> = (0..dim).map(|_| T::lit(rng.gen_range(-1.0..2.0))).collect();
        let r = T::lit((rng.gen::<f64>() * log_min).exp());
        let avg_w = cube_average(w, &center, r, &rule)?;
        let avg_inv = cube_average(&inv, &center, r, &rule)?;
        best = best.max(avg_w * avg_inv);
    }
    Ok(A2Estimate { sampled_constant: best, ball_count: balls, min_radius })
}

/// Average of `w` over the cube with the given center and half-width.
pub fn cube_average<T: Scalar>(w: &Weight<T>, center: &[T], half_width: T, rule: &QuadRule<T>) -> Result<T> {
    let dim = center.len();
    let corner = |offsets: [usize; 3]| -> [T; 3] {
        let mut p = [T::zero(); 3];
        for k in 0..dim {
            let s = if offsets[k] == 1 { T::one() } else { -T::one() };
            p[k] = center[k] + s * half_width;
        }
        p
    };
    let simplices: Vec<Simplex<T>> = if dim == 2 {
        let (a, b, c, d) = (corner([0, 0, 0]), corner([1, 0, 0]), corner([1, 1, 0]), corner([0, 1, 0]));
        vec![Simplex::new(2, &[a, b, c]), Simplex::new(2, &[a, c, d])]
    } else {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        perms
            .iter()
            .map(|p| {
                let mut off = [0usize; 3];
                let mut pts = vec![corner(off)];
                for &axis in p {
                    off[axis] = 1;
                    pts.push(corner(off));
                }
                Simplex::new(3, &pts)
            })
            .collect()
    };
    let mut total = T::zero();
    let mut out = [T::zero()];
    for s in &simplices {
        adaptive_integrate(s, rule, 1, |x, _, v| v[0] = w.value(x), AdaptiveOptions::default(), &mut out)?;
        total += out[0];
    }
    let volume = (T::lit(2.0) * half_width).powi(dim as i32);
    Ok(total / volume)
}
