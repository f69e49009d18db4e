//! Second-order forward differentiation via hyper-dual numbers.
//!
//! Closed-form fields are written once against [`Real`] and evaluated either
//! on `f64` or on [`HyperDual`], which carries exact first and second
//! directional derivatives. The residual audit of manufactured solutions uses
//! this to obtain Laplacians independently of hand-derived formulas.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Minimal real-number interface for closed-form fields.
pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    /// Value part, used for branch decisions such as clamping.
    fn re(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, e: f64) -> Self;
    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }
}

/// `a + b e1 + c e2 + d e1 e2` with `e1^2 = e2^2 = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperDual {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl HyperDual {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        HyperDual { a, b, c, d }
    }

    /// Variable seeded in both infinitesimal directions.
    pub fn variable(a: f64) -> Self {
        HyperDual { a, b: 1.0, c: 1.0, d: 0.0 }
    }

    /// Applies a scalar function given its value and first two derivatives.
    #[inline]
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        HyperDual { a: f0, b: f1 * self.b, c: f1 * self.c, d: f1 * self.d + f2 * self.b * self.c }
    }
}

impl Add for HyperDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        HyperDual::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Sub for HyperDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        HyperDual::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        HyperDual::new(
            self.a * o.a,
            self.a * o.b + self.b * o.a,
            self.a * o.c + self.c * o.a,
            self.a * o.d + self.b * o.c + self.c * o.b + self.d * o.a,
        )
    }
}

impl Div for HyperDual {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Neg for HyperDual {
    type Output = Self;
    fn neg(self) -> Self {
        HyperDual::new(-self.a, -self.b, -self.c, -self.d)
    }
}

impl Real for HyperDual {
    fn cst(v: f64) -> Self {
        HyperDual::new(v, 0.0, 0.0, 0.0)
    }
    fn re(self) -> f64 {
        self.a
    }
    fn sin(self) -> Self {
        let (s, c) = self.a.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.a.sin_cos();
        self.chain(c, -s, -c)
    }
    fn ln(self) -> Self {
        self.chain(self.a.ln(), 1.0 / self.a, -1.0 / (self.a * self.a))
    }
    fn sqrt(self) -> Self {
        let r = self.a.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.a))
    }
    fn powf(self, e: f64) -> Self {
        let p = self.a.powf(e);
        self.chain(p, e * p / self.a, e * (e - 1.0) * p / (self.a * self.a))
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.a;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

/// Laplacian of `f` at `x`, exact up to rounding.
pub fn laplacian(f: impl Fn(&[HyperDual]) -> HyperDual, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.len() {
        let args: Vec<HyperDual> =
            x.iter().enumerate().map(|(k, &v)| if k == i { HyperDual::variable(v) } else { HyperDual::cst(v) }).collect();
        total += f(&args).d;
    }
    total
}

/// Gradient of `f` at `x`.
pub fn gradient(f: impl Fn(&[HyperDual]) -> HyperDual, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let args: Vec<HyperDual> = x
                .iter()
                .enumerate()
                .map(|(k, &v)| if k == i { HyperDual::variable(v) } else { HyperDual::cst(v) })
                .collect();
            f(&args).b
        })
        .collect()
}

/// `div(w ∇u)` from Laplacians only: `(Δ(w u) + w Δu − u Δw) / 2`.
pub fn weighted_divergence(
    w: impl Fn(&[HyperDual]) -> HyperDual,
    u: impl Fn(&[HyperDual]) -> HyperDual,
    x: &[f64],
) -> f64 {
    let xs: Vec<HyperDual> = x.iter().map(|&v| HyperDual::cst(v)).collect();
    let wv = w(&xs).a;
    let uv = u(&xs).a;
    let lap_wu = laplacian(|p| w(p) * u(p), x);
    0.5 * (lap_wu + wv * laplacian(&u, x) - uv * laplacian(&w, x))
}
