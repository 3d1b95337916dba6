//! Forward-mode differentiation with dual numbers.
//!
//! A [`Dual`] carries a value and one tangent; evaluating a scalar function
//! once per coordinate with a unit tangent yields its exact gradient (to
//! rounding). The [`Real`] trait lets the model and cost code run unchanged
//! on plain `f64` or on duals.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by `f64` and [`Dual`].
pub trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    /// The underlying value (tangent dropped).
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan(self) -> Self;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
}

impl Real for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        libm::sin(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn atan(self) -> Self {
        libm::atan(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    fn abs(self) -> Self {
        libm::fabs(self)
    }
}

/// Value plus tangent. Non-differentiable points of `sqrt` and `abs` take the
/// zero subgradient, so window costs built from norms stay evaluable at the
/// warm start where disturbance estimates are exactly zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub dx: f64,
}

impl Dual {
    pub fn new(re: f64, dx: f64) -> Self {
        Dual { re, dx }
    }

    pub fn var(re: f64) -> Self {
        Dual { re, dx: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.dx + o.dx)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.dx - o.dx)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.dx + self.dx * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual::new(
            self.re / o.re,
            (self.dx * o.re - self.re * o.dx) / (o.re * o.re),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.dx)
    }
}

impl PartialOrd for Dual {
    fn partial_cmp(&self, o: &Dual) -> Option<core::cmp::Ordering> {
        self.re.partial_cmp(&o.re)
    }
}

impl Real for Dual {
    fn constant(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn sin(self) -> Self {
        Dual::new(libm::sin(self.re), self.dx * libm::cos(self.re))
    }
    fn cos(self) -> Self {
        Dual::new(libm::cos(self.re), -self.dx * libm::sin(self.re))
    }
    fn atan(self) -> Self {
        Dual::new(libm::atan(self.re), self.dx / (1.0 + self.re * self.re))
    }
    fn ln(self) -> Self {
        Dual::new(libm::log(self.re), self.dx / self.re)
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.re);
        Dual::new(e, self.dx * e)
    }
    fn sqrt(self) -> Self {
        if self.re > 0.0 {
            let s = libm::sqrt(self.re);
            Dual::new(s, self.dx / (2.0 * s))
        } else {
            // |.| at the origin: zero subgradient.
            Dual::new(0.0, 0.0)
        }
    }
    fn abs(self) -> Self {
        if self.re > 0.0 {
            self
        } else if self.re < 0.0 {
            -self
        } else {
            Dual::new(0.0, 0.0)
        }
    }
}

pub fn norm_sq<T: Real>(v: &[T]) -> T {
    let mut acc = T::constant(0.0);
    for &x in v {
        acc = acc + x * x;
    }
    acc
}

/// Euclidean norm.
pub fn norm<T: Real>(v: &[T]) -> T {
    norm_sq(v).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(dist_sq(a, b))
}

/// Exact gradient of `f` at `z` by one forward pass per coordinate.
pub fn gradient<F>(f: F, z: &[f64]) -> Vec<f64>
where
    F: Fn(&[Dual]) -> Dual,
{
    let mut duals: Vec<Dual> = z.iter().map(|&v| Dual::constant(v)).collect();
    let mut grad = vec![0.0; z.len()];
    for j in 0..z.len() {
        duals[j].dx = 1.0;
        grad[j] = f(&duals).dx;
        duals[j].dx = 0.0;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_gradient_is_exact() {
        // f(z) = z1^2 + 3 z2 at (2, 5) -> (4, 3)
        let g = gradient(
            |z| z[0] * z[0] + Dual::constant(3.0) * z[1],
            &[2.0, 5.0],
        );
        assert_eq!(g, vec![4.0, 3.0]);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = gradient(|_| Dual::constant(7.5), &[1.0, -2.0, 0.3]);
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn transcendental_chain_matches_central_differences() {
        let f64_fn = |z: &[f64]| (z[0].sin() * z[1].exp() + (z[0] * z[0] + 1.0).ln()).atan();
        let dual_fn =
            |z: &[Dual]| (z[0].sin() * z[1].exp() + (z[0] * z[0] + Dual::constant(1.0)).ln()).atan();
        let z = [0.7, -0.3];
        let g = gradient(dual_fn, &z);
        let h = 1e-6;
        for j in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[j] += h;
            zm[j] -= h;
            let fd = (f64_fn(&zp) - f64_fn(&zm)) / (2.0 * h);
            assert!((g[j] - fd).abs() < 1e-8, "coord {j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn norm_subgradient_at_origin_is_zero() {
        let g = gradient(|z| norm(z), &[0.0, 0.0]);
        assert_eq!(g, vec![0.0, 0.0]);
        let g = gradient(|z| norm(z), &[3.0, 4.0]);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
