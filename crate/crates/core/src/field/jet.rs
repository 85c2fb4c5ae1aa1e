//! Forward-mode dual numbers.
//!
//! `Dual<f64>` carries one directional derivative; nesting `Dual<Dual<f64>>`
//! carries a mixed second derivative. Expression programs are generic over
//! [`Scalar`], so the same evaluator serves values, gradients and Hessians.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    /// Underlying real value (the zeroth-order part).
    fn re(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// True when every component is finite.
    fn all_finite(&self) -> bool;
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
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
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

/// `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<S> {
    pub re: S,
    pub eps: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, eps: S) -> Self {
        Dual { re, eps }
    }

    pub fn variable(re: S) -> Self {
        Dual { re, eps: S::cst(1.0) }
    }

    pub fn constant(re: S) -> Self {
        Dual { re, eps: S::cst(0.0) }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, eps: self.re * o.eps + self.eps * o.re }
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual { re: q, eps: (self.eps - q * o.eps) / o.re }
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: -self.eps }
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual { re: S::cst(v), eps: S::cst(0.0) }
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re.re()
    }
    fn sin(self) -> Self {
        Dual { re: self.re.sin(), eps: self.eps * self.re.cos() }
    }
    fn cos(self) -> Self {
        Dual { re: self.re.cos(), eps: -(self.eps * self.re.sin()) }
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual { re: e, eps: self.eps * e }
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual { re: s, eps: self.eps / (S::cst(2.0) * s) }
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::cst(1.0);
        }
        Dual {
            re: self.re.powi(n),
            eps: S::cst(n as f64) * self.re.powi(n - 1) * self.eps,
        }
    }
    fn all_finite(&self) -> bool {
        self.re.all_finite() && self.eps.all_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::variable(2.0);
        let y = Dual::constant(3.0);
        let p = x * y;
        assert_eq!(p.re, 6.0);
        assert_eq!(p.eps, 3.0);
    }

    #[test]
    fn nested_second_derivative_of_sin() {
        // d²/dx² sin(x) = -sin(x)
        let x0 = 0.7_f64;
        let x = Dual::new(Dual::variable(x0), Dual::constant(1.0));
        let s = Scalar::sin(x);
        assert!((s.eps.eps + x0.sin()).abs() < 1e-15);
    }

    #[test]
    fn powi_negative_exponent() {
        let x = Dual::variable(2.0);
        let p = x.powi(-2);
        assert!((p.re - 0.25).abs() < 1e-15);
        assert!((p.eps + 0.25).abs() < 1e-15);
    }
}
