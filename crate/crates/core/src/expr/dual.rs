//! Forward-mode dual numbers.
//!
//! A [`Dual<T>`] carries a value and one directional derivative. Nesting
//! (`Dual<Dual<f64>>`) carries a second directional derivative, which is how
//! the expression evaluator obtains exact Hessian entries.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic the expression evaluator is generic over.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;

    /// The innermost real part. Domain checks look only at this.
    fn re(&self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;

    /// True when every component is finite.
    fn is_finite(&self) -> bool;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

/// `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    /// A variable seeded with unit derivative.
    pub fn variable(re: T) -> Self {
        Dual { re, eps: T::constant(1.0) }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Dual::new(self.re * rhs.re, self.re * rhs.eps + self.eps * rhs.re)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        Dual::new(
            self.re / rhs.re,
            (self.eps * rhs.re - self.re * rhs.eps) / (rhs.re * rhs.re),
        )
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn constant(v: f64) -> Self {
        Dual::new(T::constant(v), T::constant(0.0))
    }
    fn re(&self) -> f64 {
        self.re.re()
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -(self.eps * self.re.sin()))
    }
    fn tan(self) -> Self {
        let t = self.re.tan();
        Dual::new(t, self.eps * (T::constant(1.0) + t * t))
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, self.eps * e)
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.eps / (s * T::constant(2.0)))
    }
    fn sinh(self) -> Self {
        Dual::new(self.re.sinh(), self.eps * self.re.cosh())
    }
    fn cosh(self) -> Self {
        Dual::new(self.re.cosh(), self.eps * self.re.sinh())
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Dual::new(t, self.eps * (T::constant(1.0) - t * t))
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::variable(3.0);
        let y = x * x * x;
        assert_eq!(y.re, 27.0);
        assert_eq!(y.eps, 27.0);
    }

    #[test]
    fn nested_second_derivative() {
        // d²/dx² sin(x) = -sin(x)
        let x0 = 0.7_f64;
        let x = Dual::new(Dual::variable(x0), Dual::constant(1.0));
        let y = x.sin();
        assert!((y.eps.eps + x0.sin()).abs() < 1e-15);
        assert!((y.re.eps - x0.cos()).abs() < 1e-15);
        assert!((y.eps.re - x0.cos()).abs() < 1e-15);
    }

    #[test]
    fn quotient_and_log() {
        let x = Dual::variable(2.0);
        let y = Dual::constant(1.0) / x;
        assert_eq!(y.eps, -0.25);
        let l = x.ln();
        assert_eq!(l.eps, 0.5);
    }
}
