//! Forward-mode dual numbers carrying a single directional derivative.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub v: f64,
    pub t: f64,
}

impl Dual {
    pub const fn new(v: f64, t: f64) -> Self {
        Dual { v, t }
    }

    pub const fn constant(v: f64) -> Self {
        Dual { v, t: 0.0 }
    }

    /// A variable seeded with unit tangent.
    pub const fn variable(v: f64) -> Self {
        Dual { v, t: 1.0 }
    }

    pub fn scale(self, c: f64) -> Self {
        Dual::new(self.v * c, self.t * c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Dual::new(e, e * self.t)
    }

    pub fn ln(self) -> Self {
        Dual::new(self.v.ln(), self.t / self.v)
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Dual::new(s, self.t / (2.0 * s))
    }

    pub fn sin(self) -> Self {
        Dual::new(self.v.sin(), self.v.cos() * self.t)
    }

    pub fn cos(self) -> Self {
        Dual::new(self.v.cos(), -self.v.sin() * self.t)
    }

    pub fn sigmoid(self) -> Self {
        let s = sigmoid(self.v);
        Dual::new(s, s * (1.0 - s) * self.t)
    }

    pub fn silu(self) -> Self {
        Dual::new(silu(self.v), silu_prime(self.v) * self.t)
    }

    pub fn is_finite(self) -> bool {
        self.v.is_finite() && self.t.is_finite()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.t + o.t)
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, o: Dual) {
        self.v += o.v;
        self.t += o.t;
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.t - o.t)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.v * o.t + self.t * o.v)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual::new(self.v / o.v, (self.t * o.v - self.v * o.t) / (o.v * o.v))
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.t)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, c: f64) -> Dual {
        Dual::new(self.v + c, self.t)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, c: f64) -> Dual {
        Dual::new(self.v - c, self.t)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, c: f64) -> Dual {
        self.scale(c)
    }
}

impl Mul<Dual> for f64 {
    type Output = Dual;
    fn mul(self, d: Dual) -> Dual {
        d.scale(self)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    fn div(self, c: f64) -> Dual {
        Dual::new(self.v / c, self.t / c)
    }
}

/// Splits a dual vector into values and tangents.
pub fn unzip(xs: &[Dual]) -> (Vec<f64>, Vec<f64>) {
    xs.iter().map(|d| (d.v, d.t)).unzip()
}

pub fn zip(values: &[f64], tangents: &[f64]) -> Vec<Dual> {
    assert_eq!(values.len(), tangents.len(), "value/tangent length mismatch");
    values.iter().zip(tangents).map(|(&v, &t)| Dual::new(v, t)).collect()
}

pub fn constants(values: &[f64]) -> Vec<Dual> {
    values.iter().map(|&v| Dual::constant(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn elementary_rules_match_finite_differences() {
        let x = 0.73;
        let d = Dual::variable(x);
        let cases: Vec<(Dual, f64)> = vec![
            (d * d * d, fd(|x| x * x * x, x)),
            (d.exp() / (d + 2.0), fd(|x| x.exp() / (x + 2.0), x)),
            (d.ln() * d.sin(), fd(|x| x.ln() * x.sin(), x)),
            (d.sqrt() - d.cos(), fd(|x| x.sqrt() - x.cos(), x)),
            (d.silu(), fd(silu, x)),
            (d.sigmoid(), fd(sigmoid, x)),
        ];
        for (i, (dual, expect)) in cases.into_iter().enumerate() {
            assert!((dual.t - expect).abs() < 1e-8, "case {i}: {} vs {}", dual.t, expect);
        }
    }

    #[test]
    fn silu_prime_on_both_tails() {
        for &x in &[-40.0, -3.0, 0.0, 2.5, 40.0] {
            assert!((silu_prime(x) - fd(silu, x)).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn constants_carry_no_tangent() {
        let c = Dual::constant(3.0);
        let x = Dual::variable(2.0);
        assert_eq!((c * x).t, 3.0);
        assert_eq!((c * c).t, 0.0);
    }
}
