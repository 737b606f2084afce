//! Second-order forward-mode jets in two variables.
//!
//! A [`Jet`] carries a value, its gradient and its Hessian with respect to the
//! Cartesian coordinates `(x1, x2)`. The geometry module builds the Hanzawa
//! map out of jets, so deformation gradients and their spatial derivatives are
//! exact up to round-off.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [[f64; 2]; 2],
}

impl Jet {
    pub const fn constant(v: f64) -> Self {
        Jet { v, g: [0.0; 2], h: [[0.0; 2]; 2] }
    }

    /// The coordinate function `x_i` evaluated at `v`.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut g = [0.0; 2];
        g[i] = 1.0;
        Jet { v, g, h: [[0.0; 2]; 2] }
    }

    /// Composition `f(self)` given `f`, `f'`, `f''` at `self.v`.
    pub fn compose(self, f: f64, df: f64, ddf: f64) -> Self {
        let mut out = Jet::constant(f);
        for i in 0..2 {
            out.g[i] = df * self.g[i];
            for j in 0..2 {
                out.h[i][j] = ddf * self.g[i] * self.g[j] + df * self.h[i][j];
            }
        }
        out
    }

    pub fn scale(self, c: f64) -> Self {
        let mut out = self;
        out.v *= c;
        for i in 0..2 {
            out.g[i] *= c;
            for j in 0..2 {
                out.h[i][j] *= c;
            }
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut out = self;
        out.v += o.v;
        for i in 0..2 {
            out.g[i] += o.g[i];
            for j in 0..2 {
                out.h[i][j] += o.h[i][j];
            }
        }
        out
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..2 {
            out.g[i] = self.v * o.g[i] + o.v * self.g[i];
            for j in 0..2 {
                out.h[i][j] = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.g[i] * o.g[j]
                    + self.g[j] * o.g[i];
            }
        }
        out
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, c: f64) -> Jet {
        let mut out = self;
        out.v += c;
        out
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_matches_polynomial() {
        // p(x1, x2) = x1^2 x2 at (1.5, -2)
        let x = Jet::variable(1.5, 0);
        let y = Jet::variable(-2.0, 1);
        let p = x * x * y;
        assert!((p.v - 1.5 * 1.5 * -2.0).abs() < 1e-15);
        assert!((p.g[0] - 2.0 * 1.5 * -2.0).abs() < 1e-15);
        assert!((p.g[1] - 2.25).abs() < 1e-15);
        assert!((p.h[0][0] - 2.0 * -2.0).abs() < 1e-15);
        assert!((p.h[0][1] - 3.0).abs() < 1e-15);
        assert_eq!(p.h[0][1], p.h[1][0]);
        assert_eq!(p.h[1][1], 0.0);
    }

    #[test]
    fn composition_with_sin() {
        let x = Jet::variable(0.3, 0);
        let y = Jet::variable(0.7, 1);
        let u = x * y;
        let s = u.compose(u.v.sin(), u.v.cos(), -u.v.sin());
        // d/dx1 sin(x1 x2) = x2 cos(x1 x2)
        assert!((s.g[0] - 0.7 * (0.21f64).cos()).abs() < 1e-15);
        // d2/dx1dx2 = cos(u) - x1 x2 sin(u)
        let want = (0.21f64).cos() - 0.21 * (0.21f64).sin();
        assert!((s.h[0][1] - want).abs() < 1e-15);
    }
}
