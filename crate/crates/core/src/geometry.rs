//! Reference geometry, tubular coordinates and the Hanzawa family of maps.
//!
//! Points near the boundary curve `φ` are written as `x = φ(y) + s n(y)` with
//! signed distance `s` (negative inside). The Hanzawa map moves a point along
//! its normal fibre,
//!
//! ```text
//! Ψ_η(x) = φ(y) + (s + η(y) β(s)) n(y)   for |s| < L,     Ψ_η(x) = x otherwise,
//! ```
//!
//! and all derivatives are propagated exactly with [`Jet`]s through the `(y, s)` chart.

use std::f64::consts::PI;

use crate::error::{FsiError, Result};
use crate::jet::Jet;
use crate::spectral::SpectralField;

const TWO_PI: f64 = 2.0 * PI;
type Mat2 = [[f64; 2]; 2];

/// Point of a boundary curve with its first two derivatives, and the outward
/// unit normal with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveJet {
    pub p: [[f64; 2]; 3],
    pub n: [[f64; 2]; 3],
}

/// A closed, counter-clockwise, 1-periodic boundary parametrisation.
pub trait BoundaryCurve: Send + Sync + std::fmt::Debug {
    fn eval(&self, y: f64) -> CurveJet;

    /// Parameter of the closest boundary point: bracketed on a sample grid, then Newton.
    fn closest_param(&self, x: [f64; 2]) -> f64 {
        let samples = 512;
        let dist2 = |y: f64| {
            let p = self.eval(y).p[0];
            (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)
        };
        let mut best = (0.0, f64::INFINITY);
        for j in 0..samples {
            let y = j as f64 / samples as f64;
            let d = dist2(y);
            if d < best.1 {
                best = (y, d);
            }
        }
        let mut y = best.0;
        let h = 1.0 / samples as f64;
        for _ in 0..50 {
            let c = self.eval(y);
            let r = [c.p[0][0] - x[0], c.p[0][1] - x[1]];
            let g = r[0] * c.p[1][0] + r[1] * c.p[1][1];
            let dg = c.p[1][0].powi(2) + c.p[1][1].powi(2) + r[0] * c.p[2][0] + r[1] * c.p[2][1];
            let step = (g / dg).clamp(-h, h);
            y -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        y.rem_euclid(1.0)
    }
}

/// Circle of radius `radius` centred at the origin, `φ(y) = ρ(cos 2πy, sin 2πy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub radius: f64,
}

impl BoundaryCurve for Circle {
    fn eval(&self, y: f64) -> CurveJet {
        let (s, c) = (TWO_PI * y).sin_cos();
        let w = TWO_PI;
        let n = [[c, s], [-w * s, w * c], [-w * w * c, -w * w * s]];
        let r = self.radius;
        let p = [[r * n[0][0], r * n[0][1]], [r * n[1][0], r * n[1][1]], [r * n[2][0], r * n[2][1]]];
        CurveJet { p, n }
    }

    fn closest_param(&self, x: [f64; 2]) -> f64 {
        (x[1].atan2(x[0]) / TWO_PI).rem_euclid(1.0)
    }
}

/// Axis-aligned ellipse `φ(y) = (a cos 2πy, b sin 2πy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
}

impl BoundaryCurve for Ellipse {
    fn eval(&self, y: f64) -> CurveJet {
        let (s, c) = (TWO_PI * y).sin_cos();
        let w = TWO_PI;
        let (a, b) = (self.a, self.b);
        let p = [[a * c, b * s], [-w * a * s, w * b * c], [-w * w * a * c, -w * w * b * s]];
        // outward normal N/|N| with N = (b cos, a sin)
        let nn = [[b * c, a * s], [-w * b * s, w * a * c], [-w * w * b * c, -w * w * a * s]];
        let dot = |u: [f64; 2], v: [f64; 2]| u[0] * v[0] + u[1] * v[1];
        let q = dot(nn[0], nn[0]);
        let dq = 2.0 * dot(nn[0], nn[1]);
        let ddq = 2.0 * (dot(nn[1], nn[1]) + dot(nn[0], nn[2]));
        let r = q.sqrt();
        let mut n = [[0.0; 2]; 3];
        for i in 0..2 {
            n[0][i] = nn[0][i] / r;
            n[1][i] = nn[1][i] / r - 0.5 * nn[0][i] * dq / (q * r);
            n[2][i] = nn[2][i] / r - nn[1][i] * dq / (q * r) + 0.75 * nn[0][i] * dq * dq / (q * q * r)
                - 0.5 * nn[0][i] * ddq / (q * r);
        }
        CurveJet { p, n }
    }
}

/// Quintic smoothstep blend: 0 for `s ≤ -L`, rising on `[-L, -plateau·L]`, 1 above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blend {
    pub half_width: f64,
    pub plateau: f64,
}

impl Blend {
    pub fn new(half_width: f64) -> Self {
        Blend { half_width, plateau: 0.1 }
    }

    fn ramp(&self) -> f64 {
        (1.0 - self.plateau) * self.half_width
    }

    /// `β`, `β'`, `β''` at `s`.
    pub fn eval(&self, s: f64) -> [f64; 3] {
        let w = self.ramp();
        let u = (s + self.half_width) / w;
        if u <= 0.0 {
            [0.0; 3]
        } else if u >= 1.0 {
            [1.0, 0.0, 0.0]
        } else {
            let v = u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
            let d = 30.0 * u * u * (1.0 - u) * (1.0 - u);
            let dd = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
            [v, d / w, dd / (w * w)]
        }
    }

    /// `sup |β'| = 15 / (8 (1 - plateau) L)`.
    pub fn max_slope(&self) -> f64 {
        1.875 / self.ramp()
    }
}

/// Tubular coordinates of a point: foot parameter, signed distance and foot point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubularCoords {
    pub y: f64,
    pub s: f64,
    pub p: [f64; 2],
}

/// Exact second-order dependence of `(y, s)` on `x` plus the curve data at `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub coords: TubularCoords,
    pub y: Jet,
    pub s: Jet,
    pub curve: CurveJet,
}

#[derive(Debug)]
pub struct ReferenceDomain {
    pub curve: Box<dyn BoundaryCurve>,
    pub tube_width: f64,
    pub amplitude_bound: f64,
    pub blend: Blend,
}

impl ReferenceDomain {
    /// The unit disk with `L = 0.5` and `α = 0.1`.
    pub fn unit_disk() -> Self {
        Self::new(Box::new(Circle { radius: 1.0 }), 0.5, 0.1).expect("default parameters are admissible")
    }

    pub fn new(curve: Box<dyn BoundaryCurve>, tube_width: f64, amplitude_bound: f64) -> Result<Self> {
        if !(tube_width > 0.0) {
            return Err(FsiError::InvalidArgument("tube width must be positive".into()));
        }
        if !(amplitude_bound > 0.0 && amplitude_bound < tube_width) {
            return Err(FsiError::InvalidArgument("amplitude bound must lie in (0, L)".into()));
        }
        let blend = Blend::new(tube_width);
        if amplitude_bound * blend.max_slope() > 0.9 {
            return Err(FsiError::InvalidArgument(format!(
                "amplitude bound {amplitude_bound} violates the invertibility margin (max {:.4})",
                0.9 / blend.max_slope()
            )));
        }
        Ok(ReferenceDomain { curve, tube_width, amplitude_bound, blend })
    }

    pub fn boundary_point(&self, y: f64) -> [f64; 2] {
        self.curve.eval(y).p[0]
    }

    pub fn normal(&self, y: f64) -> [f64; 2] {
        self.curve.eval(y).n[0]
    }

    /// Length element `|φ'(y)|` of the boundary parametrisation.
    pub fn speed(&self, y: f64) -> f64 {
        let d = self.curve.eval(y).p[1];
        d[0].hypot(d[1])
    }

    pub fn tubular_coords(&self, x: [f64; 2]) -> Result<TubularCoords> {
        let y = self.curve.closest_param(x);
        let c = self.curve.eval(y);
        let p = c.p[0];
        let n = c.n[0];
        let s = (x[0] - p[0]) * n[0] + (x[1] - p[1]) * n[1];
        if s.abs() >= self.tube_width {
            return Err(FsiError::OutOfTube { dist: s.abs(), width: self.tube_width });
        }
        Ok(TubularCoords { y, s, p })
    }

    /// Chart data for `x`, or `None` outside the tube.
    pub fn chart(&self, x: [f64; 2]) -> Option<Chart> {
        let coords = self.tubular_coords(x).ok()?;
        let curve = self.curve.eval(coords.y);
        let s = coords.s;
        // DΛ = [∂_y Λ | ∂_s Λ], G = DΛ⁻¹ has rows ∇y and ∇s
        let ly = [curve.p[1][0] + s * curve.n[1][0], curve.p[1][1] + s * curve.n[1][1]];
        let ls = curve.n[0];
        let det = ly[0] * ls[1] - ls[0] * ly[1];
        let g = [[ls[1] / det, -ls[0] / det], [-ly[1] / det, ly[0] / det]];
        let lyy = [curve.p[2][0] + s * curve.n[2][0], curve.p[2][1] + s * curve.n[2][1]];
        let lys = curve.n[1];
        let mut h = [[[0.0; 2]; 2]; 2];
        for (a, ha) in h.iter_mut().enumerate() {
            for j in 0..2 {
                for k in 0..2 {
                    let mut acc = 0.0;
                    for i in 0..2 {
                        let second = lyy[i] * g[0][j] * g[0][k]
                            + lys[i] * (g[0][j] * g[1][k] + g[1][j] * g[0][k]);
                        acc -= g[a][i] * second;
                    }
                    ha[j][k] = acc;
                }
            }
        }
        Some(Chart {
            coords,
            y: Jet { v: coords.y, g: g[0], h: h[0] },
            s: Jet { v: s, g: g[1], h: h[1] },
            curve,
        })
    }
}

/// Pointwise transform data at a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTransform {
    pub psi: [f64; 2],
    /// `F = ∇Ψ`, `f[i][j] = ∂_j Ψ_i`.
    pub f: Mat2,
    /// `df[k][i][j] = ∂_k F_ij`.
    pub df: [Mat2; 2],
    pub j: f64,
    pub dj: [f64; 2],
    pub psi_t: [f64; 2],
    pub f_t: Mat2,
    pub j_t: f64,
}

impl PointTransform {
    pub fn identity(x: [f64; 2]) -> Self {
        PointTransform {
            psi: x,
            f: [[1.0, 0.0], [0.0, 1.0]],
            df: [[[0.0; 2]; 2]; 2],
            j: 1.0,
            dj: [0.0; 2],
            psi_t: [0.0; 2],
            f_t: [[0.0; 2]; 2],
            j_t: 0.0,
        }
    }

    /// Cofactor matrix `J F^{-T}`, i.e. the `B` field.
    pub fn b(&self) -> Mat2 {
        let f = &self.f;
        [[f[1][1], -f[1][0]], [-f[0][1], f[0][0]]]
    }

    pub fn f_inv(&self) -> Mat2 {
        let f = &self.f;
        let j = self.j;
        [[f[1][1] / j, -f[0][1] / j], [-f[1][0] / j, f[0][0] / j]]
    }

    /// `A = J F^{-1} F^{-T}`.
    pub fn a(&self) -> Mat2 {
        let g = self.f_inv();
        let mut a = [[0.0; 2]; 2];
        for i in 0..2 {
            for k in 0..2 {
                a[i][k] = self.j * (g[i][0] * g[k][0] + g[i][1] * g[k][1]);
            }
        }
        a
    }

    /// Domain velocity `W = ∂ₜ(Ψ⁻¹)∘Ψ = -F⁻¹ ∂ₜΨ`.
    pub fn w(&self) -> [f64; 2] {
        let g = self.f_inv();
        [
            -(g[0][0] * self.psi_t[0] + g[0][1] * self.psi_t[1]),
            -(g[1][0] * self.psi_t[0] + g[1][1] * self.psi_t[1]),
        ]
    }
}

/// The Hanzawa map for a shell displacement `η` and velocity `∂ₜη`.
#[derive(Debug, Clone, Copy)]
pub struct GeometryMap<'a> {
    pub domain: &'a ReferenceDomain,
    pub eta: &'a SpectralField,
    pub eta_t: Option<&'a SpectralField>,
}

impl<'a> GeometryMap<'a> {
    pub fn new(domain: &'a ReferenceDomain, eta: &'a SpectralField, eta_t: Option<&'a SpectralField>) -> Result<Self> {
        let amplitude = eta.sup_norm();
        if amplitude > domain.amplitude_bound {
            return Err(FsiError::AmplitudeExceeded { amplitude, bound: domain.amplitude_bound });
        }
        Ok(GeometryMap { domain, eta, eta_t })
    }

    pub fn map(&self, x: [f64; 2]) -> [f64; 2] {
        let Ok(tc) = self.domain.tubular_coords(x) else { return x };
        let n = self.domain.normal(tc.y);
        let shift = tc.s + self.eta.eval(tc.y) * self.domain.blend.eval(tc.s)[0];
        [tc.p[0] + shift * n[0], tc.p[1] + shift * n[1]]
    }

    /// Inverts the map by a safeguarded Newton solve along the normal fibre.
    pub fn inverse(&self, xh: [f64; 2]) -> Result<[f64; 2]> {
        let Ok(tc) = self.domain.tubular_coords(xh) else { return Ok(xh) };
        let eta = self.eta.eval(tc.y);
        let target = tc.s;
        let blend = &self.domain.blend;
        let resid = |s: f64| s + eta * blend.eval(s)[0] - target;
        let (mut lo, mut hi) = (-self.domain.tube_width, target + eta.abs());
        if resid(lo) > 0.0 {
            // the fibre point lies in the identity region
            return Ok(xh);
        }
        let mut s = target - eta;
        if !(s > lo && s < hi) {
            s = 0.5 * (lo + hi);
        }
        for _ in 0..100 {
            let r = resid(s);
            if r.abs() <= 1e-15 * (1.0 + target.abs()) {
                let n = self.domain.normal(tc.y);
                return Ok([tc.p[0] + s * n[0], tc.p[1] + s * n[1]]);
            }
            if r > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let d = 1.0 + eta * blend.eval(s)[1];
            let next = s - r / d;
            s = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-17 {
                let n = self.domain.normal(tc.y);
                return Ok([tc.p[0] + s * n[0], tc.p[1] + s * n[1]]);
            }
        }
        Err(FsiError::NoConvergence { iterations: 100, residual: resid(s).abs() })
    }

    /// Transform data at `x` using a precomputed chart (`None` = identity region).
    pub fn fields_with_chart(&self, x: [f64; 2], chart: Option<&Chart>) -> Result<PointTransform> {
        let Some(ch) = chart else { return Ok(PointTransform::identity(x)) };
        let ev = self.eta.eval_derivs(ch.coords.y);
        let eta = ch.y.compose(ev[0], ev[1], ev[2]);
        let bl = self.domain.blend.eval(ch.coords.s);
        let beta = ch.s.compose(bl[0], bl[1], bl[2]);
        let shift = eta * beta;
        let comp = |data: &[[f64; 2]; 3], i: usize| ch.y.compose(data[0][i], data[1][i], data[2][i]);
        // displacement form keeps η ≡ 0 bit-exact
        let mut psi = [Jet::constant(0.0); 2];
        for (i, p) in psi.iter_mut().enumerate() {
            *p = Jet::variable(x[i], i) + shift * comp(&ch.curve.n, i);
        }
        let mut out = PointTransform::identity(x);
        for i in 0..2 {
            out.psi[i] = psi[i].v;
            for j in 0..2 {
                out.f[i][j] = psi[i].g[j];
                for k in 0..2 {
                    out.df[k][i][j] = psi[i].h[j][k];
                }
            }
        }
        let cof = out.b();
        out.j = out.f[0][0] * out.f[1][1] - out.f[0][1] * out.f[1][0];
        for k in 0..2 {
            out.dj[k] = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| cof[i][j] * out.df[k][i][j]).sum();
        }
        if out.j <= 0.0 {
            return Err(FsiError::NonInvertible { jacobian: out.j, x: x[0], y: x[1] });
        }
        if let Some(eta_t) = self.eta_t {
            let et = eta_t.eval_derivs(ch.coords.y);
            let vel = ch.y.compose(et[0], et[1], et[2]) * beta;
            for i in 0..2 {
                let pt = vel * comp(&ch.curve.n, i);
                out.psi_t[i] = pt.v;
                out.f_t[i] = pt.g;
            }
            out.j_t = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| cof[i][j] * out.f_t[i][j]).sum();
        }
        Ok(out)
    }

    pub fn fields(&self, x: [f64; 2]) -> Result<PointTransform> {
        let chart = self.domain.chart(x);
        self.fields_with_chart(x, chart.as_ref())
    }

    /// `J` at the boundary point `φ(y)`.
    pub fn boundary_jacobian(&self, y: f64) -> Result<f64> {
        let x = self.domain.boundary_point(y);
        Ok(self.fields(x)?.j)
    }

    /// `sup_y |∂ₙΨ − n|` over `samples` equispaced boundary points.
    pub fn normal_invariance(&self, samples: usize) -> Result<f64> {
        let mut worst = 0.0f64;
        for k in 0..samples {
            let y = k as f64 / samples as f64;
            let x = self.domain.boundary_point(y);
            let n = self.domain.normal(y);
            let t = self.fields(x)?;
            for i in 0..2 {
                let dn = t.f[i][0] * n[0] + t.f[i][1] * n[1];
                worst = worst.max((dn - n[i]).abs());
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blend_endpoints_and_slope() {
        let b = Blend::new(0.5);
        assert_eq!(b.eval(-0.5), [0.0; 3]);
        assert_eq!(b.eval(0.0), [1.0, 0.0, 0.0]);
        assert_eq!(b.eval(-0.05), [1.0, 0.0, 0.0]);
        // slope peaks at the ramp midpoint
        let mid = -0.5 + 0.5 * 0.45;
        assert!((b.eval(mid)[1] - b.max_slope()).abs() < 1e-12);
        assert!((b.max_slope() - 1.875 / 0.45).abs() < 1e-14);
    }

    #[test]
    fn blend_derivatives_match_differences() {
        let b = Blend::new(0.5);
        let h = 1e-6;
        for s in [-0.45, -0.3, -0.2, -0.1] {
            let fd = (b.eval(s + h)[0] - b.eval(s - h)[0]) / (2.0 * h);
            assert!((fd - b.eval(s)[1]).abs() < 1e-8);
            let fd2 = (b.eval(s + h)[1] - b.eval(s - h)[1]) / (2.0 * h);
            assert!((fd2 - b.eval(s)[2]).abs() < 1e-6);
        }
    }

    #[test]
    fn ellipse_normal_is_unit_and_orthogonal() {
        let e = Ellipse { a: 1.2, b: 0.8 };
        for y in [0.0, 0.13, 0.5, 0.81] {
            let c = e.eval(y);
            let n = c.n[0];
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-14);
            assert!((n[0] * c.p[1][0] + n[1] * c.p[1][1]).abs() < 1e-12);
            let h = 1e-6;
            let (np, nm) = (e.eval(y + h).n[0], e.eval(y - h).n[0]);
            assert!(((np[0] - nm[0]) / (2.0 * h) - c.n[1][0]).abs() < 1e-6);
            let (dp, dm) = (e.eval(y + h).n[1], e.eval(y - h).n[1]);
            assert!(((dp[1] - dm[1]) / (2.0 * h) - c.n[2][1]).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_inadmissible_parameters() {
        let c = || Box::new(Circle { radius: 1.0 });
        assert!(ReferenceDomain::new(c(), 0.5, 0.6).is_err());
        assert!(ReferenceDomain::new(c(), 0.5, 0.3).is_err());
        assert!(ReferenceDomain::new(c(), 0.5, 0.2).is_ok());
    }
}
