//! Transform fields sampled on fixed point sets, and basis fields pushed
//! through them.
//!
//! A fluid field `𝐗` on the reference domain is represented in the transformed
//! equations by `G = J⁻¹ F 𝐗` (so that `B:∇G = div 𝐗` pointwise), and a shell
//! mode `X` by `ψ = X / (J∘φ)`.

use rayon::prelude::*;

use crate::error::Result;
use crate::fe::{eval_vector, Quadrature, VectorAtQuad};
use crate::mesh::Mesh;
use crate::geometry::{Chart, GeometryMap, PointTransform, ReferenceDomain};
use crate::spectral::SpectralField;

pub type Mat2 = [[f64; 2]; 2];

/// Reference points with their tubular charts precomputed.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub x: Vec<[f64; 2]>,
    charts: Vec<Option<Chart>>,
}

impl PointSet {
    pub fn new(domain: &ReferenceDomain, x: Vec<[f64; 2]>) -> Self {
        let charts = x.par_iter().map(|&p| domain.chart(p)).collect();
        PointSet { x, charts }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Transform data at every point for displacement `eta` and velocity `eta_t`.
    pub fn transforms(&self, map: &GeometryMap<'_>) -> Result<Vec<PointTransform>> {
        self.x
            .par_iter()
            .zip(self.charts.par_iter())
            .map(|(&x, ch)| map.fields_with_chart(x, ch.as_ref()))
            .collect()
    }
}

/// Shell-side geometry on the uniform grid `y_j = j/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellGeometry {
    pub y: Vec<f64>,
    pub jb: Vec<f64>,
    pub jb_t: Vec<f64>,
    pub zeta_t: Vec<f64>,
    /// `|∂_y φ|` at the grid points.
    pub speed: Vec<f64>,
}

impl ShellGeometry {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// All transform data at one instant.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: f64,
    pub quad: Vec<PointTransform>,
    pub shell: ShellGeometry,
}

impl Frame {
    pub fn new(
        domain: &ReferenceDomain,
        quad: &PointSet,
        grid: &PointSet,
        t: f64,
        zeta: &SpectralField,
        zeta_t: &SpectralField,
    ) -> Result<Frame> {
        let map = GeometryMap::new(domain, zeta, Some(zeta_t))?;
        let q = quad.transforms(&map)?;
        let b = grid.transforms(&map)?;
        let m = grid.len();
        let y: Vec<f64> = (0..m).map(|j| j as f64 / m as f64).collect();
        let shell = ShellGeometry {
            jb: b.iter().map(|p| p.j).collect(),
            jb_t: b.iter().map(|p| p.j_t).collect(),
            zeta_t: y.iter().map(|&yy| zeta_t.eval(yy)).collect(),
            speed: y.iter().map(|&yy| domain.speed(yy)).collect(),
            y,
        };
        Ok(Frame { t, quad: q, shell })
    }

    pub fn min_jacobian(&self) -> f64 {
        self.quad.iter().map(|p| p.j).fold(f64::INFINITY, f64::min)
    }
}

/// Grid points `φ(j/M)` on the reference boundary.
pub fn boundary_grid(domain: &ReferenceDomain, m: usize) -> PointSet {
    PointSet::new(domain, (0..m).map(|j| domain.boundary_point(j as f64 / m as f64)).collect())
}

/// `G = J⁻¹ F X`, its gradient and its time derivative at one point.
#[inline]
pub fn push(t: &PointTransform, x: [f64; 2], dx: &Mat2) -> ([f64; 2], Mat2, [f64; 2]) {
    let inv_j = 1.0 / t.j;
    let fx = [t.f[0][0] * x[0] + t.f[0][1] * x[1], t.f[1][0] * x[0] + t.f[1][1] * x[1]];
    let g = [fx[0] * inv_j, fx[1] * inv_j];
    let mut dg = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            let dfx = t.df[k][i][0] * x[0] + t.df[k][i][1] * x[1];
            let fdx = t.f[i][0] * dx[0][k] + t.f[i][1] * dx[1][k];
            dg[i][k] = inv_j * (dfx + fdx) - inv_j * inv_j * t.dj[k] * fx[i];
        }
    }
    let gt = [
        inv_j * (t.f_t[0][0] * x[0] + t.f_t[0][1] * x[1]) - inv_j * t.j_t * g[0],
        inv_j * (t.f_t[1][0] * x[0] + t.f_t[1][1] * x[1]) - inv_j * t.j_t * g[1],
    ];
    (g, dg, gt)
}

/// A basis function pushed through a frame, sampled at the quadrature points.
#[derive(Debug, Clone, Default)]
pub struct PushedField {
    pub g: Vec<[f64; 2]>,
    pub dg: Vec<Mat2>,
    pub gt: Vec<[f64; 2]>,
}

impl PushedField {
    pub fn new(frame: &Frame, field: &VectorAtQuad) -> Self {
        let n = frame.quad.len();
        let mut out = PushedField { g: Vec::with_capacity(n), dg: Vec::with_capacity(n), gt: Vec::with_capacity(n) };
        for (q, t) in frame.quad.iter().enumerate() {
            let (g, dg, gt) = push(t, field.val[q], &field.grad[q]);
            out.g.push(g);
            out.dg.push(dg);
            out.gt.push(gt);
        }
        out
    }
}

/// `(Σ_i ‖div I_h B_i‖²_{L²})^{1/2}`, where `I_h B_i` is the quadratic nodal
/// interpolant of row `i` of the cofactor matrix. Zero for exact rows.
pub fn piola_residual(mesh: &Mesh, quad: &Quadrature, map: &GeometryMap<'_>) -> Result<f64> {
    let nodes = PointSet::new(map.domain, mesh.nodes.clone());
    let tr = nodes.transforms(map)?;
    let mut total = 0.0;
    for i in 0..2 {
        let row: Vec<f64> = tr.iter().flat_map(|t| t.b()[i]).collect();
        let rq = eval_vector(mesh, quad, &row);
        total += quad.points.iter().zip(&rq.grad).map(|(q, g)| q.w * (g[0][0] + g[1][1]).powi(2)).sum::<f64>();
    }
    Ok(total.sqrt())
}
