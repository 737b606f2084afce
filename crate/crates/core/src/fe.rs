//! Quadratic/linear finite element machinery on a [`Mesh`].
//!
//! Vector fields store two components per quadratic node, interleaved
//! (`2·node + component`). Pressures live on the vertices.

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::mesh::Mesh;
use crate::spectral::SpectralField;

/// Symmetric 6-point triangle rule, exact for degree 4 (barycentric points, weights sum to 1).
pub const TRI_RULE: [([f64; 3], f64); 6] = {
    const A1: f64 = 0.445_948_490_915_965;
    const B1: f64 = 0.108_103_018_168_070;
    const A2: f64 = 0.091_576_213_509_771;
    const B2: f64 = 0.816_847_572_980_459;
    const W1: f64 = 0.223_381_589_678_011;
    const W2: f64 = 0.109_951_743_655_322;
    [
        ([A1, A1, B1], W1),
        ([A1, B1, A1], W1),
        ([B1, A1, A1], W1),
        ([A2, A2, B2], W2),
        ([A2, B2, A2], W2),
        ([B2, A2, A2], W2),
    ]
};

/// Gauss–Legendre points on `[0, 1]` (4 points, degree 7).
pub fn gauss_legendre_01() -> [(f64, f64); 4] {
    let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let wa = (18.0 + 30f64.sqrt()) / 36.0;
    let wb = (18.0 - 30f64.sqrt()) / 36.0;
    [
        (0.5 * (1.0 - b), 0.5 * wb),
        (0.5 * (1.0 - a), 0.5 * wa),
        (0.5 * (1.0 + a), 0.5 * wa),
        (0.5 * (1.0 + b), 0.5 * wb),
    ]
}

/// Quadratic shape values at barycentric coordinates `l`.
pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// Quadratic shape gradients given barycentric coordinates and their gradients.
pub fn p2_gradients(l: [f64; 3], gl: [[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut g = [[0.0; 2]; 6];
    for d in 0..2 {
        g[0][d] = (4.0 * l[0] - 1.0) * gl[0][d];
        g[1][d] = (4.0 * l[1] - 1.0) * gl[1][d];
        g[2][d] = (4.0 * l[2] - 1.0) * gl[2][d];
        g[3][d] = 4.0 * (l[0] * gl[1][d] + l[1] * gl[0][d]);
        g[4][d] = 4.0 * (l[1] * gl[2][d] + l[2] * gl[1][d]);
        g[5][d] = 4.0 * (l[2] * gl[0][d] + l[0] * gl[2][d]);
    }
    g
}

/// Barycentric coordinate gradients and area of triangle `(a, b, c)`.
pub fn barycentric_gradients(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> ([[f64; 2]; 3], f64) {
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let g = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    (g, 0.5 * det)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub elem: usize,
    pub x: [f64; 2],
    pub w: f64,
    pub lam: [f64; 3],
    pub phi: [f64; 6],
    pub dphi: [[f64; 2]; 6],
}

/// All volume quadrature points of a mesh, element by element.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub points: Vec<QuadPoint>,
    /// Barycentric gradients per element (for linear pressure functions).
    pub lam_grad: Vec<[[f64; 2]; 3]>,
}

impl Quadrature {
    pub fn new(mesh: &Mesh) -> Self {
        let mut points = Vec::with_capacity(6 * mesh.triangles.len());
        let mut lam_grad = Vec::with_capacity(mesh.triangles.len());
        for (e, t) in mesh.triangles.iter().enumerate() {
            let (a, b, c) = (mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
            let (gl, area) = barycentric_gradients(a, b, c);
            lam_grad.push(gl);
            for &(l, w) in TRI_RULE.iter() {
                let x = [l[0] * a[0] + l[1] * b[0] + l[2] * c[0], l[0] * a[1] + l[1] * b[1] + l[2] * c[1]];
                points.push(QuadPoint { elem: e, x, w: w * area, lam: l, phi: p2_values(l), dphi: p2_gradients(l, gl) });
            }
        }
        Quadrature { points, lam_grad }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&QuadPoint) -> f64) -> f64 {
        self.points.iter().map(|q| q.w * f(q)).sum()
    }
}

/// Values and gradients of a vector field at quadrature points.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorAtQuad {
    pub val: Vec<[f64; 2]>,
    /// `grad[q][i][j] = ∂_j u_i`.
    pub grad: Vec<[[f64; 2]; 2]>,
}

impl VectorAtQuad {
    pub fn zeros(n: usize) -> Self {
        VectorAtQuad { val: vec![[0.0; 2]; n], grad: vec![[[0.0; 2]; 2]; n] }
    }

    pub fn axpy(&mut self, a: f64, other: &VectorAtQuad) {
        for (u, v) in self.val.iter_mut().zip(&other.val) {
            u[0] += a * v[0];
            u[1] += a * v[1];
        }
        for (u, v) in self.grad.iter_mut().zip(&other.grad) {
            for i in 0..2 {
                for j in 0..2 {
                    u[i][j] += a * v[i][j];
                }
            }
        }
    }
}

/// Evaluates a quadratic vector field (interleaved nodal values) at every quadrature point.
pub fn eval_vector(mesh: &Mesh, quad: &Quadrature, u: &[f64]) -> VectorAtQuad {
    let mut out = VectorAtQuad::zeros(quad.len());
    for (qi, q) in quad.points.iter().enumerate() {
        let el = &mesh.elements[q.elem];
        let mut v = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        for a in 0..6 {
            for c in 0..2 {
                let coef = u[2 * el[a] + c];
                v[c] += coef * q.phi[a];
                g[c][0] += coef * q.dphi[a][0];
                g[c][1] += coef * q.dphi[a][1];
            }
        }
        out.val[qi] = v;
        out.grad[qi] = g;
    }
    out
}

/// Evaluates a quadratic scalar field at every quadrature point.
pub fn eval_scalar(mesh: &Mesh, quad: &Quadrature, u: &[f64]) -> Vec<f64> {
    quad.points
        .iter()
        .map(|q| {
            let el = &mesh.elements[q.elem];
            (0..6).map(|a| u[el[a]] * q.phi[a]).sum()
        })
        .collect()
}

/// Evaluates a linear (vertex-based) scalar field at every quadrature point.
pub fn eval_linear(mesh: &Mesh, quad: &Quadrature, p: &[f64]) -> Vec<f64> {
    quad.points
        .iter()
        .map(|q| {
            let t = mesh.triangles[q.elem];
            (0..3).map(|a| p[t[a]] * q.lam[a]).sum()
        })
        .collect()
}

/// Interpolates a vector function at the quadratic nodes.
pub fn interpolate_vector(mesh: &Mesh, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let mut u = vec![0.0; 2 * mesh.num_nodes()];
    for (i, &x) in mesh.nodes.iter().enumerate() {
        let v = f(x);
        u[2 * i] = v[0];
        u[2 * i + 1] = v[1];
    }
    u
}

/// Scalar quadratic stiffness and mass matrices.
pub fn scalar_matrices(mesh: &Mesh, quad: &Quadrature) -> (CscMatrix<f64>, CscMatrix<f64>) {
    let n = mesh.num_nodes();
    let mut k = CooMatrix::new(n, n);
    let mut m = CooMatrix::new(n, n);
    for q in &quad.points {
        let el = &mesh.elements[q.elem];
        for a in 0..6 {
            for b in 0..6 {
                let kab = q.w * (q.dphi[a][0] * q.dphi[b][0] + q.dphi[a][1] * q.dphi[b][1]);
                k.push(el[a], el[b], kab);
                m.push(el[a], el[b], q.w * q.phi[a] * q.phi[b]);
            }
        }
    }
    (CscMatrix::from(&k), CscMatrix::from(&m))
}

/// `∫ |∇u|²` and `∫ u·v` style bilinear forms for interleaved vector fields.
pub fn vector_dot(mesh: &Mesh, quad: &Quadrature, u: &[f64], v: &[f64]) -> (f64, f64) {
    let a = eval_vector(mesh, quad, u);
    let b = eval_vector(mesh, quad, v);
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for (i, q) in quad.points.iter().enumerate() {
        l2 += q.w * (a.val[i][0] * b.val[i][0] + a.val[i][1] * b.val[i][1]);
        let mut g = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                g += a.grad[i][r][c] * b.grad[i][r][c];
            }
        }
        h1 += q.w * g;
    }
    (l2, h1)
}

/// Boundary trace of an interleaved vector field: the two components as spectral fields.
pub fn trace_restrict(mesh: &Mesh, u: &[f64]) -> (SpectralField, SpectralField) {
    let m = mesh.boundary_nodes.len();
    let k_max = (m - 1) / 2;
    let c0: Vec<f64> = mesh.boundary_nodes.iter().map(|&(i, _)| u[2 * i]).collect();
    let c1: Vec<f64> = mesh.boundary_nodes.iter().map(|&(i, _)| u[2 * i + 1]).collect();
    (SpectralField::from_grid(&c0, k_max), SpectralField::from_grid(&c1, k_max))
}

/// Locates the element containing `x` and returns it with barycentric coordinates.
pub fn locate(mesh: &Mesh, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
    let mut best: Option<(usize, [f64; 3], f64)> = None;
    for (e, t) in mesh.triangles.iter().enumerate() {
        let (a, b, c) = (mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
        let (g, _) = barycentric_gradients(a, b, c);
        let l1 = g[1][0] * (x[0] - a[0]) + g[1][1] * (x[1] - a[1]);
        let l2 = g[2][0] * (x[0] - a[0]) + g[2][1] * (x[1] - a[1]);
        let l = [1.0 - l1 - l2, l1, l2];
        let worst = l.iter().cloned().fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|b| worst > b.2) {
            best = Some((e, l, worst));
        }
    }
    best.filter(|b| b.2 > -1e-9).map(|b| (b.0, b.1))
}

/// Value and gradient of an interleaved vector field at an arbitrary point of element `e`.
pub fn eval_vector_at(mesh: &Mesh, u: &[f64], e: usize, l: [f64; 3]) -> ([f64; 2], [[f64; 2]; 2]) {
    let t = mesh.triangles[e];
    let (gl, _) = barycentric_gradients(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    let phi = p2_values(l);
    let dphi = p2_gradients(l, gl);
    let el = &mesh.elements[e];
    let mut v = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    for a in 0..6 {
        for c in 0..2 {
            let coef = u[2 * el[a] + c];
            v[c] += coef * phi[a];
            g[c][0] += coef * dphi[a][0];
            g[c][1] += coef * dphi[a][1];
        }
    }
    (v, g)
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
