//! Divergence correction on moving domains: a Bogovskij-type right inverse of
//! the divergence, the solenoidal extension of shell data and the flux
//! corrector.
//!
//! Fields on `Ω_η` are handled through the reference domain. The Bogovskij
//! output is stored as a reference field `ũ` whose Piola image `J⁻¹F ũ` is the
//! pulled-back physical field, so the physical divergence is `J⁻¹ div ũ`
//! exactly and the discrete constraint is the plain one.

use nalgebra::DVector;

use crate::error::{FsiError, Result};
use crate::fe::Quadrature;
use crate::frame::{push, PointSet};
use crate::geometry::{GeometryMap, PointTransform, ReferenceDomain};
use crate::mesh::Mesh;
use crate::saddle::{StokesSolver, SystemLayout};
use crate::spectral::SpectralField;

/// Radius of the reference bump.
pub const BUMP_RADIUS: f64 = 0.45;

pub struct CorrectionContext<'a> {
    pub domain: &'a ReferenceDomain,
    pub mesh: &'a Mesh,
    pub quad: &'a Quadrature,
    solver: StokesSolver,
    tube: StokesSolver,
    tube_elements: Vec<bool>,
    /// Bump values at the quadrature points, unit discrete integral.
    bump: Vec<f64>,
    points: PointSet,
    node_points: PointSet,
}

/// Output of [`CorrectionContext::bogovskij`].
#[derive(Debug, Clone, PartialEq)]
pub struct BogovskijField {
    /// Reference field `ũ`; the pulled-back physical field is `J⁻¹F ũ`.
    pub reference: Vec<f64>,
    /// Largest violation of the discrete divergence identity.
    pub residual: f64,
    /// `‖ũ‖_{W^{1,2}} / ‖f‖_{L²}` (zero for `f = 0`).
    pub bound_ratio: f64,
}

/// Output of [`CorrectionContext::solenoidal_extend`]: both parts are
/// reference fields and the pulled-back field is `ū = J⁻¹F (lift + correction)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extension {
    pub lift: Vec<f64>,
    pub correction: Vec<f64>,
    pub corrector: f64,
    pub residual: f64,
}

impl<'a> CorrectionContext<'a> {
    pub fn new(domain: &'a ReferenceDomain, mesh: &'a Mesh, quad: &'a Quadrature) -> Result<Self> {
        let inner = 1.0 - domain.tube_width;
        let radius = |v: usize| mesh.vertices[v][0].hypot(mesh.vertices[v][1]);
        if !(0..=mesh.rings).any(|r| (r as f64 / mesh.rings as f64 - inner).abs() < 1e-12) {
            return Err(FsiError::Mesh(format!("no mesh ring at the tube boundary r = {inner}")));
        }
        let tube_elements: Vec<bool> =
            mesh.triangles.iter().map(|t| t.iter().all(|&v| radius(v) >= inner - 1e-12)).collect();
        let mut dirichlet = mesh.on_boundary.clone();
        // inner ring: its vertices and the midpoints of the chords joining them
        let on_ring = |v: usize| (radius(v) - inner).abs() < 1e-9;
        for (t, el) in mesh.triangles.iter().zip(&mesh.elements) {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if on_ring(a) && on_ring(b) {
                    dirichlet[el[k]] = true;
                    dirichlet[el[(k + 1) % 3]] = true;
                    dirichlet[el[3 + k]] = true;
                }
            }
        }
        let layout = SystemLayout {
            elements: (0..mesh.triangles.len()).filter(|&e| tube_elements[e]).collect(),
            dirichlet,
        };
        let tube = StokesSolver::with_layout(mesh, quad, &layout, None)?;
        let solver = StokesSolver::new(mesh, quad)?;

        let raw: Vec<f64> = quad
            .points
            .iter()
            .map(|q| {
                let u = 1.0 - (q.x[0] * q.x[0] + q.x[1] * q.x[1]) / (BUMP_RADIUS * BUMP_RADIUS);
                if u > 0.0 { u * u * u } else { 0.0 }
            })
            .collect();
        let total: f64 = quad.points.iter().zip(&raw).map(|(q, b)| q.w * b).sum();
        let bump = raw.iter().map(|b| b / total).collect();
        Ok(CorrectionContext {
            domain,
            mesh,
            quad,
            solver,
            tube,
            tube_elements,
            bump,
            points: PointSet::new(domain, quad.points.iter().map(|q| q.x).collect()),
            node_points: PointSet::new(domain, mesh.nodes.clone()),
        })
    }

    pub fn bump(&self) -> &[f64] {
        &self.bump
    }

    fn transforms(&self, eta: &SpectralField) -> Result<Vec<PointTransform>> {
        let map = GeometryMap::new(self.domain, eta, None)?;
        self.points.transforms(&map)
    }

    /// `ũ` with zero trace and `div(J⁻¹F ũ ∘ Ψ⁻¹) = f − b ∫_{Ω_η} f` on `Ω_η`,
    /// minimizing `∫|∇ũ|²`. `f` holds `f∘Ψ` at the quadrature points.
    pub fn bogovskij(&self, eta: &SpectralField, f: &[f64]) -> Result<BogovskijField> {
        if f.len() != self.quad.len() {
            return Err(FsiError::InvalidArgument("f must be sampled at the quadrature points".into()));
        }
        let tr = self.transforms(eta)?;
        let total: f64 = self.quad.points.iter().zip(&tr).zip(f).map(|((q, t), v)| q.w * t.j * v).sum();
        // the bump sits where Ψ is the identity, so J = 1 on its support
        let g = self.moments(|qi| tr[qi].j * f[qi] - self.bump[qi] * total, &self.solver, None);
        let zero = vec![0.0; 2 * self.mesh.num_nodes()];
        let (u, _) = self.solver.solve(&zero, &g, &zero)?;
        let residual = (self.solver.divergence(&u) - &g).amax();
        let f_norm: f64 = self.quad.points.iter().zip(f).zip(&tr).map(|((q, v), t)| q.w * t.j * v * v).sum::<f64>().sqrt();
        let (l2, h1) = crate::fe::vector_dot(self.mesh, self.quad, &u, &u);
        let bound_ratio = if f_norm > 0.0 { (l2 + h1).sqrt() / f_norm } else { 0.0 };
        Ok(BogovskijField { reference: u, residual, bound_ratio })
    }

    /// Moments `∫_layout λ_p h` per pressure dof of `solver`.
    fn moments(&self, h: impl Fn(usize) -> f64, solver: &StokesSolver, elements: Option<&[bool]>) -> DVector<f64> {
        let mut slot = vec![usize::MAX; self.mesh.num_vertices()];
        for (i, &v) in solver.pressure_vertices().iter().enumerate() {
            slot[v] = i;
        }
        let mut g = DVector::zeros(solver.num_pressure());
        for (qi, q) in self.quad.points.iter().enumerate() {
            if elements.is_some_and(|e| !e[q.elem]) {
                continue;
            }
            let hv = h(qi);
            for (k, &v) in self.mesh.triangles[q.elem].iter().enumerate() {
                g[slot[v]] += q.w * q.lam[k] * hv;
            }
        }
        g
    }

    /// Reference nodal lift `ũ = J F⁻¹ (ξ β n)`, whose Piola image is the
    /// normal lift `ξ(y) β(s) n(y)`; zero outside the tube.
    fn normal_lift(&self, xi: &SpectralField, tr: &[PointTransform]) -> Vec<f64> {
        let mut u = vec![0.0; 2 * self.mesh.num_nodes()];
        for (n, &x) in self.mesh.nodes.iter().enumerate() {
            if let Ok(c) = self.domain.tubular_coords(x) {
                let beta = self.domain.blend.eval(c.s)[0];
                if beta == 0.0 {
                    continue;
                }
                let nrm = self.domain.normal(c.y);
                let v = xi.eval(c.y) * beta;
                // J F⁻¹ = cof(F)ᵀ
                let b = tr[n].b();
                u[2 * n] = v * (b[0][0] * nrm[0] + b[1][0] * nrm[1]);
                u[2 * n + 1] = v * (b[0][1] * nrm[0] + b[1][1] * nrm[1]);
            }
        }
        u
    }

    /// Divergence-free field on `Ω_η` with trace `(ξ − 𝒦_η(ξ)) n` on the moving
    /// boundary, supported in the tube.
    pub fn solenoidal_extend(&self, xi: &SpectralField, eta: &SpectralField) -> Result<Extension> {
        let k = corrector(xi, eta)?;
        let xi_c = xi.axpy(-k, &SpectralField::constant(xi.k_max(), 1.0));
        let map = GeometryMap::new(self.domain, eta, None)?;
        let nodes = self.node_points.transforms(&map)?;
        let tube = Some(self.tube_elements.as_slice());
        // remove the O(h) flux left by interpolation with the lift of ξ ≡ 1
        let mut lift = self.normal_lift(&xi_c, &nodes);
        let one = self.normal_lift(&SpectralField::constant(xi.k_max(), 1.0), &nodes);
        let ratio = self.reference_flux(&lift) / self.reference_flux(&one);
        lift.iter_mut().zip(&one).for_each(|(u, o)| *u -= ratio * o);

        let lq = crate::fe::eval_vector(self.mesh, self.quad, &lift);
        let g = self.moments(|qi| -(lq.grad[qi][0][0] + lq.grad[qi][1][1]), &self.tube, tube);
        let zero = vec![0.0; 2 * self.mesh.num_nodes()];
        let (correction, _) = self.tube.solve(&zero, &g, &zero)?;
        let residual = (self.tube.divergence(&correction) - &g).amax();
        Ok(Extension { lift, correction, corrector: k, residual })
    }

    /// `∫ div ũ` over the tube for a reference field.
    fn reference_flux(&self, u: &[f64]) -> f64 {
        let uq = crate::fe::eval_vector(self.mesh, self.quad, u);
        self.quad
            .points
            .iter()
            .zip(&uq.grad)
            .filter(|(q, _)| self.tube_elements[q.elem])
            .map(|(q, g)| q.w * (g[0][0] + g[1][1]))
            .sum()
    }

    /// Pulled-back physical field `ū = J⁻¹F (lift + correction)` at every mesh node.
    pub fn extension_nodal(&self, ext: &Extension, eta: &SpectralField) -> Result<Vec<f64>> {
        let map = GeometryMap::new(self.domain, eta, None)?;
        let tr = self.node_points.transforms(&map)?;
        let mut out = vec![0.0; ext.lift.len()];
        for (n, t) in tr.iter().enumerate() {
            let c = [ext.lift[2 * n] + ext.correction[2 * n], ext.lift[2 * n + 1] + ext.correction[2 * n + 1]];
            let (g, _, _) = push(t, c, &[[0.0; 2]; 2]);
            out[2 * n] = g[0];
            out[2 * n + 1] = g[1];
        }
        Ok(out)
    }

    /// Net flux of `ū` through the moving boundary, `∮ ū·(cof F) ν ds` over
    /// the boundary edges of the mesh, each split into `m` Gauss panels.
    /// `ū` is evaluated as the Piola image of the interpolated reference field.
    pub fn boundary_flux(&self, ext: &Extension, eta: &SpectralField, m: usize) -> Result<f64> {
        let map = GeometryMap::new(self.domain, eta, None)?;
        let mesh = self.mesh;
        let rule = crate::fe::gauss_legendre_01();
        let mut acc = 0.0;
        for (t, el) in mesh.triangles.iter().zip(&mesh.elements) {
            for k in 0..3 {
                let (na, nb, nm) = (el[k], el[(k + 1) % 3], el[3 + k]);
                if !(mesh.on_boundary[na] && mesh.on_boundary[nb] && mesh.on_boundary[nm]) {
                    continue;
                }
                let (a, b) = (mesh.vertices[t[k]], mesh.vertices[t[(k + 1) % 3]]);
                // counter-clockwise triangles: the outward normal of edge a→b is its clockwise rotation
                let nu = [b[1] - a[1], a[0] - b[0]];
                for p in 0..m {
                    for &(xg, wg) in &rule {
                        let s = (p as f64 + xg) / m as f64;
                        let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                        let shape = [(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)];
                        let mut r = [0.0; 2];
                        for (c, v) in r.iter_mut().enumerate() {
                            let at = |i: usize| ext.lift[2 * i + c] + ext.correction[2 * i + c];
                            *v = shape[0] * at(na) + shape[1] * at(nb) + shape[2] * at(nm);
                        }
                        let tr = map.fields(x)?;
                        let (u, _, _) = push(&tr, r, &[[0.0; 2]; 2]);
                        let cof = tr.b();
                        let mut f = 0.0;
                        for i in 0..2 {
                            f += u[i] * (cof[i][0] * nu[0] + cof[i][1] * nu[1]);
                        }
                        acc += wg / m as f64 * f;
                    }
                }
            }
        }
        Ok(acc)
    }
}

/// Weighted boundary mean `∫ ξ (1 + η) / ∫ (1 + η)`.
pub fn corrector(xi: &SpectralField, eta: &SpectralField) -> Result<f64> {
    let weight = eta.axpy(1.0, &SpectralField::constant(eta.k_max(), 1.0));
    let m = 4 * (2 * weight.k_max().max(xi.k_max()) + 1);
    if weight.to_grid(m).iter().any(|&w| w <= 0.0) {
        return Err(FsiError::DegenerateWeight);
    }
    Ok(xi.dot(&weight) / weight.mean())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrector_examples() {
        let zero = SpectralField::zeros(4);
        let s = SpectralField::sin_mode(4, 1, 1.0);
        assert!((corrector(&SpectralField::constant(4, 2.5), &s.scaled(0.1)).unwrap() - 2.5).abs() < 1e-14);
        assert!(corrector(&s, &zero).unwrap().abs() < 1e-15);
        assert!((corrector(&s, &s.scaled(0.1)).unwrap() - 0.05).abs() < 1e-14);
        assert!(matches!(corrector(&s, &s.scaled(1.5)), Err(FsiError::DegenerateWeight)));
    }

    #[test]
    fn corrector_annihilates_its_own_output() {
        let eta = SpectralField::cos_mode(6, 2, 0.07);
        let xi = SpectralField::sin_mode(6, 1, 0.4).axpy(1.0, &SpectralField::constant(6, 0.3));
        let k = corrector(&xi, &eta).unwrap();
        let rest = xi.axpy(-k, &SpectralField::constant(6, 1.0));
        assert!(corrector(&rest, &eta).unwrap().abs() < 1e-15);
    }
}
