//! Pressure recovery for the transformed system.
//!
//! The zero-mean part comes from projecting the momentum residual onto
//! discrete pressure gradients: with `B` as the divergence weight, find `π₀`
//! such that `∫ π₀ B:∇w = R(w)` in the least-squares sense of the
//! `B`-weighted saddle-point system. The constant is then fixed by testing
//! the shell equation with 1.

use nalgebra::DVector;

use crate::diagnostics::time_derivative;
use crate::dynamics::{Model, Physics, RunOutput};
use crate::error::{FsiError, Result};
use crate::fe::{eval_vector_at, Quadrature, VectorAtQuad};
use crate::frame::{push, Frame, Mat2};
use crate::geometry::GeometryMap;
use crate::mesh::Mesh;
use crate::saddle::{StokesSolver, SystemLayout};
use crate::spectral::ShellTrajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    /// Zero-mean part (mean taken over the deformed domain) per mesh vertex.
    pub pi0: Vec<f64>,
    pub c_pi: f64,
    pub balance: MeanBalance,
}

impl PressureField {
    pub fn at_vertex(&self, v: usize) -> f64 {
        self.pi0[v] + self.c_pi
    }
}

/// Terms of the shell equation tested with 1.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanBalance {
    /// `∫ n·n_η |∂_y φ_η| dy`.
    pub normal_area: f64,
    /// `∫ nᵀ(μ(∇v + ∇vᵀ) − π₀ I) n_η |∂_y φ_η| dy`.
    pub traction: f64,
    /// `ρ_s ∫ ∂ₜ²η`.
    pub shell_accel: f64,
    /// `∫ g`.
    pub shell_force: f64,
}

impl MeanBalance {
    pub fn c_pi(&self) -> Result<f64> {
        if self.normal_area.abs() < 1e-14 {
            return Err(FsiError::DegenerateWeight);
        }
        Ok((self.traction + self.shell_accel - self.shell_force) / self.normal_area)
    }
}

/// Transformed velocity data at the quadrature points.
pub struct MomentumState<'a> {
    pub t: f64,
    pub v: &'a VectorAtQuad,
    /// `∂ₜv̄` at fixed reference points.
    pub v_t: &'a [[f64; 2]],
}

/// Zero-mean pressure per vertex from the momentum residual
/// `R(w) = ∫ ρ_f J(∂ₜv̄ + ∇v̄ W)·w + ρ_f ∫(∇v̄ Bᵀv̄)·w + μ∫ ∇v̄ A:∇w − ∫ J f∘Ψ·w`.
pub fn project_pressure(
    mesh: &Mesh,
    quad: &Quadrature,
    frame: &Frame,
    physics: &Physics,
    forcing: &crate::dynamics::ForcingSpec,
    state: &MomentumState<'_>,
) -> Result<Vec<f64>> {
    let mut load = vec![0.0; 2 * mesh.num_nodes()];
    let mut weights: Vec<Mat2> = Vec::with_capacity(quad.len());
    for (qi, q) in quad.points.iter().enumerate() {
        let tr = &frame.quad[qi];
        let b = tr.b();
        weights.push(b);
        let a = tr.a();
        let w = tr.w();
        let (v, dv) = (state.v.val[qi], state.v.grad[qi]);
        let bt_v = [b[0][0] * v[0] + b[1][0] * v[1], b[0][1] * v[0] + b[1][1] * v[1]];
        let f = forcing.fluid(state.t, tr.psi);
        let mut body = [0.0; 2];
        let mut flux = [[0.0; 2]; 2];
        for i in 0..2 {
            let transport = dv[i][0] * w[0] + dv[i][1] * w[1];
            let convect = dv[i][0] * bt_v[0] + dv[i][1] * bt_v[1];
            body[i] = physics.rho_f * (tr.j * (state.v_t[qi][i] + transport) + convect) - tr.j * f[i];
            for j in 0..2 {
                flux[i][j] = physics.mu * (dv[i][0] * a[0][j] + dv[i][1] * a[1][j]);
            }
        }
        let el = &mesh.elements[q.elem];
        for n in 0..6 {
            for i in 0..2 {
                load[2 * el[n] + i] += q.w * (body[i] * q.phi[n] + flux[i][0] * q.dphi[n][0] + flux[i][1] * q.dphi[n][1]);
            }
        }
    }
    let solver = StokesSolver::with_layout(mesh, quad, &SystemLayout::full(mesh), Some(&weights))?;
    let zero_div = DVector::zeros(solver.num_pressure());
    let zero_bc = vec![0.0; load.len()];
    let (_, mut p) = solver.solve(&load, &zero_div, &zero_bc)?;
    // mean over the deformed domain: ∫ J p / ∫ J
    let (mut num, mut den) = (0.0, 0.0);
    for (qi, q) in quad.points.iter().enumerate() {
        let t = &mesh.triangles[q.elem];
        let pv: f64 = (0..3).map(|k| q.lam[k] * p[t[k]]).sum();
        num += q.w * frame.quad[qi].j * pv;
        den += q.w * frame.quad[qi].j;
    }
    let mean = num / den;
    p.iter_mut().for_each(|x| *x -= mean);
    if p.iter().any(|x| !x.is_finite()) {
        return Err(FsiError::SingularSolve("pressure projection".into()));
    }
    Ok(p)
}

/// Elements adjacent to each boundary vertex, in the order of `mesh.boundary`.
fn boundary_elements(mesh: &Mesh) -> Vec<Vec<(usize, [f64; 3])>> {
    let mut out = vec![Vec::new(); mesh.boundary.len()];
    let mut slot = vec![usize::MAX; mesh.num_vertices()];
    for (i, &(v, _)) in mesh.boundary.iter().enumerate() {
        slot[v] = i;
    }
    for (e, t) in mesh.triangles.iter().enumerate() {
        for (k, &v) in t.iter().enumerate() {
            if slot[v] != usize::MAX {
                let mut l = [0.0; 3];
                l[k] = 1.0;
                out[slot[v]].push((e, l));
            }
        }
    }
    out
}

/// Full pressure for accepted step `step` of a run driven by `zeta`.
/// `∂ₜv̄` and `∂ₜ²η` are second-order differences of accepted states.
pub fn pressure_recover(
    model: &Model<'_>,
    quad: &Quadrature,
    zeta: &ShellTrajectory,
    run: &RunOutput,
    step: usize,
) -> Result<PressureField> {
    let n_states = run.states.len();
    if n_states < 3 {
        return Err(FsiError::InsufficientHistory { needed: 3, got: n_states });
    }
    if step >= n_states {
        return Err(FsiError::InvalidArgument(format!("step {step} beyond the {n_states} accepted states")));
    }
    let dt = run.states[1].t - run.states[0].t;
    // three consecutive states containing `step`
    let first = step.saturating_sub(1).min(n_states - 3);
    let mut vals = Vec::with_capacity(3);
    let mut stages = Vec::with_capacity(3);
    for s in &run.states[first..first + 3] {
        let (z, zt) = zeta.eval(s.t);
        let st = model.stage(s.t, &z, &zt)?;
        vals.push((&st.g * &s.alpha).as_slice().to_vec());
        stages.push(st);
    }
    let local = step - first;
    let nq = quad.len();
    let mut v_t = vec![[0.0; 2]; nq];
    let mut column = [0.0; 3];
    for q in 0..nq {
        for c in 0..2 {
            for i in 0..3 {
                column[i] = vals[i][2 * q + c];
            }
            v_t[q][c] = time_derivative(&column, dt)?[local];
        }
    }
    let stage = &stages[local];
    let state = &run.states[step];
    let dv = &stage.dg * &state.alpha;
    let v = VectorAtQuad {
        val: (0..nq).map(|q| [vals[local][2 * q], vals[local][2 * q + 1]]).collect(),
        grad: (0..nq).map(|q| [[dv[4 * q], dv[4 * q + 1]], [dv[4 * q + 2], dv[4 * q + 3]]]).collect(),
    };
    let t = state.t;
    let pi0 = project_pressure(
        model.mesh,
        quad,
        &stage.frame,
        &model.physics,
        &model.forcing,
        &MomentumState { t, v: &v, v_t: &v_t },
    )?;

    // shell acceleration mean from the history of ∂ₜη
    let means: Vec<f64> = run.history[first..first + 3].iter().map(|h| h.eta_t.iter().sum::<f64>() / h.eta_t.len() as f64).collect();
    let accel = time_derivative(&means, dt)?[local];
    let m = stage.frame.shell.y.len();
    let shell_force = stage.frame.shell.y.iter().map(|&y| model.forcing.shell(t, y)).sum::<f64>() / m as f64;

    let (z, _) = zeta.eval(t);
    let map = GeometryMap::new(model.domain, &z, None)?;
    let mesh = model.mesh;
    let adjacent = boundary_elements(mesh);
    let mut normal_area = 0.0;
    let mut traction = 0.0;
    let nb = mesh.boundary.len();
    for (i, &(vtx, y)) in mesh.boundary.iter().enumerate() {
        let x = mesh.vertices[vtx];
        let tr = map.fields(x)?;
        let n = model.domain.normal(y);
        let speed = model.domain.speed(y);
        let tangent = [-n[1] * speed, n[0] * speed];
        let c = [tr.f[0][0] * tangent[0] + tr.f[0][1] * tangent[1], tr.f[1][0] * tangent[0] + tr.f[1][1] * tangent[1]];
        let big_n = [c[1], -c[0]];
        // ∇v̄ averaged over the elements sharing the vertex
        let mut grad = [[0.0; 2]; 2];
        for &(e, l) in &adjacent[i] {
            for k in 0..model.len() {
                let (xv, dx) = eval_vector_at(mesh, model.basis.pair(k).field, e, l);
                let (_, dg, _) = push(&tr, xv, &dx);
                for a in 0..2 {
                    for b in 0..2 {
                        grad[a][b] += state.alpha[k] * dg[a][b] / adjacent[i].len() as f64;
                    }
                }
            }
        }
        let fi = tr.f_inv();
        let mut gv = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                gv[a][b] = grad[a][0] * fi[0][b] + grad[a][1] * fi[1][b];
            }
        }
        let mut sn = [0.0; 2];
        for a in 0..2 {
            for b in 0..2 {
                let sym = model.physics.mu * (gv[a][b] + gv[b][a]) - if a == b { pi0[vtx] } else { 0.0 };
                sn[a] += sym * big_n[b];
            }
        }
        normal_area += (n[0] * big_n[0] + n[1] * big_n[1]) / nb as f64;
        traction += (n[0] * sn[0] + n[1] * sn[1]) / nb as f64;
    }
    let balance = MeanBalance { normal_area, traction, shell_accel: model.physics.rho_s * accel, shell_force };
    Ok(PressureField { pi0, c_pi: balance.c_pi()?, balance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_vanishes_without_sources() {
        let b = MeanBalance { normal_area: 6.283, ..MeanBalance::default() };
        assert_eq!(b.c_pi().unwrap(), 0.0);
        let degenerate = MeanBalance::default();
        assert!(matches!(degenerate.c_pi(), Err(FsiError::DegenerateWeight)));
    }

    #[test]
    fn unit_normal_area_at_identity() {
        // n·n_η |∂_y φ_η| integrates to the circumference 2π for η = 0
        let b = MeanBalance { normal_area: 2.0 * std::f64::consts::PI, traction: 2.0 * std::f64::consts::PI, ..Default::default() };
        assert!((b.c_pi().unwrap() - 1.0).abs() < 1e-15);
    }
}
