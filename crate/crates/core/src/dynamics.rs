//! Galerkin ODE for the transformed fluid–shell system and its time integration.
//!
//! Unknowns are the coefficients `α` of the enumerated basis. For a geometry
//! `ζ` the transformed velocity is `v̄ = Σ α_k J⁻¹F𝐗_k` and the shell velocity
//! `∂ₜη = Σ α_k X_k / (J∘φ)`. Testing the transformed momentum and shell
//! equations with the same pairs gives
//!
//! `𝒜(t) α' + (C_geo + μ V + ε E) α + N(α) + κ ∫ Δη Δψ = ℱ`,
//!
//! integrated by the implicit midpoint rule, with `η` advanced by the
//! midpoint quadrature of `∂ₜη`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{project_shell, GalerkinBasis};
use crate::diagnostics::{accel_energy, HistorySample, Row};
use crate::error::{FsiError, Result};
use crate::expr::{Expr, Point, Var};
use crate::fe::{eval_vector, Quadrature, VectorAtQuad};
use crate::frame::{boundary_grid, push, Frame, Mat2, PointSet, PushedField};
use crate::geometry::{GeometryMap, ReferenceDomain};
use crate::mesh::Mesh;
use crate::spectral::{grid_derivative, RealMode, ShellTrajectory, SpectralField};

const PICARD_TOL: f64 = 1e-10;
const PICARD_MAX: usize = 50;
/// `s` in the fractional dissipation norm `W^{2+s,2}`.
pub const FRACTIONAL_ORDER: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physics {
    pub rho_f: f64,
    pub rho_s: f64,
    pub mu: f64,
    pub stiffness: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { rho_f: 1.0, rho_s: 1.0, mu: 1.0, stiffness: 1.0 }
    }
}

/// Fluid force `f(t, x̂)` on the deformed domain and shell force `g(t, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub f: [Expr; 2],
    pub g: Expr,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec { f: [Expr::zero(), Expr::zero()], g: Expr::zero() }
    }
}

impl ForcingSpec {
    pub fn is_zero(&self) -> bool {
        self.f[0].is_zero() && self.f[1].is_zero() && self.g.is_zero()
    }

    pub fn fluid(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let p = Point { t, x1: x[0], x2: x[1], y: 0.0 };
        [self.f[0].eval(p), self.f[1].eval(p)]
    }

    pub fn shell(&self, t: f64, y: f64) -> f64 {
        self.g.eval(Point { t, y, ..Point::default() })
    }
}

/// Initial fluid velocity on the reference domain.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialVelocity {
    /// Stokes lift of the shell velocity, no interior modes.
    Lift,
    /// `v̄₀ = 0` (requires `η_* = 0`).
    Zero,
    /// Interleaved nodal values of `v̄₀`.
    Field(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub eta0: SpectralField,
    pub eta_star: SpectralField,
    pub velocity: InitialVelocity,
}

impl InitialData {
    pub fn at_rest(eta0: SpectralField) -> Self {
        let k = eta0.k_max();
        InitialData { eta0, eta_star: SpectralField::zeros(k), velocity: InitialVelocity::Zero }
    }

    /// Largest violation of `v̄₀∘φ = η_* n` over the boundary nodes.
    pub fn compatibility_defect(&self, mesh: &Mesh) -> f64 {
        match &self.velocity {
            InitialVelocity::Lift => 0.0,
            InitialVelocity::Zero => mesh.boundary_nodes.iter().map(|&(_, y)| self.eta_star.eval(y).abs()).fold(0.0, f64::max),
            InitialVelocity::Field(v) => mesh
                .boundary_nodes
                .iter()
                .map(|&(node, y)| {
                    let a = 2.0 * std::f64::consts::PI * y;
                    let e = self.eta_star.eval(y);
                    (v[2 * node] - e * a.cos()).hypot(v[2 * node + 1] - e * a.sin())
                })
                .fold(0.0, f64::max),
        }
    }
}

/// Mollifies the initial data with radius `eps` and re-imposes the kinematic
/// compatibility on the boundary trace of the velocity.
pub fn regularize_initial_data(data: &InitialData, eps: f64, mesh: &Mesh) -> Result<InitialData> {
    let defect = data.compatibility_defect(mesh);
    let scale = 1.0 + data.eta_star.sup_norm();
    if defect > 1e-8 * scale {
        return Err(FsiError::IncompatibleData { defect });
    }
    if eps == 0.0 {
        return Ok(data.clone());
    }
    let eta0 = data.eta0.mollify(eps);
    let eta_star = data.eta_star.mollify(eps);
    let velocity = match &data.velocity {
        InitialVelocity::Field(v) => {
            let mut v = v.clone();
            for &(node, y) in &mesh.boundary_nodes {
                let a = 2.0 * std::f64::consts::PI * y;
                let e = eta_star.eval(y);
                v[2 * node] = e * a.cos();
                v[2 * node + 1] = e * a.sin();
            }
            InitialVelocity::Field(v)
        }
        other => other.clone(),
    };
    Ok(InitialData { eta0, eta_star, velocity })
}

/// Discrete state: coefficients and shell displacement on the shell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub alpha: DVector<f64>,
    pub eta: Vec<f64>,
}

/// Geometry-dependent data of the Galerkin system at one instant.
#[derive(Debug, Clone)]
pub struct Stage {
    pub frame: Frame,
    /// `G_k` at quadrature points, rows `2q + c`.
    pub g: DMatrix<f64>,
    /// `∇G_k`, rows `4q + 2i + j` for `∂_j G_i`.
    pub dg: DMatrix<f64>,
    /// `∂ₜG_k + ∇G_k W`.
    h: DMatrix<f64>,
    /// `∇G_k A`.
    e: DMatrix<f64>,
    /// Quadrature weight times `J`.
    pub jw: Vec<f64>,
    /// `Bᵀ = J F⁻¹` per point.
    bt: Vec<Mat2>,
    /// Shell test functions `ψ_k` on the grid (zero columns for fluid modes).
    pub psi: DMatrix<f64>,
    psi_t: DMatrix<f64>,
    lap_psi: DMatrix<f64>,
    dpsi: DMatrix<f64>,
}

/// Linear operators of the ODE at one stage.
#[derive(Debug, Clone)]
pub struct Operators {
    pub mass: DMatrix<f64>,
    pub mass_fluid: DMatrix<f64>,
    pub geo: DMatrix<f64>,
    pub visc: DMatrix<f64>,
    pub eps: DMatrix<f64>,
    pub elastic: DMatrix<f64>,
}

/// Per-step bookkeeping of the discrete energy balance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepBalance {
    pub dissipation: f64,
    pub eps_dissipation: f64,
    pub geometry_work: f64,
    pub forcing_work: f64,
    pub defect: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub t_final: f64,
    pub dt: f64,
}

/// Result of a run with prescribed geometry.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub states: Vec<State>,
    pub history: Vec<HistorySample>,
    pub trajectory: ShellTrajectory,
    /// Largest `‖𝒜 − 𝒜ᵀ‖` and smallest eigenvalue of `𝒜` over accepted steps.
    pub mass_symmetry_defect: f64,
    pub mass_min_eigenvalue: f64,
    /// Reason the run stopped early, if it did.
    pub stop: Option<FsiError>,
}

impl RunOutput {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("a run has at least its initial state")
    }
}

pub struct Model<'a> {
    pub domain: &'a ReferenceDomain,
    pub mesh: &'a Mesh,
    pub basis: &'a GalerkinBasis,
    pub physics: Physics,
    pub forcing: ForcingSpec,
    pub epsilon: f64,
    weights: Vec<f64>,
    quad_set: PointSet,
    grid_set: PointSet,
    vert_set: PointSet,
    vert_nodes: Vec<(usize, f64)>,
    fields: Vec<VectorAtQuad>,
    divs: Vec<Vec<f64>>,
    shell_x: DMatrix<f64>,
    modes: Vec<RealMode>,
    m: usize,
}

impl<'a> Model<'a> {
    /// `m` is the size of the shell grid (`y_j = j/m`).
    pub fn new(
        domain: &'a ReferenceDomain,
        mesh: &'a Mesh,
        quad: &Quadrature,
        basis: &'a GalerkinBasis,
        physics: Physics,
        forcing: ForcingSpec,
        epsilon: f64,
        m: usize,
    ) -> Self {
        let n = basis.len();
        let fields: Vec<VectorAtQuad> = (0..n).map(|k| eval_vector(mesh, quad, basis.pair(k).field)).collect();
        let divs = fields.iter().map(|f| f.grad.iter().map(|g| g[0][0] + g[1][1]).collect()).collect();
        let mut shell_x = DMatrix::zeros(m, n);
        let mut modes = Vec::new();
        for k in 0..n {
            if let Some(mode) = basis.pair(k).shell {
                modes.push(mode);
                for j in 0..m {
                    shell_x[(j, k)] = mode.eval(j as f64 / m as f64);
                }
            }
        }
        let vert_nodes: Vec<(usize, f64)> =
            mesh.boundary.iter().map(|&(v, y)| (mesh.vertex_node[v], y)).collect();
        let vert_set = PointSet::new(domain, vert_nodes.iter().map(|&(_, y)| domain.boundary_point(y)).collect());
        Model {
            domain,
            mesh,
            basis,
            physics,
            forcing,
            epsilon,
            weights: quad.points.iter().map(|q| q.w).collect(),
            quad_set: PointSet::new(domain, quad.points.iter().map(|q| q.x).collect()),
            grid_set: boundary_grid(domain, m),
            vert_set,
            vert_nodes,
            fields,
            divs,
            shell_x,
            modes,
            m,
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn grid_size(&self) -> usize {
        self.m
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shell_modes(&self) -> &[RealMode] {
        &self.modes
    }

    pub fn quad_points(&self) -> &[[f64; 2]] {
        &self.quad_set.x
    }

    /// Assembles the geometry-dependent data for `(ζ, ∂ₜζ)` at time `t`.
    pub fn stage(&self, t: f64, zeta: &SpectralField, zeta_t: &SpectralField) -> Result<Stage> {
        let frame = Frame::new(self.domain, &self.quad_set, &self.grid_set, t, zeta, zeta_t)?;
        let n = self.len();
        let nq = frame.quad.len();
        let columns: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = self
            .fields
            .par_iter()
            .map(|field| {
                let p = PushedField::new(&frame, field);
                let mut g = vec![0.0; 2 * nq];
                let mut dg = vec![0.0; 4 * nq];
                let mut h = vec![0.0; 2 * nq];
                let mut e = vec![0.0; 4 * nq];
                for (q, tr) in frame.quad.iter().enumerate() {
                    let w = tr.w();
                    let a = tr.a();
                    for i in 0..2 {
                        g[2 * q + i] = p.g[q][i];
                        h[2 * q + i] = p.gt[q][i] + p.dg[q][i][0] * w[0] + p.dg[q][i][1] * w[1];
                        for j in 0..2 {
                            dg[4 * q + 2 * i + j] = p.dg[q][i][j];
                            e[4 * q + 2 * i + j] = p.dg[q][i][0] * a[0][j] + p.dg[q][i][1] * a[1][j];
                        }
                    }
                }
                (g, dg, h, e)
            })
            .collect();
        let mut gm = DMatrix::zeros(2 * nq, n);
        let mut dgm = DMatrix::zeros(4 * nq, n);
        let mut hm = DMatrix::zeros(2 * nq, n);
        let mut em = DMatrix::zeros(4 * nq, n);
        for (k, (g, dg, h, e)) in columns.into_iter().enumerate() {
            gm.set_column(k, &DVector::from_vec(g));
            dgm.set_column(k, &DVector::from_vec(dg));
            hm.set_column(k, &DVector::from_vec(h));
            em.set_column(k, &DVector::from_vec(e));
        }
        let jw: Vec<f64> = frame.quad.iter().zip(&self.weights).map(|(t, w)| t.j * w).collect();
        let bt: Vec<Mat2> = frame
            .quad
            .iter()
            .map(|t| {
                let b = t.b();
                [[b[0][0], b[1][0]], [b[0][1], b[1][1]]]
            })
            .collect();

        let m = self.m;
        let sg = &frame.shell;
        let mut psi = DMatrix::zeros(m, n);
        let mut psi_t = DMatrix::zeros(m, n);
        let mut lap_psi = DMatrix::zeros(m, n);
        let mut dpsi = DMatrix::zeros(m, n);
        for k in 0..n {
            if self.basis.pair(k).shell.is_none() {
                continue;
            }
            let col: Vec<f64> = (0..m).map(|j| self.shell_x[(j, k)] / sg.jb[j]).collect();
            for j in 0..m {
                psi[(j, k)] = col[j];
                psi_t[(j, k)] = -self.shell_x[(j, k)] * sg.jb_t[j] / (sg.jb[j] * sg.jb[j]);
            }
            lap_psi.set_column(k, &DVector::from_vec(grid_derivative(&col, 2)));
            dpsi.set_column(k, &DVector::from_vec(grid_derivative(&col, 1)));
        }
        Ok(Stage { frame, g: gm, dg: dgm, h: hm, e: em, jw, bt, psi, psi_t, lap_psi, dpsi })
    }

    pub fn operators(&self, st: &Stage) -> Operators {
        let ph = &self.physics;
        let m = self.m as f64;
        let sg = &st.frame.shell;
        let sqrt_jw = DVector::from_iterator(st.g.nrows(), (0..st.g.nrows()).map(|r| st.jw[r / 2].sqrt()));
        let gs = DMatrix::from_fn(st.g.nrows(), st.g.ncols(), |r, c| st.g[(r, c)] * sqrt_jw[r]);
        let mass_fluid = sym(gs.transpose() * &gs * ph.rho_f);
        let mass_shell = sym(st.psi.transpose() * &st.psi * (ph.rho_s / m));
        let gjw = DMatrix::from_fn(st.g.nrows(), st.g.ncols(), |r, c| st.g[(r, c)] * st.jw[r / 2]);
        let boundary = DMatrix::from_fn(self.m, st.psi.ncols(), |j, l| 0.5 * sg.speed[j] * sg.zeta_t[j] * st.psi[(j, l)]);
        let geo = gjw.transpose() * &st.h * ph.rho_f
            + st.psi.transpose() * &st.psi_t * (ph.rho_s / m)
            + self.shell_x.transpose() * boundary * (ph.rho_f / m);
        let dgw = DMatrix::from_fn(st.dg.nrows(), st.dg.ncols(), |r, c| st.dg[(r, c)] * self.weights[r / 4]);
        let visc = sym(dgw.transpose() * &st.e * ph.mu);
        let eps = sym(st.dpsi.transpose() * &st.dpsi * (self.epsilon / m));
        let elastic = sym(st.lap_psi.transpose() * &st.lap_psi * (ph.stiffness / m));
        Operators { mass: &mass_fluid + mass_shell, mass_fluid, geo, visc, eps, elastic }
    }

    /// Symmetrized convection `½∫(∇v̄ Bᵀv̄)·G_k − ½∫(∇G_k Bᵀv̄)·v̄`.
    pub fn convection(&self, st: &Stage, alpha: &DVector<f64>) -> DVector<f64> {
        let v = &st.g * alpha;
        let dv = &st.dg * alpha;
        let nq = st.jw.len();
        let mut wa = DVector::zeros(2 * nq);
        let mut wo = DVector::zeros(4 * nq);
        for q in 0..nq {
            let w = self.weights[q];
            let vq = [v[2 * q], v[2 * q + 1]];
            let bt = &st.bt[q];
            let b = [bt[0][0] * vq[0] + bt[0][1] * vq[1], bt[1][0] * vq[0] + bt[1][1] * vq[1]];
            for i in 0..2 {
                wa[2 * q + i] = w * (dv[4 * q + 2 * i] * b[0] + dv[4 * q + 2 * i + 1] * b[1]);
                for j in 0..2 {
                    wo[4 * q + 2 * i + j] = w * vq[i] * b[j];
                }
            }
        }
        (st.g.tr_mul(&wa) - st.dg.tr_mul(&wo)) * (0.5 * self.physics.rho_f)
    }

    /// `∫ J f∘Ψ · G_k + ∫ g ψ_k`.
    pub fn forcing_vector(&self, st: &Stage, t: f64) -> DVector<f64> {
        let n = self.len();
        if self.forcing.is_zero() {
            return DVector::zeros(n);
        }
        let nq = st.jw.len();
        let mut fq = DVector::zeros(2 * nq);
        for (q, tr) in st.frame.quad.iter().enumerate() {
            let f = self.forcing.fluid(t, tr.psi);
            fq[2 * q] = st.jw[q] * f[0];
            fq[2 * q + 1] = st.jw[q] * f[1];
        }
        let gg = DVector::from_iterator(self.m, st.frame.shell.y.iter().map(|&y| self.forcing.shell(t, y) / self.m as f64));
        st.g.tr_mul(&fq) + st.psi.tr_mul(&gg)
    }

    /// `κ ∫ Δη Δψ_k` on the grid.
    fn elastic_load(&self, st: &Stage, eta: &[f64]) -> DVector<f64> {
        let lap = DVector::from_vec(grid_derivative(eta, 2));
        st.lap_psi.tr_mul(&lap) * (self.physics.stiffness / self.m as f64)
    }

    /// Shell velocity `Σ α_k ψ_k` on the grid.
    pub fn shell_velocity(&self, st: &Stage, alpha: &DVector<f64>) -> Vec<f64> {
        (&st.psi * alpha).as_slice().to_vec()
    }

    /// `v̄` at the quadrature points, flattened `[2q + c]`.
    pub fn velocity_at_quad(&self, st: &Stage, alpha: &DVector<f64>) -> Vec<f64> {
        (&st.g * alpha).as_slice().to_vec()
    }

    /// `v̄ = J⁻¹F Σ α_k X_k` at the mesh nodes for the geometry `zeta`.
    pub fn velocity_nodal(&self, zeta: &SpectralField, alpha: &DVector<f64>) -> Result<Vec<f64>> {
        let n = self.mesh.num_nodes();
        let mut x = vec![0.0; 2 * n];
        for k in 0..self.len() {
            for (xi, fi) in x.iter_mut().zip(self.basis.pair(k).field) {
                *xi += alpha[k] * fi;
            }
        }
        let map = GeometryMap::new(self.domain, zeta, None)?;
        let mut out = vec![0.0; 2 * n];
        for (node, p) in self.mesh.nodes.iter().enumerate() {
            let t = map.fields(*p)?;
            let (g, _, _) = push(&t, [x[2 * node], x[2 * node + 1]], &[[0.0; 2]; 2]);
            out[2 * node] = g[0];
            out[2 * node + 1] = g[1];
        }
        Ok(out)
    }

    pub fn energy(&self, ops: &Operators, alpha: &DVector<f64>, eta: &[f64]) -> (f64, f64, f64) {
        let kin = 0.5 * alpha.dot(&(&ops.mass * alpha));
        let kin_f = 0.5 * alpha.dot(&(&ops.mass_fluid * alpha));
        let lap = grid_derivative(eta, 2);
        let el = 0.5 * self.physics.stiffness * lap.iter().map(|x| x * x).sum::<f64>() / self.m as f64;
        (kin_f, kin - kin_f, el)
    }

    /// One implicit-midpoint step from `state` using stages at `t`, `t + dt/2`, `t + dt`.
    pub fn step(
        &self,
        state: &State,
        dt: f64,
        ops_n: &Operators,
        mid: &Stage,
        ops_m: &Operators,
        ops_next: &Operators,
    ) -> Result<(State, StepBalance)> {
        let t_mid = state.t + 0.5 * dt;
        let fm = self.forcing_vector(mid, t_mid);
        let rhs0 = &fm - self.elastic_load(mid, &state.eta) + &ops_m.mass * &state.alpha * (2.0 / dt);
        let lin = &ops_m.mass * (2.0 / dt) + &ops_m.geo + &ops_m.visc + &ops_m.eps + &ops_m.elastic * (0.5 * dt);
        let lu = lin.clone().lu();
        let mut am = state.alpha.clone();
        let mut conv = self.convection(mid, &am);
        let mut iterations = 0;
        loop {
            iterations += 1;
            let next = lu.solve(&(&rhs0 - &conv)).ok_or_else(|| FsiError::SingularSolve("midpoint system".into()))?;
            let change = (&next - &am).amax();
            am = next;
            conv = self.convection(mid, &am);
            if change <= PICARD_TOL * am.amax().max(1.0) {
                break;
            }
            if iterations >= PICARD_MAX {
                let residual = (&lin * &am + &conv - &rhs0).amax();
                return Err(FsiError::NoConvergence { iterations, residual });
            }
        }
        let alpha = &am * 2.0 - &state.alpha;
        let vel = &mid.psi * &am;
        let eta: Vec<f64> = state.eta.iter().zip(vel.iter()).map(|(e, v)| e + dt * v).collect();

        let d = dt * am.dot(&(&ops_m.visc * &am));
        let de = dt * am.dot(&(&ops_m.eps * &am));
        let fw = dt * am.dot(&fm);
        let mgeo = 0.5 * alpha.dot(&((&ops_next.mass - &ops_m.mass) * &alpha))
            + 0.5 * state.alpha.dot(&((&ops_m.mass - &ops_n.mass) * &state.alpha));
        let gw = mgeo - dt * am.dot(&(&ops_m.geo * &am)) - dt * am.dot(&conv);
        let (kf0, ks0, el0) = self.energy(ops_n, &state.alpha, &state.eta);
        let (kf1, ks1, el1) = self.energy(ops_next, &alpha, &eta);
        let defect = (kf1 + ks1 + el1) - (kf0 + ks0 + el0) - (-d - de + fw + gw);
        Ok((
            State { t: state.t + dt, alpha, eta },
            StepBalance { dissipation: d, eps_dissipation: de, geometry_work: gw, forcing_work: fw, defect, iterations },
        ))
    }

    /// Initial state: `η(0) = J⁻¹Π(J η₀)` with the mean kept, shell
    /// coefficients from `J η_*`, interior coefficients from `Bᵀ v̄₀`.
    pub fn initial_state(&self, data: &InitialData, stage0: &Stage, zeta0: &SpectralField, quad: &Quadrature) -> Result<State> {
        let defect = data.compatibility_defect(self.mesh);
        if defect > 1e-8 * (1.0 + data.eta_star.sup_norm()) {
            return Err(FsiError::IncompatibleData { defect });
        }
        let m = self.m;
        let sg = &stage0.frame.shell;
        let eta0: Vec<f64> = sg.y.iter().map(|&y| data.eta0.eval(y)).collect();
        let eta = project_shell(&sg.jb, &eta0, &self.modes, true);
        let mut alpha = DVector::zeros(self.len());
        for k in 0..self.len() {
            if self.basis.pair(k).shell.is_some() {
                alpha[k] = (0..m).map(|j| sg.jb[j] * data.eta_star.eval(sg.y[j]) * self.shell_x[(j, k)]).sum::<f64>() / m as f64;
            }
        }
        if let InitialVelocity::Field(v) = &data.velocity {
            let y = self.pull_back_field(v, zeta0)?;
            let yq = eval_vector(self.mesh, quad, &y);
            for k in 0..self.len() {
                if self.basis.pair(k).shell.is_none() {
                    let f = &self.fields[k];
                    alpha[k] = self
                        .weights
                        .iter()
                        .enumerate()
                        .map(|(q, w)| {
                            let (a, b) = (&f.grad[q], &yq.grad[q]);
                            w * (a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1])
                        })
                        .sum::<f64>();
                }
            }
        }
        Ok(State { t: stage0.frame.t, alpha, eta })
    }

    /// Nodal `Bᵀ v̄` for the geometry `zeta`.
    fn pull_back_field(&self, v: &[f64], zeta: &SpectralField) -> Result<Vec<f64>> {
        let map = GeometryMap::new(self.domain, zeta, None)?;
        let nodes = PointSet::new(self.domain, self.mesh.nodes.clone());
        let tr = nodes.transforms(&map)?;
        let mut out = vec![0.0; v.len()];
        for (i, t) in tr.iter().enumerate() {
            let b = t.b();
            // (Bᵀ v)_j = Σ_i B_ij v_i
            for j in 0..2 {
                out[2 * i + j] = b[0][j] * v[2 * i] + b[1][j] * v[2 * i + 1];
            }
        }
        Ok(out)
    }

    /// `‖B:∇v̄‖_{L²}`; equal to `‖div Σ α_k 𝐗_k‖` by the Piola identity.
    pub fn divergence_residual(&self, alpha: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for (q, w) in self.weights.iter().enumerate() {
            let d: f64 = (0..self.len()).map(|k| alpha[k] * self.divs[k][q]).sum();
            acc += w * d * d;
        }
        acc.sqrt()
    }

    /// `max |v̄∘φ − ∂ₜη n|` over the boundary vertices.
    pub fn coupling_residual(&self, zeta: &SpectralField, alpha: &DVector<f64>) -> Result<f64> {
        let map = GeometryMap::new(self.domain, zeta, None)?;
        let tr = self.vert_set.transforms(&map)?;
        let field: Vec<f64> = {
            let len = self.basis.pair(0).field.len();
            let mut f = vec![0.0; len];
            for k in 0..self.len() {
                for (o, v) in f.iter_mut().zip(self.basis.pair(k).field) {
                    *o += alpha[k] * v;
                }
            }
            f
        };
        let mut worst = 0.0f64;
        for (t, &(node, y)) in tr.iter().zip(&self.vert_nodes) {
            let x = [field[2 * node], field[2 * node + 1]];
            let v = [(t.f[0][0] * x[0] + t.f[0][1] * x[1]) / t.j, (t.f[1][0] * x[0] + t.f[1][1] * x[1]) / t.j];
            let shell: f64 = (0..self.len())
                .filter_map(|k| self.basis.pair(k).shell.map(|m| alpha[k] * m.eval(y)))
                .sum::<f64>()
                / t.j;
            let n = self.domain.normal(y);
            worst = worst.max((v[0] - shell * n[0]).hypot(v[1] - shell * n[1]));
        }
        Ok(worst)
    }

    /// `H(t) = 1 + ‖f‖²_{W^{1,2}} + ‖∂ₜf‖² + ‖g‖²_{W^{1,2}} + ‖∂ₜg‖²` on the current geometry.
    pub fn forcing_functional(&self, st: &Stage, t: f64) -> f64 {
        if self.forcing.is_zero() {
            return 1.0;
        }
        let mut fluid = 0.0;
        for (q, tr) in st.frame.quad.iter().enumerate() {
            let p = Point { t, x1: tr.psi[0], x2: tr.psi[1], y: 0.0 };
            for c in 0..2 {
                let d = self.forcing.f[c].eval_dual(p);
                fluid += st.jw[q] * (d.v * d.v + d.partial(Var::X1).powi(2) + d.partial(Var::X2).powi(2) + d.partial(Var::T).powi(2));
            }
        }
        let mut shell = 0.0;
        for &y in &st.frame.shell.y {
            let d = self.forcing.g.eval_dual(Point { t, y, ..Point::default() });
            shell += d.v * d.v + d.partial(Var::Y).powi(2) + d.partial(Var::T).powi(2);
        }
        1.0 + fluid + shell / self.m as f64
    }

    fn grid_to_field(&self, v: &[f64]) -> SpectralField {
        SpectralField::from_grid(v, self.m / 2 - 1)
    }

    /// Evolution with the geometry prescribed by `zeta` (already mollified if wanted).
    pub fn run_decoupled(&self, zeta: &ShellTrajectory, data: &InitialData, quad: &Quadrature, opts: RunOptions) -> Result<RunOutput> {
        if !(opts.dt > 0.0) || !(opts.t_final >= 0.0) {
            return Err(FsiError::InvalidArgument("dt must be positive and t_final non-negative".into()));
        }
        let steps = (opts.t_final / opts.dt - 1e-9).ceil().max(0.0) as usize;
        let (z0, zt0) = zeta.eval(0.0);
        let mut stage = self.stage(0.0, &z0, &zt0)?;
        let mut ops = self.operators(&stage);
        let mut state = self.initial_state(data, &stage, &z0, quad)?;
        let alpha_bound = self.domain.amplitude_bound;

        let mut out = RunOutput {
            rows: Vec::with_capacity(steps + 1),
            states: vec![state.clone()],
            history: Vec::with_capacity(steps + 1),
            trajectory: ShellTrajectory { dt: opts.dt, eta: Vec::new(), eta_t: Vec::new() },
            mass_symmetry_defect: 0.0,
            mass_min_eigenvalue: f64::INFINITY,
            stop: None,
        };
        let check_mass = |ops: &Operators, out: &mut RunOutput| -> Result<()> {
            let a = &ops.mass;
            out.mass_symmetry_defect = out.mass_symmetry_defect.max((a - a.transpose()).amax());
            let min = a.clone().symmetric_eigenvalues().min();
            out.mass_min_eigenvalue = out.mass_min_eigenvalue.min(min);
            if min <= 0.0 {
                return Err(FsiError::NotSpd);
            }
            Ok(())
        };
        check_mass(&ops, &mut out)?;
        let mut cum = Row::default();
        let record = |out: &mut RunOutput, step: usize, st: &Stage, ops: &Operators, state: &State, cum: &Row, z: &SpectralField| -> Result<()> {
            let (kf, ks, el) = self.energy(ops, &state.alpha, &state.eta);
            let eta_t = self.shell_velocity(st, &state.alpha);
            let v = self.velocity_at_quad(st, &state.alpha);
            let dv = &st.dg * &state.alpha;
            let nq = self.weights.len();
            let grad_sq: f64 = (0..nq).map(|q| self.weights[q] * (0..4).map(|r| dv[4 * q + r].powi(2)).sum::<f64>()).sum();
            let norm_v: f64 = (0..nq).map(|q| self.weights[q] * (v[2 * q].powi(2) + v[2 * q + 1].powi(2))).sum();
            let m = self.m as f64;
            let lap = grid_derivative(&state.eta, 2);
            let row = Row {
                step,
                t: state.t,
                energy_total: kf + ks + el,
                energy_kinetic_fluid: kf,
                energy_kinetic_shell: ks,
                energy_elastic: el,
                norm_dt_eta_sq: eta_t.iter().map(|x| x * x).sum::<f64>() / m,
                norm_lap_eta_sq: lap.iter().map(|x| x * x).sum::<f64>() / m,
                norm_v_sq: norm_v,
                div_residual: self.divergence_residual(&state.alpha),
                coupling_residual: self.coupling_residual(z, &state.alpha)?,
                guard_margin: alpha_bound - state.eta.iter().fold(0.0f64, |a, x| a.max(x.abs())),
                min_jacobian: st.frame.min_jacobian(),
                forcing_functional: self.forcing_functional(st, state.t),
                ..*cum
            };
            out.rows.push(row);
            out.history.push(HistorySample { t: state.t, eta_t: eta_t.clone(), v, grad_sq });
            out.trajectory.eta.push(self.grid_to_field(&state.eta));
            out.trajectory.eta_t.push(self.grid_to_field(&eta_t));
            Ok(())
        };
        record(&mut out, 0, &stage, &ops, &state, &cum, &z0)?;

        for k in 0..steps {
            let t_mid = (k as f64 + 0.5) * opts.dt;
            let t_next = (k + 1) as f64 * opts.dt;
            let attempt = (|| -> Result<(Stage, Operators, State, StepBalance, SpectralField)> {
                let (zm, ztm) = zeta.eval(t_mid);
                let mid = self.stage(t_mid, &zm, &ztm)?;
                let ops_m = self.operators(&mid);
                let (zn, ztn) = zeta.eval(t_next);
                let next = self.stage(t_next, &zn, &ztn)?;
                let ops_next = self.operators(&next);
                let (new_state, bal) = self.step(&state, opts.dt, &ops, &mid, &ops_m, &ops_next)?;
                let amplitude = new_state.eta.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                if amplitude > alpha_bound {
                    return Err(FsiError::SelfIntersection { t: t_next, amplitude });
                }
                Ok((next, ops_next, new_state, bal, zn))
            })();
            let (next, ops_next, new_state, bal, zn) = match attempt {
                Ok(v) => v,
                Err(e) => {
                    out.stop = Some(e);
                    break;
                }
            };
            if let Err(e) = check_mass(&ops_next, &mut out) {
                out.stop = Some(e);
                break;
            }
            // midpoint shell velocity (η^{n+1} − η^n)/dt
            let vel: Vec<f64> = state.eta.iter().zip(&new_state.eta).map(|(a, b)| (b - a) / opts.dt).collect();
            let vel_mid = self.grid_to_field(&vel);
            cum.dissipation_cum += bal.dissipation;
            cum.eps_dissipation_cum += bal.eps_dissipation;
            cum.geometry_work_cum += bal.geometry_work;
            cum.forcing_work_cum += bal.forcing_work;
            cum.frac_dissipation_cum += opts.dt * vel_mid.sobolev_norm(2.0 + FRACTIONAL_ORDER).powi(2);
            cum.balance_defect = bal.defect;
            stage = next;
            ops = ops_next;
            state = new_state;
            record(&mut out, k + 1, &stage, &ops, &state, &cum, &zn)?;
            out.states.push(state.clone());
        }
        if out.history.len() >= 3 {
            let e = accel_energy(&out.history, opts.dt, &self.weights)?;
            for (row, v) in out.rows.iter_mut().zip(e) {
                row.accel_energy = v;
            }
        }
        Ok(out)
    }

    /// Outer fixed-point iteration `ζ ↦ η[ζ]` starting from `ζ ≡ η₀`.
    pub fn run_coupled(&self, data: &InitialData, quad: &Quadrature, opts: RunOptions, coupling: &CouplingOptions) -> Result<CoupledOutput> {
        let mut zeta = ShellTrajectory::constant(data.eta0.clone());
        let mut previous = zeta.clone();
        let mut gaps = Vec::new();
        let mut last = None;
        let mut converged = false;
        for _ in 0..coupling.max_outer.max(1) {
            let geometry = zeta.mollify(coupling.mollify);
            let run = self.run_decoupled(&geometry, data, quad, opts)?;
            let stopped = run.stop.is_some();
            let gap = trajectory_gap(&run.trajectory, &previous);
            gaps.push(gap);
            previous = run.trajectory.clone();
            zeta = relax(&run.trajectory, &zeta, coupling.relaxation);
            last = Some(run);
            if stopped {
                break;
            }
            if gap < coupling.tol {
                converged = true;
                break;
            }
        }
        let run = last.expect("at least one outer iteration");
        let factors = gaps.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
        Ok(CoupledOutput { iterations: gaps.len(), gaps, factors, converged, run })
    }
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOptions {
    pub max_outer: usize,
    pub tol: f64,
    /// Relaxation `θ` in `ζ ← θ η[ζ] + (1 − θ) ζ`.
    pub relaxation: f64,
    /// Mollification radius applied to each geometry iterate.
    pub mollify: f64,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        CouplingOptions { max_outer: 20, tol: 1e-8, relaxation: 1.0, mollify: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledOutput {
    pub iterations: usize,
    /// `sup_t (‖∂ₜ(η_k − η_{k-1})‖ + ‖Δ(η_k − η_{k-1})‖)` per outer iteration.
    pub gaps: Vec<f64>,
    /// Ratios of successive gaps.
    pub factors: Vec<f64>,
    pub converged: bool,
    pub run: RunOutput,
}

impl CoupledOutput {
    /// Geometric mean of the gap ratios whose gaps lie above `floor`.
    pub fn contraction_factor(&self, floor: f64) -> Option<f64> {
        let usable: Vec<f64> = self
            .gaps
            .windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[1] / w[0])
            .collect();
        if usable.is_empty() {
            return None;
        }
        Some((usable.iter().map(|r| r.ln()).sum::<f64>() / usable.len() as f64).exp())
    }
}

/// `sup_t (‖∂ₜ(a − b)‖_{L²} + ‖Δ_y(a − b)‖_{L²})` over the samples of `a`.
pub fn trajectory_gap(a: &ShellTrajectory, b: &ShellTrajectory) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.len() {
        let t = i as f64 * a.dt;
        let (be, bt) = b.eval(t);
        let de = a.eta[i].sub(&be);
        let dt = a.eta_t[i].sub(&bt);
        worst = worst.max(dt.l2_norm() + de.sobolev_norm(2.0));
    }
    worst
}

/// `θ a + (1 − θ) b` sampled on the time grid of `a`.
pub fn relax(a: &ShellTrajectory, b: &ShellTrajectory, theta: f64) -> ShellTrajectory {
    if theta == 1.0 {
        return a.clone();
    }
    let mut out = a.clone();
    for i in 0..a.len() {
        let (be, bt) = b.eval(i as f64 * a.dt);
        out.eta[i] = a.eta[i].scaled(theta).axpy(1.0 - theta, &be);
        out.eta_t[i] = a.eta_t[i].scaled(theta).axpy(1.0 - theta, &bt);
    }
    out
}
