//! Taylor–Hood saddle-point solver.
//!
//! Solves `K u + Bᵀ p = f`, `B u = g` where `K` is the vector Laplacian on the
//! free velocity nodes and `B` the (optionally geometry-weighted) divergence
//! tested against linear hat functions. The velocity block is factored once by
//! sparse Cholesky; the pressure Schur complement is formed densely and
//! regularized by the rank-one term `c m mᵀ` that pins the pressure mean.
//!
//! Free velocity vectors use a component-major layout (`c · n_free + i`);
//! full vectors are interleaved as elsewhere in the crate.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{FsiError, Result};
use crate::fe::Quadrature;
use crate::mesh::Mesh;

/// Which part of the mesh a system lives on.
#[derive(Debug, Clone)]
pub struct SystemLayout {
    pub elements: Vec<usize>,
    /// Per quadratic node: `true` if the velocity is prescribed there.
    pub dirichlet: Vec<bool>,
}

impl SystemLayout {
    /// Whole mesh with the outer boundary prescribed.
    pub fn full(mesh: &Mesh) -> Self {
        SystemLayout { elements: (0..mesh.triangles.len()).collect(), dirichlet: mesh.on_boundary.clone() }
    }
}

pub struct StokesSolver {
    n_nodes: usize,
    free_nodes: Vec<usize>,
    free_index: Vec<Option<usize>>,
    pressure_vertices: Vec<usize>,
    n_vertices: usize,
    /// Scalar stiffness over all nodes touched by the layout (for Dirichlet lifting).
    k_full: CscMatrix<f64>,
    k_free: CscMatrix<f64>,
    m_free: CscMatrix<f64>,
    k_chol: CscCholesky<f64>,
    /// Sparse rows of the divergence matrix: (interleaved velocity dof, value).
    b_rows: Vec<Vec<(usize, f64)>>,
    /// `K⁻¹ B_Fᵀ` in the free layout.
    y: DMatrix<f64>,
    schur: nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>,
    pressure_mass: DVector<f64>,
    check_flux: bool,
}

impl std::fmt::Debug for StokesSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StokesSolver")
            .field("free_nodes", &self.free_nodes.len())
            .field("pressure_dofs", &self.pressure_vertices.len())
            .finish()
    }
}

impl StokesSolver {
    /// Standard Stokes system on the whole mesh with no-slip boundary.
    pub fn new(mesh: &Mesh, quad: &Quadrature) -> Result<Self> {
        Self::with_layout(mesh, quad, &SystemLayout::full(mesh), None)
    }

    /// General system. `weights[q]` replaces the identity in the divergence
    /// `Σ_ij W_ij ∂_j u_i` at quadrature point `q` when given.
    pub fn with_layout(
        mesh: &Mesh,
        quad: &Quadrature,
        layout: &SystemLayout,
        weights: Option<&[[[f64; 2]; 2]]>,
    ) -> Result<Self> {
        let n_nodes = mesh.num_nodes();
        let n_vertices = mesh.num_vertices();
        let mut in_layout = vec![false; mesh.triangles.len()];
        for &e in &layout.elements {
            in_layout[e] = true;
        }
        let mut touched = vec![false; n_nodes];
        let mut vtouched = vec![false; n_vertices];
        for &e in &layout.elements {
            for &n in &mesh.elements[e] {
                touched[n] = true;
            }
            for &v in &mesh.triangles[e] {
                vtouched[v] = true;
            }
        }
        let mut free_index = vec![None; n_nodes];
        let mut free_nodes = Vec::new();
        for n in 0..n_nodes {
            if touched[n] && !layout.dirichlet[n] {
                free_index[n] = Some(free_nodes.len());
                free_nodes.push(n);
            }
        }
        if free_nodes.is_empty() {
            return Err(FsiError::Mesh("no free velocity nodes".into()));
        }
        let mut p_index = vec![None; n_vertices];
        let mut pressure_vertices = Vec::new();
        for v in 0..n_vertices {
            if vtouched[v] {
                p_index[v] = Some(pressure_vertices.len());
                pressure_vertices.push(v);
            }
        }
        let nf = free_nodes.len();
        let np = pressure_vertices.len();

        let mut k_coo = CooMatrix::new(n_nodes, n_nodes);
        let mut kf_coo = CooMatrix::new(nf, nf);
        let mut mf_coo = CooMatrix::new(nf, nf);
        let mut b_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); np];
        let mut pmass = DVector::zeros(np);
        for (qi, q) in quad.points.iter().enumerate() {
            if !in_layout[q.elem] {
                continue;
            }
            let el = &mesh.elements[q.elem];
            let tri = &mesh.triangles[q.elem];
            for a in 0..6 {
                for b in 0..6 {
                    let kab = q.w * (q.dphi[a][0] * q.dphi[b][0] + q.dphi[a][1] * q.dphi[b][1]);
                    k_coo.push(el[a], el[b], kab);
                    if let (Some(i), Some(j)) = (free_index[el[a]], free_index[el[b]]) {
                        kf_coo.push(i, j, kab);
                        mf_coo.push(i, j, q.w * q.phi[a] * q.phi[b]);
                    }
                }
            }
            let wq = weights.map(|w| w[qi]).unwrap_or([[1.0, 0.0], [0.0, 1.0]]);
            for v in 0..3 {
                let pi = p_index[tri[v]].expect("vertex of a layout element");
                pmass[pi] += q.w * q.lam[v];
                for a in 0..6 {
                    for c in 0..2 {
                        let d = wq[c][0] * q.dphi[a][0] + wq[c][1] * q.dphi[a][1];
                        b_rows[pi].push((2 * el[a] + c, q.w * q.lam[v] * d));
                    }
                }
            }
        }
        for row in b_rows.iter_mut() {
            row.sort_unstable_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len() / 4);
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }

        let k_free = CscMatrix::from(&kf_coo);
        let k_chol = CscCholesky::factor(&k_free).map_err(|e| FsiError::SingularSolve(format!("velocity block: {e}")))?;

        // Bᵀ restricted to free dofs, component-major columns per pressure dof.
        let mut bt = DMatrix::zeros(2 * nf, np);
        for (p, row) in b_rows.iter().enumerate() {
            for &(dof, v) in row {
                if let Some(i) = free_index[dof / 2] {
                    bt[(dof % 2 * nf + i, p)] = v;
                }
            }
        }
        let mut y = DMatrix::zeros(2 * nf, np);
        for c in 0..2 {
            let block = bt.rows(c * nf, nf).into_owned();
            let sol = k_chol.solve(&block);
            y.rows_mut(c * nf, nf).copy_from(&sol);
        }
        let mut s = bt.transpose() * &y;
        let mean_diag = (0..np).map(|i| s[(i, i)]).sum::<f64>() / np as f64;
        let mean_m2 = pmass.norm_squared() / np as f64;
        let c = mean_diag / mean_m2;
        s += &pmass * pmass.transpose() * c;
        s = (&s + s.transpose()) * 0.5;
        let schur = nalgebra::linalg::Cholesky::new(s).ok_or(FsiError::InfSupDeficient)?;

        Ok(StokesSolver {
            n_nodes,
            free_nodes,
            free_index,
            pressure_vertices,
            n_vertices,
            k_full: CscMatrix::from(&k_coo),
            m_free: CscMatrix::from(&mf_coo),
            k_chol,
            k_free,
            b_rows,
            y,
            schur,
            pressure_mass: pmass,
            check_flux: weights.is_none(),
        })
    }

    pub fn num_free(&self) -> usize {
        2 * self.free_nodes.len()
    }

    pub fn num_pressure(&self) -> usize {
        self.pressure_vertices.len()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn pressure_vertices(&self) -> &[usize] {
        &self.pressure_vertices
    }

    /// `∫ λ_v` for each pressure dof.
    pub fn pressure_mass(&self) -> &DVector<f64> {
        &self.pressure_mass
    }

    /// Interleaved full vector from a free-layout vector (zeros at prescribed nodes).
    pub fn to_full(&self, x: &DVector<f64>) -> Vec<f64> {
        let nf = self.free_nodes.len();
        let mut u = vec![0.0; 2 * self.n_nodes];
        for (i, &n) in self.free_nodes.iter().enumerate() {
            u[2 * n] = x[i];
            u[2 * n + 1] = x[nf + i];
        }
        u
    }

    pub fn restrict(&self, u: &[f64]) -> DVector<f64> {
        let nf = self.free_nodes.len();
        let mut x = DVector::zeros(2 * nf);
        for (i, &n) in self.free_nodes.iter().enumerate() {
            x[i] = u[2 * n];
            x[nf + i] = u[2 * n + 1];
        }
        x
    }

    /// Vector mass matrix action in the free layout.
    pub fn mass_apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let nf = self.free_nodes.len();
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for c in 0..2 {
            let blk = x.rows(c * nf, nf).into_owned();
            let r = &self.m_free * &blk;
            out.rows_mut(c * nf, nf).copy_from(&r);
        }
        out
    }

    /// Vector stiffness action in the free layout.
    pub fn stiffness_apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let nf = self.free_nodes.len();
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for c in 0..2 {
            let blk = x.rows(c * nf, nf).into_owned();
            let r = &self.k_free * &blk;
            out.rows_mut(c * nf, nf).copy_from(&r);
        }
        out
    }

    /// `∫ ∇u:∇v` for interleaved vectors over the layout's elements.
    pub fn energy_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (r, c, k) in self.k_full.triplet_iter() {
            acc += k * (u[2 * r] * v[2 * c] + u[2 * r + 1] * v[2 * c + 1]);
        }
        acc
    }

    /// Divergence functional `∫ λ_v W:∇u` of a full interleaved vector, per pressure dof.
    pub fn divergence(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.b_rows.len(),
            self.b_rows.iter().map(|row| row.iter().map(|&(j, v)| v * u[j]).sum()),
        )
    }

    /// Batch solve with homogeneous Dirichlet data and `g = 0`; columns of `f`
    /// are free-layout load vectors.
    pub fn solve_homogeneous(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let nf = self.free_nodes.len();
        let mut u0 = DMatrix::zeros(f.nrows(), f.ncols());
        for c in 0..2 {
            let blk = f.rows(c * nf, nf).into_owned();
            u0.rows_mut(c * nf, nf).copy_from(&self.k_chol.solve(&blk));
        }
        let rhs = self.y.transpose() * f;
        let p = self.schur.solve(&rhs);
        u0 - &self.y * p
    }

    /// Full solve. `f` is the interleaved load vector (rows at prescribed
    /// nodes ignored), `g[p]` the divergence target tested against the hat
    /// of pressure dof `p`, `u_d` the interleaved prescribed values.
    /// Returns the interleaved velocity and the pressure per mesh vertex.
    pub fn solve(&self, f: &[f64], g: &DVector<f64>, u_d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nf = self.free_nodes.len();
        let mut ud = vec![0.0; 2 * self.n_nodes];
        for n in 0..self.n_nodes {
            if self.free_index[n].is_none() {
                ud[2 * n] = u_d[2 * n];
                ud[2 * n + 1] = u_d[2 * n + 1];
            }
        }
        let bud = self.divergence(&ud);
        let g_eff = g - &bud;
        if self.check_flux {
            let flux = g_eff.sum();
            let scale = g.abs().sum() + bud.abs().sum() + f64::MIN_POSITIVE;
            if flux.abs() > 1e-9 * scale.max(1.0) {
                return Err(FsiError::IncompatibleFlux { flux });
            }
        }
        let mut f_eff = DVector::zeros(2 * nf);
        for c in 0..2 {
            let comp: DVector<f64> = DVector::from_iterator(self.n_nodes, (0..self.n_nodes).map(|n| ud[2 * n + c]));
            let kud = &self.k_full * &comp;
            for (i, &n) in self.free_nodes.iter().enumerate() {
                f_eff[c * nf + i] = f[2 * n + c] - kud[n];
            }
        }
        let mut u0 = DVector::zeros(2 * nf);
        for c in 0..2 {
            let blk = DMatrix::from_column_slice(nf, 1, f_eff.rows(c * nf, nf).as_slice());
            let sol = self.k_chol.solve(&blk);
            u0.rows_mut(c * nf, nf).copy_from(&sol.column(0));
        }
        let rhs = self.y.transpose() * &f_eff - &g_eff;
        let p = self.schur.solve(&rhs);
        let uf = u0 - &self.y * &p;
        let mut u = self.to_full(&uf);
        for n in 0..self.n_nodes {
            if self.free_index[n].is_none() {
                u[2 * n] = ud[2 * n];
                u[2 * n + 1] = ud[2 * n + 1];
            }
        }
        let mut pv = vec![0.0; self.n_vertices];
        for (i, &v) in self.pressure_vertices.iter().enumerate() {
            pv[v] = p[i];
        }
        Ok((u, pv))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::{eval_vector, interpolate_vector};

    #[test]
    fn reproduces_quadratic_stokes_flow() {
        // u = (x2² , x1²) is divergence free with −Δu = (−2, −2); p = 0 balances f = (−2, −2).
        let mesh = Mesh::onion(4, 16).unwrap();
        let quad = Quadrature::new(&mesh);
        let solver = StokesSolver::new(&mesh, &quad).unwrap();
        let exact = |x: [f64; 2]| [x[1] * x[1], x[0] * x[0]];
        let ud = interpolate_vector(&mesh, exact);
        let mut f = vec![0.0; 2 * mesh.num_nodes()];
        for q in &quad.points {
            let el = &mesh.elements[q.elem];
            for a in 0..6 {
                f[2 * el[a]] += q.w * -2.0 * q.phi[a];
                f[2 * el[a] + 1] += q.w * -2.0 * q.phi[a];
            }
        }
        let g = DVector::zeros(solver.num_pressure());
        let (u, p) = solver.solve(&f, &g, &ud).unwrap();
        let err = u.iter().zip(&ud).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "velocity error {err}");
        assert!(p.iter().all(|v| v.abs() < 1e-9));
        let div = solver.divergence(&u);
        assert!(div.amax() < 1e-12);
        let _ = eval_vector(&mesh, &quad, &u);
    }

    #[test]
    fn rejects_net_flux() {
        let mesh = Mesh::onion(3, 12).unwrap();
        let quad = Quadrature::new(&mesh);
        let solver = StokesSolver::new(&mesh, &quad).unwrap();
        let ud = interpolate_vector(&mesh, |x| x);
        let f = vec![0.0; 2 * mesh.num_nodes()];
        let g = DVector::zeros(solver.num_pressure());
        assert!(matches!(solver.solve(&f, &g, &ud), Err(FsiError::IncompatibleFlux { .. })));
    }
}
