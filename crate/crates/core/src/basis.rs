//! Two-family Galerkin basis: Dirichlet Stokes eigenfunctions and Stokes
//! liftings of the shell modes, interleaved shell-first.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FsiError, Result};
use crate::fe::Quadrature;
use crate::mesh::Mesh;
use crate::saddle::StokesSolver;
use crate::spectral::RealMode;

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 600;
const DEGENERACY_GAP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct StokesMode {
    pub lambda: f64,
    /// Interleaved nodal velocity, gradient-normalized.
    pub velocity: Vec<f64>,
    /// Pressure per mesh vertex.
    pub pressure: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShellMode {
    pub mode: RealMode,
    pub lift: Vec<f64>,
    pub pressure: Vec<f64>,
}

/// One enumerated basis pair: the shell component (if any) and the fluid field.
#[derive(Debug, Clone, Copy)]
pub struct Pair<'a> {
    pub shell: Option<RealMode>,
    pub field: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinBasis {
    pub mesh_hash: String,
    pub stokes: Vec<StokesMode>,
    pub shell: Vec<ShellMode>,
}

impl GalerkinBasis {
    /// Builds `pairs` enumerated modes: `⌈pairs/2⌉` shell lifts and `⌊pairs/2⌋` eigenmodes.
    pub fn build(mesh: &Mesh, quad: &Quadrature, solver: &StokesSolver, pairs: usize) -> Result<Self> {
        if pairs == 0 {
            return Err(FsiError::InvalidArgument("basis needs at least one pair".into()));
        }
        let n_shell = pairs.div_ceil(2);
        let top = RealMode::nth(n_shell - 1).frequency();
        if 2 * top >= mesh.segments {
            return Err(FsiError::InvalidArgument(format!(
                "shell frequency {top} is not resolved by {} boundary segments",
                mesh.segments
            )));
        }
        let stokes = stokes_eigenbasis(mesh, quad, solver, pairs / 2)?;
        let shell = (0..n_shell)
            .map(|i| {
                let mode = RealMode::nth(i);
                let (lift, pressure) = shell_lift(mesh, solver, |y| mode.eval(y))?;
                Ok(ShellMode { mode, lift, pressure })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GalerkinBasis { mesh_hash: mesh.hash(), stokes, shell })
    }

    pub fn len(&self) -> usize {
        self.stokes.len() + self.shell.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Enumeration: even indices are shell pairs, odd indices pure fluid modes.
    pub fn pair(&self, i: usize) -> Pair<'_> {
        if i % 2 == 0 {
            let s = &self.shell[i / 2];
            Pair { shell: Some(s.mode), field: &s.lift }
        } else {
            Pair { shell: None, field: &self.stokes[(i - 1) / 2].velocity }
        }
    }

    /// The first `pairs` enumerated modes as a smaller basis.
    pub fn truncated(&self, pairs: usize) -> GalerkinBasis {
        let pairs = pairs.min(self.len());
        GalerkinBasis {
            mesh_hash: self.mesh_hash.clone(),
            stokes: self.stokes[..pairs / 2].to_vec(),
            shell: self.shell[..pairs.div_ceil(2)].to_vec(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        put_u64(&mut buf, self.mesh_hash.len() as u64);
        buf.extend_from_slice(self.mesh_hash.as_bytes());
        let nodes = self.shell.first().map(|s| s.lift.len()).unwrap_or(0) as u64;
        let verts = self.shell.first().map(|s| s.pressure.len()).unwrap_or(0) as u64;
        put_u64(&mut buf, nodes);
        put_u64(&mut buf, verts);
        put_u64(&mut buf, self.stokes.len() as u64);
        put_u64(&mut buf, self.shell.len() as u64);
        for m in &self.stokes {
            put_f64s(&mut buf, &[m.lambda]);
            put_f64s(&mut buf, &m.velocity);
            put_f64s(&mut buf, &m.pressure);
        }
        for m in &self.shell {
            let (tag, k) = match m.mode {
                RealMode::Cos(k) => (0u8, k),
                RealMode::Sin(k) => (1u8, k),
            };
            buf.push(tag);
            put_u64(&mut buf, k as u64);
            put_f64s(&mut buf, &m.lift);
            put_f64s(&mut buf, &m.pressure);
        }
        let mut file = std::fs::File::create(path).map_err(io_err)?;
        file.write_all(&buf).map_err(io_err)
    }

    /// Loads a cache written by [`save`](Self::save), rejecting caches for a different mesh.
    pub fn load(path: &Path, mesh: &Mesh) -> Result<Self> {
        let mut data = Vec::new();
        std::fs::File::open(path).map_err(io_err)?.read_to_end(&mut data).map_err(io_err)?;
        let mut r = Reader { data: &data, pos: 0 };
        if r.take(CACHE_MAGIC.len())? != CACHE_MAGIC {
            return Err(FsiError::Io("not a basis cache".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(FsiError::Io(format!("unsupported basis cache version {version}")));
        }
        let hlen = r.u64()? as usize;
        let hash = String::from_utf8(r.take(hlen)?.to_vec()).map_err(|_| FsiError::Io("bad hash".into()))?;
        if hash != mesh.hash() {
            return Err(FsiError::Io("basis cache belongs to a different mesh".into()));
        }
        let nodes = r.u64()? as usize;
        let verts = r.u64()? as usize;
        let n_stokes = r.u64()? as usize;
        let n_shell = r.u64()? as usize;
        let mut stokes = Vec::with_capacity(n_stokes);
        for _ in 0..n_stokes {
            let lambda = r.f64s(1)?[0];
            stokes.push(StokesMode { lambda, velocity: r.f64s(nodes)?, pressure: r.f64s(verts)? });
        }
        let mut shell = Vec::with_capacity(n_shell);
        for _ in 0..n_shell {
            let tag = r.take(1)?[0];
            let k = r.u64()? as usize;
            let mode = if tag == 0 { RealMode::Cos(k) } else { RealMode::Sin(k) };
            shell.push(ShellMode { mode, lift: r.f64s(nodes)?, pressure: r.f64s(verts)? });
        }
        Ok(GalerkinBasis { mesh_hash: hash, stokes, shell })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"FSIBASIS";
const CACHE_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> FsiError {
    FsiError::Io(e.to_string())
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| FsiError::Io("truncated basis cache".into()))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(8 * n)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Stokes solve with boundary data `x(y)·n(y)` at the boundary nodes.
pub fn shell_lift(mesh: &Mesh, solver: &StokesSolver, x: impl Fn(f64) -> f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ud = vec![0.0; 2 * mesh.num_nodes()];
    for &(node, y) in &mesh.boundary_nodes {
        let a = 2.0 * std::f64::consts::PI * y;
        let v = x(y);
        ud[2 * node] = v * a.cos();
        ud[2 * node + 1] = v * a.sin();
    }
    let f = vec![0.0; 2 * mesh.num_nodes()];
    let g = DVector::zeros(solver.num_pressure());
    solver.solve(&f, &g, &ud)
}

/// The `count` smallest discrete Dirichlet Stokes eigenpairs, by block
/// inverse iteration with Rayleigh–Ritz on the divergence-free subspace.
pub fn stokes_eigenbasis(mesh: &Mesh, _quad: &Quadrature, solver: &StokesSolver, count: usize) -> Result<Vec<StokesMode>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let dim = solver.num_free();
    let block = count + (count / 2).max(10);
    if block + solver.num_pressure() >= dim {
        return Err(FsiError::EigensolveFailure(format!("{count} modes exceed the discrete divergence-free space")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b4515);
    let start = DMatrix::from_fn(dim, block, |_, _| rng.gen::<f64>() - 0.5);
    let mut x = solver.solve_homogeneous(&solver.mass_apply(&start));
    let mut theta = DVector::zeros(block);
    let mut converged = false;
    let mut worst = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let (ritz, vals) = rayleigh_ritz(solver, &x)?;
        x = ritz;
        theta = vals;
        let mx = solver.mass_apply(&x);
        let tmx = solver.solve_homogeneous(&mx);
        worst = 0.0f64;
        for i in 0..count {
            let r = tmx.column(i) * theta[i] - x.column(i);
            let rm = solver.mass_apply(&DMatrix::from_column_slice(dim, 1, r.as_slice()));
            worst = worst.max(r.dot(&rm.column(0)).max(0.0).sqrt());
        }
        if worst < RESIDUAL_TOL {
            converged = true;
            break;
        }
        x = tmx;
    }
    if !converged {
        return Err(FsiError::EigensolveFailure(format!("residual {worst:.3e} after {MAX_SWEEPS} sweeps")));
    }

    let mut vecs: Vec<DVector<f64>> = (0..count).map(|i| x.column(i).into_owned()).collect();
    let lambdas: Vec<f64> = (0..count).map(|i| theta[i]).collect();
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(FsiError::EigensolveFailure("non-positive eigenvalue".into()));
    }
    resolve_degeneracies(mesh, solver, &lambdas, &mut vecs);

    let mut modes = Vec::with_capacity(count);
    for (v, &lambda) in vecs.iter().zip(&lambdas) {
        let full = solver.to_full(v);
        let mv = solver.mass_apply(&DMatrix::from_column_slice(dim, 1, v.as_slice()));
        let f = solver.to_full(&(mv.column(0) * lambda));
        let (_, p) = solver.solve(&f, &DVector::zeros(solver.num_pressure()), &vec![0.0; full.len()])?;
        let s = 1.0 / lambda.sqrt();
        let mut velocity: Vec<f64> = full.iter().map(|a| a * s).collect();
        let pressure: Vec<f64> = p.iter().map(|a| a * s).collect();
        fix_sign(&mut velocity);
        let flip = velocity.iter().zip(&full).map(|(a, b)| a * b).sum::<f64>() < 0.0;
        let pressure = if flip { pressure.iter().map(|a| -a).collect() } else { pressure };
        modes.push(StokesMode { lambda, velocity, pressure });
    }
    Ok(modes)
}

fn rayleigh_ritz(solver: &StokesSolver, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let kx = solver.stiffness_apply(x);
    let mx = solver.mass_apply(x);
    let kr = sym(x.transpose() * kx);
    let mr = sym(x.transpose() * mx);
    let chol = mr.cholesky().ok_or_else(|| FsiError::EigensolveFailure("subspace collapsed".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| FsiError::EigensolveFailure("subspace collapsed".into()))?;
    let c = sym(&linv * kr * linv.transpose());
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let v = DMatrix::from_fn(order.len(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    let vals = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    Ok((x * linv.transpose() * v, vals))
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Within each numerically repeated eigenvalue group, rotate onto
/// eigenvectors of the reflection `x2 ↦ -x2` (symmetric first).
fn resolve_degeneracies(mesh: &Mesh, solver: &StokesSolver, lambdas: &[f64], vecs: &mut [DVector<f64>]) {
    let perm = mesh.reflection();
    let reflect = |v: &DVector<f64>| -> DVector<f64> {
        let full = solver.to_full(v);
        let mut out = vec![0.0; full.len()];
        for (n, &m) in perm.iter().enumerate() {
            out[2 * n] = full[2 * m];
            out[2 * n + 1] = -full[2 * m + 1];
        }
        solver.restrict(&out)
    };
    let dim = solver.num_free();
    let mut start = 0;
    while start < lambdas.len() {
        let mut end = start + 1;
        while end < lambdas.len() && (lambdas[end] - lambdas[end - 1]).abs() <= DEGENERACY_GAP * lambdas[end] {
            end += 1;
        }
        if end - start > 1 {
            let g = end - start;
            let group = DMatrix::from_fn(dim, g, |i, j| vecs[start + j][i]);
            let reflected: Vec<DVector<f64>> = (start..end).map(|k| reflect(&vecs[k])).collect();
            let refl = DMatrix::from_fn(dim, g, |i, j| reflected[j][i]);
            let mg = solver.mass_apply(&refl);
            let r = sym(group.transpose() * mg);
            let eig = SymmetricEigen::new(r);
            let mut order: Vec<usize> = (0..g).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            for (slot, &o) in order.iter().enumerate() {
                vecs[start + slot] = &group * eig.eigenvectors.column(o);
            }
        }
        start = end;
    }
}

/// Makes the first entry of (near-)maximal magnitude positive.
fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() >= (1.0 - 1e-6) * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `J⁻¹ Π(J f)` on grid samples, where `Π` is the `L²(ω)` projection onto
/// `modes` (plus the constants when `keep_mean`).
pub fn project_shell(j_b: &[f64], f: &[f64], modes: &[RealMode], keep_mean: bool) -> Vec<f64> {
    let m = f.len();
    let jf: Vec<f64> = j_b.iter().zip(f).map(|(a, b)| a * b).collect();
    let ys: Vec<f64> = (0..m).map(|j| j as f64 / m as f64).collect();
    let mut out = vec![if keep_mean { jf.iter().sum::<f64>() / m as f64 } else { 0.0 }; m];
    for &mode in modes {
        let vals: Vec<f64> = ys.iter().map(|&y| mode.eval(y)).collect();
        let c = jf.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>() / m as f64;
        for (o, v) in out.iter_mut().zip(&vals) {
            *o += c * v;
        }
    }
    out.iter().zip(j_b).map(|(a, b)| a / b).collect()
}

/// Coefficients of a reference-frame field `Y = Bᵀ Φ` (interleaved nodal
/// values) in the enumerated basis: shell coefficients from the normal trace,
/// fluid coefficients from gradient inner products.
pub fn fluid_coefficients(mesh: &Mesh, solver: &StokesSolver, basis: &GalerkinBasis, y: &[f64]) -> DVector<f64> {
    let n = basis.len();
    let mut out = DVector::zeros(n);
    let trace: Vec<(f64, f64)> = mesh
        .boundary_nodes
        .iter()
        .map(|&(node, yy)| {
            let a = 2.0 * std::f64::consts::PI * yy;
            (yy, y[2 * node] * a.cos() + y[2 * node + 1] * a.sin())
        })
        .collect();
    let nb = trace.len() as f64;
    for i in 0..n {
        let pair = basis.pair(i);
        out[i] = match pair.shell {
            Some(mode) => trace.iter().map(|&(yy, v)| v * mode.eval(yy)).sum::<f64>() / nb,
            None => solver.energy_dot(pair.field, y),
        };
    }
    out
}

/// Synthesises `Σ c_i 𝐗_i` as interleaved nodal values.
pub fn synthesize(basis: &GalerkinBasis, coeffs: &DVector<f64>) -> Vec<f64> {
    let len = basis.pair(0).field.len();
    let mut out = vec![0.0; len];
    for i in 0..basis.len() {
        let c = coeffs[i];
        if c != 0.0 {
            for (o, v) in out.iter_mut().zip(basis.pair(i).field) {
                *o += c * v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_fix_is_deterministic() {
        let mut v = vec![0.1, -0.5, 0.5 - 1e-9, 0.2];
        fix_sign(&mut v);
        assert!(v[1] > 0.0);
    }

    #[test]
    fn shell_projection_reproduces_modes() {
        let m = 64;
        let j: Vec<f64> = (0..m).map(|i| 1.0 + 0.05 * (2.0 * std::f64::consts::PI * i as f64 / m as f64).sin()).collect();
        let modes: Vec<RealMode> = (0..6).map(RealMode::nth).collect();
        let f: Vec<f64> = (0..m).map(|i| RealMode::Sin(1).eval(i as f64 / m as f64)).collect();
        let p = project_shell(&vec![1.0; m], &f, &modes, false);
        assert!(p.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-13));
        let once = project_shell(&j, &f, &modes, false);
        let twice = project_shell(&j, &once, &modes, false);
        assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() < 1e-13));
    }
}
