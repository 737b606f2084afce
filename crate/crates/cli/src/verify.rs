//! Quick property suites runnable from the command line (`verify <suite>`).
//!
//! These are smoke-scale versions of the library test suites, meant for
//! checking an installed binary. Each check prints one PASS/FAIL line.

use std::f64::consts::{LN_2, PI};

use fsi_core::basis::GalerkinBasis;
use fsi_core::correction::{corrector, CorrectionContext};
use fsi_core::diagnostics::gronwall_check;
use fsi_core::fe::{vector_dot, Quadrature};
use fsi_core::geometry::{GeometryMap, ReferenceDomain};
use fsi_core::mesh::Mesh;
use fsi_core::saddle::StokesSolver;
use fsi_core::spectral::SpectralField;
use fsi_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SUITES: [&str; 4] = ["geometry", "correction", "basis", "gronwall"];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.to_string(), pass, detail }
}

fn random_shell(rng: &mut ChaCha8Rng, k_max: usize, bound: f64) -> SpectralField {
    let mut f = SpectralField::zeros(k_max);
    for k in 1..=k_max.min(6) {
        let a = rng.gen_range(-1.0..1.0) / (k * k) as f64;
        let b = rng.gen_range(-1.0..1.0) / (k * k) as f64;
        f = f.axpy(1.0, &SpectralField::sin_mode(k_max, k, a)).axpy(1.0, &SpectralField::cos_mode(k_max, k, b));
    }
    let scale = rng.gen_range(0.1..0.99) * bound / f.sup_norm().max(1e-300);
    f.scaled(scale)
}

fn geometry(seed: u64) -> Result<Vec<Check>> {
    let domain = ReferenceDomain::unit_disk();
    let alpha = domain.amplitude_bound;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut round_trip = 0.0f64;
    let mut normal = 0.0f64;
    for _ in 0..50 {
        let eta = random_shell(&mut rng, 8, alpha);
        let map = GeometryMap::new(&domain, &eta, None)?;
        for _ in 0..20 {
            let r = rng.gen_range(0.0f64..1.0).sqrt();
            let th = rng.gen_range(0.0..2.0 * PI);
            let x = [r * th.cos(), r * th.sin()];
            let back = map.inverse(map.map(x))?;
            round_trip = round_trip.max((back[0] - x[0]).hypot(back[1] - x[1]));
        }
        normal = normal.max(map.normal_invariance(64)?);
    }
    let zero = SpectralField::zeros(8);
    let id = GeometryMap::new(&domain, &zero, None)?;
    let exact = (0..200).all(|i| {
        let x = [0.9 * (i as f64 * 0.1).cos(), 0.9 * (i as f64 * 0.1).sin() * (i as f64 / 200.0)];
        id.fields(x).map(|t| t.psi == x && t.f == [[1.0, 0.0], [0.0, 1.0]] && t.j == 1.0).unwrap_or(false)
    });
    let c = 0.05;
    let constant = SpectralField::constant(8, c);
    let cmap = GeometryMap::new(&domain, &constant, None)?;
    let mut jb = 0.0f64;
    for k in 0..64 {
        jb = jb.max((cmap.boundary_jacobian(k as f64 / 64.0)? - (1.0 + c)).abs());
    }
    Ok(vec![
        check("hanzawa round trip", round_trip < 1e-10, format!("max error {round_trip:.2e}")),
        check("zero displacement is the identity", exact, String::new()),
        check("boundary determinant for constant shell", jb < 1e-10, format!("max error {jb:.2e}")),
        check("normal invariance", normal < 1e-8, format!("max error {normal:.2e}")),
    ])
}

fn correction() -> Result<Vec<Check>> {
    let k = 8;
    let eta = SpectralField::sin_mode(k, 1, 0.1);
    let xi = SpectralField::sin_mode(k, 1, 1.0);
    let kappa = corrector(&xi, &eta)?;
    let mesh = Mesh::onion(4, 24)?;
    let quad = Quadrature::new(&mesh);
    let domain = ReferenceDomain::unit_disk();
    let ctx = CorrectionContext::new(&domain, &mesh, &quad)?;
    let f: Vec<f64> = quad.points.iter().map(|q| (-20.0 * ((q.x[0] - 0.3).powi(2) + q.x[1].powi(2))).exp()).collect();
    let b = ctx.bogovskij(&eta, &f)?;
    let ext = ctx.solenoidal_extend(&SpectralField::cos_mode(k, 2, 1.0), &eta)?;
    let flux = ctx.boundary_flux(&ext, &eta, 4)?;
    Ok(vec![
        check("corrector closed form", (kappa - 0.05).abs() < 1e-10, format!("{kappa:.15}")),
        check("bogovskij divergence residual", b.residual < 1e-8, format!("{:.2e}", b.residual)),
        check("extension flux", flux.abs() < 1e-8, format!("{flux:.2e}")),
    ])
}

fn basis() -> Result<Vec<Check>> {
    let mesh = Mesh::onion(4, 24)?;
    let quad = Quadrature::new(&mesh);
    let solver = StokesSolver::new(&mesh, &quad)?;
    let basis = GalerkinBasis::build(&mesh, &quad, &solver, 8)?;
    let mut energy = 0.0f64;
    let mut l2 = 0.0f64;
    for (i, a) in basis.stokes.iter().enumerate() {
        for (j, b) in basis.stokes.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            energy = energy.max((solver.energy_dot(&a.velocity, &b.velocity) - target).abs());
            if i != j {
                l2 = l2.max(vector_dot(&mesh, &quad, &a.velocity, &b.velocity).0.abs());
            }
        }
    }
    let lambdas: Vec<f64> = basis.stokes.iter().map(|m| m.lambda).collect();
    let sorted = lambdas[0] > 0.0 && lambdas.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    let mut trace = 0.0f64;
    for s in &basis.shell {
        for &(node, y) in &mesh.boundary_nodes {
            let a = 2.0 * PI * y;
            let v = s.mode.eval(y);
            trace = trace.max((s.lift[2 * node] - v * a.cos()).abs()).max((s.lift[2 * node + 1] - v * a.sin()).abs());
        }
    }
    Ok(vec![
        check("energy orthonormality", energy < 1e-10, format!("{energy:.2e}")),
        check("L2 orthogonality", l2 < 1e-10, format!("{l2:.2e}")),
        check("eigenvalues positive and sorted", sorted, format!("{lambdas:.4?}")),
        check("shell lift boundary trace", trace < 1e-14, format!("{trace:.2e}")),
    ])
}

fn gronwall() -> Result<Vec<Check>> {
    let dt = 1e-5;
    let f: Vec<f64> = (0..=100_000).map(|i| (i as f64 * dt).exp()).collect();
    let h = vec![0.0; f.len()];
    let linear = gronwall_check(&f, &h, dt, 1.0, 0.0, 1.0)?;
    let fail_at = linear.first_violation.unwrap_or(f64::NAN);
    let ones = vec![1.0; 1001];
    let zeros = vec![0.0; 1001];
    let quartic = gronwall_check(&ones, &zeros, 1e-3, 1.0, 1.0, 4.0)?;
    let again = gronwall_check(&ones, &zeros, 1e-3, 1.0, 1.0, 4.0)?;
    let flat = gronwall_check(&ones[..101], &zeros[..101], 0.01, 1.0, 0.0, 1.0)?;
    Ok(vec![
        check("exponential fails at ln 2", !linear.pass && (fail_at - LN_2).abs() < 1e-4, format!("{fail_at:.6}")),
        check("quartic comparison horizon", (quartic.t_tilde - 7.0 / 24.0).abs() < 1e-8 && quartic == again, format!("{:.10}", quartic.t_tilde)),
        check("constant data passes", flat.pass && flat.t_tilde == 1.0, String::new()),
    ])
}

/// Runs one suite (or `all`) and returns its checks; `None` for an unknown name.
pub fn run_suite(name: &str, seed: u64) -> Option<Result<Vec<Check>>> {
    let one = |n: &str| match n {
        "geometry" => geometry(seed),
        "correction" => correction(),
        "basis" => basis(),
        "gronwall" => gronwall(),
        _ => unreachable!(),
    };
    match name {
        "all" => Some(SUITES.iter().try_fold(Vec::new(), |mut acc, s| {
            acc.extend(one(s)?);
            Ok(acc)
        })),
        n if SUITES.contains(&n) => Some(one(n)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_suites_pass() {
        for suite in ["gronwall", "geometry"] {
            let checks = run_suite(suite, 7).unwrap().unwrap();
            assert!(checks.iter().all(|c| c.pass), "{checks:?}");
        }
        assert!(run_suite("nope", 0).is_none());
    }
}
