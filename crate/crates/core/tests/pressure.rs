use fsi_core::dynamics::{ForcingSpec, Physics};
use fsi_core::expr::Expr;
use fsi_core::fe::{eval_vector, interpolate_vector, Quadrature};
use fsi_core::frame::{boundary_grid, Frame, PointSet};
use fsi_core::geometry::ReferenceDomain;
use fsi_core::mesh::Mesh;
use fsi_core::pressure::{project_pressure, MomentumState};
use fsi_core::spectral::SpectralField;

// Stream function (1 − r²)², pressure x1 x2 + x1³, steady Stokes with μ = 1.
fn manufactured_error(rings: usize, segments: usize) -> f64 {
    let mesh = Mesh::onion(rings, segments).unwrap();
    let quad = Quadrature::new(&mesh);
    let domain = ReferenceDomain::unit_disk();
    let zero = SpectralField::zeros(8);
    let points = PointSet::new(&domain, quad.points.iter().map(|q| q.x).collect());
    let frame = Frame::new(&domain, &points, &boundary_grid(&domain, 16), 0.0, &zero, &zero).unwrap();
    let u = interpolate_vector(&mesh, |x| {
        let s = 1.0 - x[0] * x[0] - x[1] * x[1];
        [-4.0 * x[1] * s, 4.0 * x[0] * s]
    });
    let v = eval_vector(&mesh, &quad, &u);
    let vt = vec![[0.0; 2]; quad.len()];
    let forcing = ForcingSpec {
        f: [Expr::parse("-31*x2 + 3*x1^2").unwrap(), Expr::parse("33*x1").unwrap()],
        g: Expr::zero(),
    };
    let physics = Physics { rho_f: 0.0, ..Physics::default() };
    let p = project_pressure(&mesh, &quad, &frame, &physics, &forcing, &MomentumState { t: 0.0, v: &v, v_t: &vt }).unwrap();
    let mut err = 0.0;
    for q in &quad.points {
        let t = mesh.triangles[q.elem];
        let ph: f64 = (0..3).map(|k| q.lam[k] * p[t[k]]).sum();
        let exact = q.x[0] * q.x[1] + q.x[0].powi(3);
        err += q.w * (ph - exact).powi(2);
    }
    err.sqrt()
}

#[test]
fn manufactured_pressure_converges() {
    let errs: Vec<f64> = [(4, 16), (8, 32), (16, 64)].iter().map(|&(r, s)| manufactured_error(r, s)).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    println!("errors {errs:?} orders {orders:?}");
    assert!(errs[2] < 1e-2);
    assert!(orders.iter().all(|&o| o > 1.5), "{orders:?}");
}
