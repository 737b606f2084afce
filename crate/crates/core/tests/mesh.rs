use std::f64::consts::PI;

use fsi_core::fe::{interpolate_vector, trace_restrict, Quadrature};
use fsi_core::mesh::Mesh;

#[test]
fn combinatorics() {
    for (r, s) in [(2, 8), (3, 12), (6, 32), (8, 48)] {
        let mesh = Mesh::onion(r, s).unwrap();
        assert_eq!(mesh.num_vertices(), 1 + r * s);
        assert_eq!(mesh.triangles.len(), s * (2 * r - 1));
        assert!((0..mesh.triangles.len()).all(|t| mesh.triangle_area(t) > 0.0));
        assert_eq!(mesh.boundary.len(), s);
        assert_eq!(mesh.boundary_nodes.len(), 2 * s);
    }
}

#[test]
fn area_converges_at_second_order() {
    let errs: Vec<f64> = [16, 32, 64].iter().map(|&s| (Mesh::onion(4, s).unwrap().total_area() - PI).abs()).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.05, "{errs:?}");
    }
    // inscribed polygon: area = (s/2) sin(2π/s)
    let s = 32.0f64;
    assert!((Mesh::onion(4, 32).unwrap().total_area() - 0.5 * s * (2.0 * PI / s).sin()).abs() < 1e-13);
}

#[test]
fn quadrature_integrates_polynomials_on_the_mesh() {
    let mesh = Mesh::onion(3, 12).unwrap();
    let quad = Quadrature::new(&mesh);
    let area: f64 = quad.integrate(|_| 1.0);
    assert!((area - mesh.total_area()).abs() < 1e-13);
    // polygon is symmetric under x1 → −x1, so odd moments vanish
    assert!(quad.integrate(|q| q.x[0]).abs() < 1e-14);
    assert!(quad.integrate(|q| q.x[0].powi(3) * q.x[1]).abs() < 1e-14);
}

#[test]
fn trace_of_simple_fields() {
    let mesh = Mesh::onion(3, 16).unwrap();
    let (c0, c1) = trace_restrict(&mesh, &interpolate_vector(&mesh, |_| [1.0, 0.0]));
    for y in [0.0, 0.13, 0.5, 0.77] {
        assert!((c0.eval(y) - 1.0).abs() < 1e-12);
        assert!(c1.eval(y).abs() < 1e-12);
    }
    // the trace interpolates the nodal values at the boundary nodes
    let u = interpolate_vector(&mesh, |x| [x[0] * x[1], x[0] - 2.0 * x[1]]);
    let (p0, p1) = trace_restrict(&mesh, &u);
    for &(node, y) in &mesh.boundary_nodes {
        assert!((p0.eval(y) - u[2 * node]).abs() < 1e-12);
        assert!((p1.eval(y) - u[2 * node + 1]).abs() < 1e-12);
    }
    // vertex values sit on the unit circle
    let (q0, q1) = trace_restrict(&mesh, &interpolate_vector(&mesh, |x| x));
    for k in 0..16 {
        let a = 2.0 * PI * k as f64 / 16.0;
        assert!((q0.eval(k as f64 / 16.0) - a.cos()).abs() < 1e-12);
        assert!((q1.eval(k as f64 / 16.0) - a.sin()).abs() < 1e-12);
    }
}

#[test]
fn text_format_round_trip() {
    let mesh = Mesh::onion(4, 20).unwrap();
    let back = Mesh::from_text(&mesh.to_text()).unwrap();
    assert_eq!(back.vertices, mesh.vertices);
    assert_eq!(back.triangles, mesh.triangles);
    assert_eq!(back.hash(), mesh.hash());
    assert_ne!(Mesh::onion(4, 24).unwrap().hash(), mesh.hash());
}
