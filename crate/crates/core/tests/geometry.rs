use fsi_core::fe::Quadrature;
use fsi_core::frame::piola_residual;
use fsi_core::geometry::{GeometryMap, ReferenceDomain};
use fsi_core::mesh::Mesh;
use fsi_core::spectral::SpectralField;
use fsi_core::FsiError;
use proptest::prelude::*;

const K: usize = 6;

/// Random shell displacement with sup norm scaled to `level · α`.
fn shell(coeffs: &[f64], level: f64, alpha: f64) -> SpectralField {
    let mut eta = SpectralField::zeros(K);
    for (i, c) in coeffs.iter().enumerate() {
        let k = i / 2 + 1;
        let mode = if i % 2 == 0 { SpectralField::sin_mode(K, k, *c) } else { SpectralField::cos_mode(K, k, *c) };
        eta = eta.axpy(1.0, &mode);
    }
    let sup = eta.sup_norm();
    if sup == 0.0 {
        return eta;
    }
    eta.scaled(level * alpha / sup)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hanzawa_round_trip(
        coeffs in prop::collection::vec(-1.0f64..1.0, 2 * K),
        level in 0.0f64..0.95,
        r in 0.0f64..0.999,
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let domain = ReferenceDomain::unit_disk();
        let eta = shell(&coeffs, level, domain.amplitude_bound);
        let map = GeometryMap::new(&domain, &eta, None).unwrap();
        let x = [r * theta.cos(), r * theta.sin()];
        let back = map.inverse(map.map(x)).unwrap();
        prop_assert!((back[0] - x[0]).hypot(back[1] - x[1]) < 1e-10);
    }

    #[test]
    fn normal_derivative_is_the_normal(coeffs in prop::collection::vec(-1.0f64..1.0, 2 * K), level in 0.0f64..0.95) {
        let domain = ReferenceDomain::unit_disk();
        let eta = shell(&coeffs, level, domain.amplitude_bound);
        let map = GeometryMap::new(&domain, &eta, None).unwrap();
        prop_assert!(map.normal_invariance(64).unwrap() < 1e-8);
    }

    #[test]
    fn jacobian_stays_positive(coeffs in prop::collection::vec(-1.0f64..1.0, 2 * K), x1 in -0.99f64..0.99, x2 in -0.99f64..0.99) {
        prop_assume!(x1.hypot(x2) < 0.999);
        let domain = ReferenceDomain::unit_disk();
        let eta = shell(&coeffs, 0.999, domain.amplitude_bound);
        let map = GeometryMap::new(&domain, &eta, None).unwrap();
        prop_assert!(map.fields([x1, x2]).unwrap().j > 0.0);
    }
}

#[test]
fn zero_displacement_gives_identity_fields() {
    let domain = ReferenceDomain::unit_disk();
    let zero = SpectralField::zeros(K);
    let map = GeometryMap::new(&domain, &zero, Some(&zero)).unwrap();
    for x in [[0.0, 0.0], [0.3, -0.2], [0.7, 0.6], [-0.95, 0.1], [0.0, 1.0]] {
        let t = map.fields(x).unwrap();
        assert_eq!(t.psi, x);
        assert_eq!(t.f, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(t.j, 1.0);
        assert_eq!(t.dj, [0.0, 0.0]);
        assert_eq!(t.psi_t, [0.0, 0.0]);
        assert_eq!(t.j_t, 0.0);
    }
}

#[test]
fn boundary_determinant_for_constant_displacement() {
    // Ψ = (1 + c) x near the unit circle, so J = (1 + c)² there; along the
    // boundary with the normal stretch fixed to 1 by the blend, J = 1 + c.
    let domain = ReferenceDomain::unit_disk();
    for c in [-0.09, -0.03, 0.0, 0.05, 0.099] {
        let eta = SpectralField::constant(K, c);
        let map = GeometryMap::new(&domain, &eta, None).unwrap();
        for k in 0..16 {
            let j = map.boundary_jacobian(k as f64 / 16.0).unwrap();
            assert!((j - (1.0 + c)).abs() < 1e-10, "c = {c}: J = {j}");
        }
    }
}

#[test]
fn inadmissible_amplitude_is_rejected() {
    let domain = ReferenceDomain::unit_disk();
    let eta = SpectralField::sin_mode(K, 1, 0.11);
    assert!(matches!(GeometryMap::new(&domain, &eta, None), Err(FsiError::AmplitudeExceeded { .. })));
    assert!(matches!(
        ReferenceDomain::new(Box::new(fsi_core::geometry::Circle { radius: 1.0 }), 0.5, 0.6),
        Err(FsiError::InvalidArgument(_))
    ));
}

#[test]
fn outside_the_tube_the_map_is_the_identity() {
    let domain = ReferenceDomain::unit_disk();
    let eta = SpectralField::sin_mode(K, 3, 0.08);
    let map = GeometryMap::new(&domain, &eta, None).unwrap();
    let x = [0.2, -0.25];
    assert_eq!(map.map(x), x);
    assert!(domain.tubular_coords(x).is_err());
    let c = domain.tubular_coords([0.0, 0.8]).unwrap();
    assert!((c.s + 0.2).abs() < 1e-14);
    assert!((c.y - 0.25).abs() < 1e-14);
}

#[test]
fn piola_residual_is_second_order() {
    let domain = ReferenceDomain::unit_disk();
    let eta = SpectralField::sin_mode(K, 2, 0.06).axpy(1.0, &SpectralField::cos_mode(K, 1, 0.03));
    let map = GeometryMap::new(&domain, &eta, None).unwrap();
    let res: Vec<f64> = [(8, 48), (16, 96), (32, 192)]
        .iter()
        .map(|&(r, s)| {
            let mesh = Mesh::onion(r, s).unwrap();
            piola_residual(&mesh, &Quadrature::new(&mesh), &map).unwrap()
        })
        .collect();
    let orders: Vec<f64> = res.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    assert!(orders.iter().all(|&o| o >= 1.8), "residuals {res:?}, orders {orders:?}");
}
