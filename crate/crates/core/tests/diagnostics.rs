use std::f64::consts::{LN_2, PI};

use fsi_core::diagnostics::{accel_energy, gronwall_check, guard, HistorySample};
use fsi_core::spectral::SpectralField;
use proptest::prelude::*;

fn samples(n: usize, dt: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..n).map(|i| f(i as f64 * dt)).collect()
}

#[test]
fn exponential_fails_at_ln_two() {
    let dt = 1e-5;
    let f = samples(100_001, dt, f64::exp);
    let h = vec![0.0; f.len()];
    let r = gronwall_check(&f, &h, dt, 1.0, 1.0, 1.0).unwrap();
    assert!((r.t_tilde - LN_2).abs() < 1e-4, "{}", r.t_tilde);
    assert!(r.blowup.is_none());
    // f = g here, so the bound holds on [0, T̃]
    assert!(r.pass);
    let short = gronwall_check(&f[..60_001], &h[..60_001], dt, 1.0, 1.0, 1.0).unwrap();
    assert!(short.pass);
    assert!((short.t_tilde - 0.6).abs() < 1e-12);
    // without the nonlinearity T̃ is the horizon and eᵗ ≤ 2 fails at ln 2
    let long = gronwall_check(&f, &h, dt, 1.0, 0.0, 1.0).unwrap();
    assert!(!long.pass);
    assert!((long.first_violation.unwrap() - LN_2).abs() < 1e-4);
}

#[test]
fn constant_data_passes_everywhere() {
    let f = vec![1.0; 101];
    let h = vec![0.0; 101];
    let r = gronwall_check(&f, &h, 0.01, 1.0, 0.0, 1.0).unwrap();
    assert!(r.pass);
    assert_eq!(r.t_tilde, 1.0);
    assert_eq!(r.margin, 1.0);
    assert!(r.blowup.is_none());
}

#[test]
fn quartic_comparison_blows_up_at_one_third() {
    // g' = g⁴, g(0) = 1: g = (1 − 3t)^{-1/3}, reaches 2 at t = 7/24
    let f = vec![1.0; 1001];
    let h = vec![0.0; 1001];
    let r = gronwall_check(&f, &h, 1e-3, 1.0, 1.0, 4.0).unwrap();
    assert!((r.t_tilde - 7.0 / 24.0).abs() < 1e-8, "{}", r.t_tilde);
    assert!((r.blowup.unwrap() - 1.0 / 3.0).abs() < 1e-6, "{:?}", r.blowup);
    // bit-stable
    assert_eq!(gronwall_check(&f, &h, 1e-3, 1.0, 1.0, 4.0).unwrap(), r);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(gronwall_check(&[], &[], 0.1, 1.0, 1.0, 1.0).is_err());
    assert!(gronwall_check(&[1.0, 1.0], &[0.0], 0.1, 1.0, 1.0, 1.0).is_err());
    assert!(gronwall_check(&[1.0, 1.0], &[0.0, 0.0], 0.1, 1.0, 1.0, 0.5).is_err());
}

proptest! {
    #[test]
    fn larger_nonlinearity_never_extends_the_horizon(c1 in 0.0f64..3.0, extra in 0.0f64..3.0, p in 1.0f64..4.0) {
        let f = vec![1.0; 201];
        let h = vec![0.5; 201];
        let a = gronwall_check(&f, &h, 5e-3, 1.0, c1, p).unwrap();
        let b = gronwall_check(&f, &h, 5e-3, 1.0, c1 + extra, p).unwrap();
        prop_assert!(b.t_tilde <= a.t_tilde + 1e-9);
    }
}

#[test]
fn acceleration_energy_of_a_standing_wave() {
    let omega = 3.0;
    let dt = 1e-3;
    let m = 32;
    let history: Vec<HistorySample> = (0..400)
        .map(|i| {
            let t = i as f64 * dt;
            let eta_t = (0..m).map(|j| omega * (omega * t).cos() * (2.0 * PI * j as f64 / m as f64).sin()).collect();
            HistorySample { t, eta_t, v: Vec::new(), grad_sq: 0.0 }
        })
        .collect();
    let e = accel_energy(&history, dt, &[]).unwrap();
    let k4 = (2.0 * PI).powi(4);
    for (i, v) in e.iter().enumerate() {
        let t = i as f64 * dt;
        let exact = 0.5 * omega.powi(4) * (omega * t).sin().powi(2) + 0.5 * omega * omega * k4 * (omega * t).cos().powi(2);
        assert!((v - exact).abs() < 1e-4 * exact.max(1.0), "t = {t}: {v} vs {exact}");
    }
    let still: Vec<HistorySample> = (0..5).map(|i| HistorySample { t: i as f64, eta_t: vec![0.0; m], v: vec![0.0; 4], grad_sq: 0.0 }).collect();
    assert!(accel_energy(&still, 1.0, &[0.5, 0.5]).unwrap().iter().all(|&x| x == 0.0));
    assert!(accel_energy(&still[..2], 1.0, &[0.5, 0.5]).is_err());
}

#[test]
fn guard_examples() {
    let alpha = 0.1;
    assert_eq!(guard(&SpectralField::zeros(4), alpha), alpha);
    assert!(guard(&SpectralField::constant(4, alpha), alpha).abs() < 1e-15);
    assert!(guard(&SpectralField::sin_mode(4, 1, 1.1 * alpha), alpha) < 0.0);
}
