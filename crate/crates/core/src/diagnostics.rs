//! Monitored quantities: per-step rows, post-hoc acceleration energy,
//! guard margin and the comparison-ODE (Grönwall) checker.

use std::io::Write;

use crate::error::{FsiError, Result};
use crate::spectral::SpectralField;

/// CSV column order. Documented in `docs/diagnostics_schema.md`.
pub const COLUMNS: [&str; 21] = [
    "step",
    "t",
    "energy_total",
    "energy_kinetic_fluid",
    "energy_kinetic_shell",
    "energy_elastic",
    "norm_dt_eta_sq",
    "norm_lap_eta_sq",
    "norm_v_sq",
    "dissipation_cum",
    "frac_dissipation_cum",
    "eps_dissipation_cum",
    "geometry_work_cum",
    "forcing_work_cum",
    "balance_defect",
    "div_residual",
    "coupling_residual",
    "guard_margin",
    "min_jacobian",
    "accel_energy",
    "forcing_functional",
];

/// One accepted step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Row {
    pub step: usize,
    pub t: f64,
    pub energy_total: f64,
    pub energy_kinetic_fluid: f64,
    pub energy_kinetic_shell: f64,
    pub energy_elastic: f64,
    pub norm_dt_eta_sq: f64,
    pub norm_lap_eta_sq: f64,
    pub norm_v_sq: f64,
    pub dissipation_cum: f64,
    pub frac_dissipation_cum: f64,
    pub eps_dissipation_cum: f64,
    pub geometry_work_cum: f64,
    pub forcing_work_cum: f64,
    pub balance_defect: f64,
    pub div_residual: f64,
    pub coupling_residual: f64,
    pub guard_margin: f64,
    pub min_jacobian: f64,
    pub accel_energy: f64,
    pub forcing_functional: f64,
}

impl Row {
    pub fn values(&self) -> [f64; 20] {
        [
            self.t,
            self.energy_total,
            self.energy_kinetic_fluid,
            self.energy_kinetic_shell,
            self.energy_elastic,
            self.norm_dt_eta_sq,
            self.norm_lap_eta_sq,
            self.norm_v_sq,
            self.dissipation_cum,
            self.frac_dissipation_cum,
            self.eps_dissipation_cum,
            self.geometry_work_cum,
            self.forcing_work_cum,
            self.balance_defect,
            self.div_residual,
            self.coupling_residual,
            self.guard_margin,
            self.min_jacobian,
            self.accel_energy,
            self.forcing_functional,
        ]
    }
}

pub fn write_csv(rows: &[Row], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", COLUMNS.join(","))?;
    for r in rows {
        write!(out, "{}", r.step)?;
        for v in r.values() {
            write!(out, ",{v:.17e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// `α − ‖η‖∞`; negative means the run must stop.
pub fn guard(eta: &SpectralField, amplitude_bound: f64) -> f64 {
    amplitude_bound - eta.sup_norm()
}

/// Same as [`guard`] for grid samples.
pub fn guard_samples(eta: &[f64], amplitude_bound: f64) -> f64 {
    amplitude_bound - eta.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Base energy components of a shell state with no fluid:
/// `(‖∂ₜη‖², ‖Δη‖²)` in `L²(ω)`.
pub fn shell_energy_norms(eta: &SpectralField, eta_t: &SpectralField) -> (f64, f64) {
    (eta_t.l2_norm().powi(2), eta.sobolev_norm(2.0).powi(2))
}

/// Time derivative of uniformly sampled data: centered inside, one-sided
/// second order at both ends.
pub fn time_derivative(samples: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = samples.len();
    if n < 3 {
        return Err(FsiError::InsufficientHistory { needed: 3, got: n });
    }
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * samples[0] + 4.0 * samples[1] - samples[2]) / (2.0 * dt);
    d[n - 1] = (3.0 * samples[n - 1] - 4.0 * samples[n - 2] + samples[n - 3]) / (2.0 * dt);
    for i in 1..n - 1 {
        d[i] = (samples[i + 1] - samples[i - 1]) / (2.0 * dt);
    }
    Ok(d)
}

/// Differentiates a sequence of equally sized vectors in time, componentwise.
pub fn time_derivative_vec(samples: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>> {
    let n = samples.len();
    if n < 3 {
        return Err(FsiError::InsufficientHistory { needed: 3, got: n });
    }
    let len = samples[0].len();
    let mut out = vec![vec![0.0; len]; n];
    let mut column = vec![0.0; n];
    for c in 0..len {
        for (i, s) in samples.iter().enumerate() {
            column[i] = s[c];
        }
        let d = time_derivative(&column, dt)?;
        for (i, v) in d.into_iter().enumerate() {
            out[i][c] = v;
        }
    }
    Ok(out)
}

/// State samples needed for the acceleration energy.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySample {
    pub t: f64,
    /// `∂ₜη` on the shell grid.
    pub eta_t: Vec<f64>,
    /// Transformed velocity at the quadrature points, flattened `[2q + c]`.
    pub v: Vec<f64>,
    /// `‖∇v̄‖²_{L²}`.
    pub grad_sq: f64,
}

/// `E(t) = ‖∂ₜ²η‖² + ‖∂ₜΔη‖² + ‖∂ₜv̄‖² + ‖∇v̄‖²` at every sample.
/// `weights` are the quadrature weights matching `v`.
pub fn accel_energy(history: &[HistorySample], dt: f64, weights: &[f64]) -> Result<Vec<f64>> {
    let eta_t: Vec<Vec<f64>> = history.iter().map(|h| h.eta_t.clone()).collect();
    let eta_tt = time_derivative_vec(&eta_t, dt)?;
    let v: Vec<Vec<f64>> = history.iter().map(|h| h.v.clone()).collect();
    let v_t = time_derivative_vec(&v, dt)?;
    let mut out = Vec::with_capacity(history.len());
    for (i, h) in history.iter().enumerate() {
        let m = h.eta_t.len() as f64;
        let a = eta_tt[i].iter().map(|x| x * x).sum::<f64>() / m;
        let lap = crate::spectral::grid_derivative(&h.eta_t, 2);
        let b = lap.iter().map(|x| x * x).sum::<f64>() / m;
        let c: f64 = weights.iter().enumerate().map(|(q, w)| w * (v_t[i][2 * q].powi(2) + v_t[i][2 * q + 1].powi(2))).sum();
        out.push(a + b + c + h.grad_sq);
    }
    Ok(out)
}

/// Comparison problem `g' = h + c1 gᵖ`, `g(0) = c0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    /// First time `g` exceeds `2 g(0) + 2∫h`, or the horizon.
    pub t_tilde: f64,
    /// Blow-up time of the comparison solution if before the horizon.
    pub blowup: Option<f64>,
    /// Whether `f(t) ≤ 2f(0) + 2∫₀ᵗh` on `[0, T̃]`.
    pub pass: bool,
    /// `min_t (2f(0) + 2∫h − f)` over `[0, T̃]`.
    pub margin: f64,
    /// First sample time where the bound on `f` fails, if any.
    pub first_violation: Option<f64>,
}

/// Runs the local Grönwall check on uniformly sampled `f` and `h` (spacing `dt`).
pub fn gronwall_check(f: &[f64], h: &[f64], dt: f64, c0: f64, c1: f64, p: f64) -> Result<GronwallReport> {
    if f.is_empty() || f.len() != h.len() {
        return Err(FsiError::InvalidArgument("f and h must be non-empty and equally sampled".into()));
    }
    if p < 1.0 || dt <= 0.0 || c0 < 0.0 || c1 < 0.0 {
        return Err(FsiError::InvalidArgument("need p ≥ 1, dt > 0, c0, c1 ≥ 0".into()));
    }
    let horizon = dt * (f.len() - 1) as f64;
    let h_at = |t: f64| -> f64 {
        if h.len() == 1 {
            return h[0];
        }
        let pos = (t / dt).clamp(0.0, (h.len() - 1) as f64);
        let i = (pos.floor() as usize).min(h.len() - 2);
        let s = pos - i as f64;
        h[i] * (1.0 - s) + h[i + 1] * s
    };
    // integral of the piecewise-linear h from 0 to t
    let cum_h = |t: f64| -> f64 {
        if h.len() == 1 {
            return h[0] * t;
        }
        let pos = (t / dt).clamp(0.0, (h.len() - 1) as f64);
        let i = (pos.floor() as usize).min(h.len() - 2);
        let mut acc = 0.0;
        for k in 0..i {
            acc += 0.5 * dt * (h[k] + h[k + 1]);
        }
        let s = pos - i as f64;
        acc + dt * s * (h[i] + 0.5 * s * (h[i + 1] - h[i]))
    };
    let rhs = |t: f64, g: f64| h_at(t) + c1 * g.max(0.0).powf(p);
    let threshold = |t: f64| 2.0 * c0 + 2.0 * cum_h(t);

    let sol = crate::ode::dopri45(rhs, 0.0, c0, horizon, 1e-12, 1e-12, |t, g| g - threshold(t))?;
    let t_tilde = sol.event.unwrap_or(horizon);

    let mut margin = f64::INFINITY;
    let mut first_violation = None;
    for (i, &fi) in f.iter().enumerate() {
        let t = i as f64 * dt;
        if t > t_tilde {
            break;
        }
        let m = 2.0 * f[0] + 2.0 * cum_h(t) - fi;
        margin = margin.min(m);
        if m < 0.0 && first_violation.is_none() {
            first_violation = Some(t);
        }
    }
    Ok(GronwallReport { t_tilde, blowup: sol.blowup, pass: first_violation.is_none(), margin, first_violation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_is_exact_for_quadratics() {
        let s: Vec<f64> = (0..6).map(|i| (i as f64 * 0.1).powi(2)).collect();
        let d = time_derivative(&s, 0.1).unwrap();
        for (i, v) in d.iter().enumerate() {
            assert!((v - 0.2 * i as f64).abs() < 1e-12);
        }
        assert!(matches!(time_derivative(&s[..2], 0.1), Err(FsiError::InsufficientHistory { .. })));
    }

    #[test]
    fn csv_header_matches_columns() {
        let mut buf = Vec::new();
        write_csv(&[Row::default()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), COLUMNS.len());
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), COLUMNS.len());
    }

    #[test]
    fn guard_margins() {
        let zero = SpectralField::zeros(4);
        assert_eq!(guard(&zero, 0.1), 0.1);
        let big = SpectralField::sin_mode(4, 1, 0.11);
        assert!(guard(&big, 0.1) < 0.0);
    }
}
