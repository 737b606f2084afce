//! Adaptive Dormand–Prince 5(4) integrator for scalar ODEs with one event
//! function and blow-up detection.

use crate::error::{FsiError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSolution {
    pub t_end: f64,
    pub y_end: f64,
    /// First time the event function crosses from negative to non-negative.
    pub event: Option<f64>,
    /// Time at which the solution left every finite bound, if before the horizon.
    pub blowup: Option<f64>,
    pub steps: usize,
}

const BLOWUP_LEVEL: f64 = 1e12;
const MAX_STEPS: usize = 2_000_000;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Integrates `y' = f(t, y)` from `t0` to `t1`, locating the first upward
/// zero crossing of `event(t, y)`.
pub fn dopri45(
    f: impl Fn(f64, f64) -> f64,
    t0: f64,
    y0: f64,
    t1: f64,
    rtol: f64,
    atol: f64,
    event: impl Fn(f64, f64) -> f64,
) -> Result<ScalarSolution> {
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, y);
    let mut h = ((t1 - t0) * 1e-3).max(1e-12);
    let mut ev_prev = event(t, y);
    let mut found = if ev_prev >= 0.0 { Some(t0) } else { None };
    let mut steps = 0;
    while t1 - t > 1e-14 * (1.0 + t.abs()) {
        if steps >= MAX_STEPS {
            return Err(FsiError::NoConvergence { iterations: steps, residual: h });
        }
        steps += 1;
        h = h.min(t1 - t);
        let mut k = [0.0; 7];
        k[0] = k1;
        for s in 1..7 {
            let yi = y + h * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
            k[s] = f(t + C[s] * h, yi);
        }
        let y5 = y + h * (0..7).map(|j| B5[j] * k[j]).sum::<f64>();
        let y4 = y + h * (0..7).map(|j| B4[j] * k[j]).sum::<f64>();
        let scale = atol + rtol * y.abs().max(y5.abs());
        let err = ((y5 - y4) / scale).abs();
        let collapsed = h < 1e-15 * (1.0 + t.abs());
        // a collapsed step with a slope that would carry y far beyond itself
        // before the horizon is a blow-up at floating-point resolution
        let runaway = collapsed && k1.abs() * (t1 - t) > 1e6 * (1.0 + y.abs());
        if !y5.is_finite() || y5.abs() > BLOWUP_LEVEL || runaway {
            return Ok(ScalarSolution { t_end: t, y_end: y, event: found, blowup: Some(t), steps });
        }
        if collapsed {
            return Err(FsiError::NoConvergence { iterations: steps, residual: err });
        }
        if err <= 1.0 {
            let t_new = t + h;
            let ev_new = event(t_new, y5);
            if found.is_none() && ev_prev < 0.0 && ev_new >= 0.0 {
                // Hermite dense output on [t, t_new] and bisection on the event
                let (ya, yb, da, db) = (y, y5, k1, k[6]);
                let dense = |s: f64| -> f64 {
                    let s2 = s * s;
                    let s3 = s2 * s;
                    (2.0 * s3 - 3.0 * s2 + 1.0) * ya
                        + (s3 - 2.0 * s2 + s) * h * da
                        + (-2.0 * s3 + 3.0 * s2) * yb
                        + (s3 - s2) * h * db
                };
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if event(t + mid * h, dense(mid)) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if (hi - lo) * h < 1e-16 * (1.0 + t.abs()) {
                        break;
                    }
                }
                found = Some(t + hi * h);
            }
            ev_prev = ev_new;
            t = t_new;
            y = y5;
            k1 = k[6];
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(ScalarSolution { t_end: t1, y_end: y, event: found, blowup: None, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_and_event() {
        let sol = dopri45(|_, y| y, 0.0, 1.0, 1.0, 1e-12, 1e-12, |_, y| y - 2.0).unwrap();
        assert!((sol.y_end - std::f64::consts::E).abs() < 1e-10);
        assert!((sol.event.unwrap() - std::f64::consts::LN_2).abs() < 1e-10);
        assert!(sol.blowup.is_none());
    }

    #[test]
    fn detects_blowup() {
        // y' = y², y(0) = 1 blows up at t = 1
        let sol = dopri45(|_, y| y * y, 0.0, 1.0, 2.0, 1e-10, 1e-10, |_, _| -1.0).unwrap();
        assert!((sol.blowup.unwrap() - 1.0).abs() < 1e-6);
    }
}
