//! Periodic spectral fields on the parameter circle `y ∈ [0, 1)`.
//!
//! A field is stored by its complex Fourier coefficients `c_k`, `k = -K..=K`,
//! with `u(y) = Σ c_k exp(2πiky)`. Fields are real, so `c_{-k} = conj(c_k)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    k_max: usize,
    coeffs: Vec<Complex64>,
}

/// Real Fourier basis function used for the shell modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RealMode {
    Cos(usize),
    Sin(usize),
}

impl RealMode {
    /// Zero-mean modes ordered by frequency, cosine before sine.
    pub fn nth(index: usize) -> RealMode {
        let freq = index / 2 + 1;
        if index % 2 == 0 {
            RealMode::Cos(freq)
        } else {
            RealMode::Sin(freq)
        }
    }

    pub fn frequency(self) -> usize {
        match self {
            RealMode::Cos(k) | RealMode::Sin(k) => k,
        }
    }

    /// `√2 cos(2πky)` or `√2 sin(2πky)` at `y`.
    pub fn eval(self, y: f64) -> f64 {
        match self {
            RealMode::Cos(k) => 2f64.sqrt() * (TWO_PI * k as f64 * y).cos(),
            RealMode::Sin(k) => 2f64.sqrt() * (TWO_PI * k as f64 * y).sin(),
        }
    }
}

impl SpectralField {
    pub fn zeros(k_max: usize) -> Self {
        SpectralField { k_max, coeffs: vec![Complex64::new(0.0, 0.0); 2 * k_max + 1] }
    }

    pub fn constant(k_max: usize, c: f64) -> Self {
        let mut f = Self::zeros(k_max);
        f.coeffs[k_max] = Complex64::new(c, 0.0);
        f
    }

    /// `amp · sin(2πky)`.
    pub fn sin_mode(k_max: usize, k: usize, amp: f64) -> Self {
        let mut f = Self::zeros(k_max);
        if k == 0 {
            return f;
        }
        assert!(k <= k_max, "mode {k} beyond resolution {k_max}");
        f.coeffs[k_max + k] = Complex64::new(0.0, -amp / 2.0);
        f.coeffs[k_max - k] = Complex64::new(0.0, amp / 2.0);
        f
    }

    /// `amp · cos(2πky)`.
    pub fn cos_mode(k_max: usize, k: usize, amp: f64) -> Self {
        let mut f = Self::zeros(k_max);
        if k == 0 {
            f.coeffs[k_max] = Complex64::new(amp, 0.0);
            return f;
        }
        assert!(k <= k_max, "mode {k} beyond resolution {k_max}");
        f.coeffs[k_max + k] = Complex64::new(amp / 2.0, 0.0);
        f.coeffs[k_max - k] = Complex64::new(amp / 2.0, 0.0);
        f
    }

    pub fn real_mode(k_max: usize, mode: RealMode) -> Self {
        match mode {
            RealMode::Cos(k) => Self::cos_mode(k_max, k, 2f64.sqrt()),
            RealMode::Sin(k) => Self::sin_mode(k_max, k, 2f64.sqrt()),
        }
    }

    /// Builds a field from its coefficients `c_0..=c_K` (negative modes by symmetry).
    pub fn from_nonnegative(coeffs: &[Complex64]) -> Self {
        let k_max = coeffs.len() - 1;
        let mut f = Self::zeros(k_max);
        f.coeffs[k_max] = Complex64::new(coeffs[0].re, 0.0);
        for (k, c) in coeffs.iter().enumerate().skip(1) {
            f.coeffs[k_max + k] = *c;
            f.coeffs[k_max - k] = c.conj();
        }
        f
    }

    /// Interpolates uniform samples `u(j/M)`, keeping modes `|k| ≤ k_max` (`2 k_max < M`).
    pub fn from_grid(samples: &[f64], k_max: usize) -> Self {
        let m = samples.len();
        assert!(2 * k_max < m, "{m} samples cannot resolve {k_max} modes");
        let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        fft_forward(m).process(&mut buf);
        let mut f = Self::zeros(k_max);
        let scale = 1.0 / m as f64;
        f.coeffs[k_max] = Complex64::new(buf[0].re * scale, 0.0);
        for k in 1..=k_max {
            let ck = buf[k] * scale;
            let cmk = buf[m - k] * scale;
            // average the two halves so the result is exactly conjugate symmetric
            let c = 0.5 * (ck + cmk.conj());
            f.coeffs[k_max + k] = c;
            f.coeffs[k_max - k] = c.conj();
        }
        f
    }

    pub fn from_fn(k_max: usize, m: usize, f: impl Fn(f64) -> f64) -> Self {
        let samples: Vec<f64> = (0..m).map(|j| f(j as f64 / m as f64)).collect();
        Self::from_grid(&samples, k_max)
    }

    /// Samples at `y_j = j/M`; requires `M > 2 k_max` for exactness.
    pub fn to_grid(&self, m: usize) -> Vec<f64> {
        assert!(m > 2 * self.k_max, "{m} samples cannot carry {} modes", self.k_max);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        buf[0] = self.coeffs[self.k_max];
        for k in 1..=self.k_max {
            buf[k] = self.coeffs[self.k_max + k];
            buf[m - k] = self.coeffs[self.k_max - k];
        }
        fft_inverse(m).process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.k_max {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[(self.k_max as i64 + k) as usize]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[self.k_max].re
    }

    pub fn is_zero_mean(&self) -> bool {
        self.coeffs[self.k_max] == Complex64::new(0.0, 0.0)
    }

    pub fn without_mean(&self) -> Self {
        let mut f = self.clone();
        f.coeffs[self.k_max] = Complex64::new(0.0, 0.0);
        f
    }

    /// Maximum deviation from conjugate symmetry (zero for real fields).
    pub fn symmetry_defect(&self) -> f64 {
        let mut d = self.coeffs[self.k_max].im.abs();
        for k in 1..=self.k_max {
            d = d.max((self.coeffs[self.k_max + k] - self.coeffs[self.k_max - k].conj()).norm());
        }
        d
    }

    /// Changes the resolution, truncating or zero-padding.
    pub fn resized(&self, k_max: usize) -> Self {
        let mut f = Self::zeros(k_max);
        let k = k_max.min(self.k_max) as i64;
        for j in -k..=k {
            f.coeffs[(k_max as i64 + j) as usize] = self.coeff(j);
        }
        f
    }

    /// Value and first two `y`-derivatives at `y`.
    pub fn eval_derivs(&self, y: f64) -> [f64; 3] {
        let mut out = [self.coeffs[self.k_max].re, 0.0, 0.0];
        let z = Complex64::from_polar(1.0, TWO_PI * y);
        let mut zk = Complex64::new(1.0, 0.0);
        for k in 1..=self.k_max {
            zk *= z;
            let term = self.coeffs[self.k_max + k] * zk;
            let w = TWO_PI * k as f64;
            // 2 Re(c z^k), 2 Re(iw c z^k), 2 Re(-w^2 c z^k)
            out[0] += 2.0 * term.re;
            out[1] -= 2.0 * w * term.im;
            out[2] -= 2.0 * w * w * term.re;
        }
        out
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.eval_derivs(y)[0]
    }

    /// Multiplies mode `k` by `m(k)`; `m` must be even in `k` to keep the field real.
    pub fn map_modes(&self, m: impl Fn(i64) -> Complex64) -> Self {
        let mut f = self.clone();
        for (idx, c) in f.coeffs.iter_mut().enumerate() {
            let k = idx as i64 - self.k_max as i64;
            *c *= m(k);
        }
        f
    }

    /// `order`-th derivative in `y`.
    pub fn derivative(&self, order: u32) -> Self {
        self.map_modes(|k| Complex64::new(0.0, TWO_PI * k as f64).powu(order))
    }

    /// `Δ_y^s` realised as the multiplier `(2π|k|)^{2s}`.
    pub fn fractional_multiplier(&self, s: f64) -> Self {
        self.map_modes(|k| Complex64::new(multiplier(k, s), 0.0))
    }

    /// `(Σ_k (2π|k|)^{2s} |c_k|²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for (idx, c) in self.coeffs.iter().enumerate() {
            let k = idx as i64 - self.k_max as i64;
            acc += multiplier(k, s) * c.norm_sqr();
        }
        acc.sqrt()
    }

    /// `L²(ω)` norm including the mean.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `L²(ω)` inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        let k = self.k_max.min(other.k_max) as i64;
        (-k..=k).map(|j| (self.coeff(j) * other.coeff(j).conj()).re).sum()
    }

    /// Spectral `W^{2,2}` inner product `Σ (1 + (2πk)²)² û v̄`.
    pub fn w22_dot(&self, other: &Self) -> f64 {
        let k = self.k_max.min(other.k_max) as i64;
        (-k..=k)
            .map(|j| {
                let w = 1.0 + (TWO_PI * j as f64).powi(2);
                w * w * (self.coeff(j) * other.coeff(j).conj()).re
            })
            .sum()
    }

    /// Sup norm sampled on `4(2K+1)` points.
    pub fn sup_norm(&self) -> f64 {
        let m = 4 * (2 * self.k_max + 1);
        self.to_grid(m).into_iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Periodic Gaussian smoothing with radius `eps`.
    pub fn mollify(&self, eps: f64) -> Self {
        if eps == 0.0 {
            return self.clone();
        }
        self.map_modes(|k| {
            let w = TWO_PI * k as f64;
            Complex64::new((-eps * eps * w * w / 2.0).exp(), 0.0)
        })
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut f = self.clone();
        f.coeffs.iter_mut().for_each(|c| *c *= a);
        f
    }

    /// `self + a·other` at the larger of the two resolutions.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        let k_max = self.k_max.max(other.k_max);
        let mut f = self.resized(k_max);
        let k = other.k_max as i64;
        for j in -k..=k {
            f.coeffs[(k_max as i64 + j) as usize] += other.coeff(j) * a;
        }
        f
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }
}

fn multiplier(k: i64, s: f64) -> f64 {
    if k == 0 {
        if s == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (TWO_PI * k.unsigned_abs() as f64).powf(2.0 * s)
    }
}

fn fft_forward(m: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(m)
}

fn fft_inverse(m: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(m)
}

/// Spectral derivative of uniform periodic samples (`2K < M` modes kept).
pub fn grid_derivative(samples: &[f64], order: u32) -> Vec<f64> {
    let m = samples.len();
    let k_max = (m - 1) / 2;
    SpectralField::from_grid(samples, k_max).derivative(order).to_grid(m)
}

/// Shell trajectory sampled at `t_i = i·dt`, with displacement and velocity
/// fields at each sample. Evaluation between samples is cubic Hermite.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellTrajectory {
    pub dt: f64,
    pub eta: Vec<SpectralField>,
    pub eta_t: Vec<SpectralField>,
}

impl ShellTrajectory {
    /// A time-independent trajectory.
    pub fn constant(eta: SpectralField) -> Self {
        let zero = SpectralField::zeros(eta.k_max());
        ShellTrajectory { dt: 1.0, eta: vec![eta], eta_t: vec![zero] }
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        (self.eta.len() - 1) as f64 * self.dt
    }

    /// Displacement and velocity at time `t`; held constant past the last sample.
    pub fn eval(&self, t: f64) -> (SpectralField, SpectralField) {
        let n = self.eta.len();
        if n == 1 || t <= 0.0 {
            return (self.eta[0].clone(), self.eta_t[0].clone());
        }
        let pos = t / self.dt;
        if pos >= (n - 1) as f64 {
            let last = &self.eta[n - 1];
            if pos - (n - 1) as f64 <= 1e-9 {
                return (last.clone(), self.eta_t[n - 1].clone());
            }
            return (last.clone(), SpectralField::zeros(last.k_max()));
        }
        let i = (pos.floor() as usize).min(n - 2);
        let s = pos - i as f64;
        let h = self.dt;
        let (h00, h10, h01, h11) = (
            2.0 * s.powi(3) - 3.0 * s * s + 1.0,
            s.powi(3) - 2.0 * s * s + s,
            -2.0 * s.powi(3) + 3.0 * s * s,
            s.powi(3) - s * s,
        );
        let (d00, d10, d01, d11) = (
            (6.0 * s * s - 6.0 * s) / h,
            3.0 * s * s - 4.0 * s + 1.0,
            (-6.0 * s * s + 6.0 * s) / h,
            3.0 * s * s - 2.0 * s,
        );
        let (p0, p1, m0, m1) = (&self.eta[i], &self.eta[i + 1], &self.eta_t[i], &self.eta_t[i + 1]);
        let eta = p0.scaled(h00).axpy(h10 * h, m0).axpy(h01, p1).axpy(h11 * h, m1);
        let eta_t = p0.scaled(d00).axpy(d10, m0).axpy(d01, p1).axpy(d11, m1);
        (eta, eta_t)
    }

    /// Spatial Gaussian multiplier plus a discrete Gaussian in time (reflected at both ends).
    pub fn mollify(&self, eps: f64) -> Self {
        if eps == 0.0 {
            return self.clone();
        }
        let n = self.eta.len();
        let half = if n > 1 { (4.0 * eps / self.dt).ceil() as i64 } else { 0 };
        let weights: Vec<f64> = (-half..=half)
            .map(|j| {
                let tau = j as f64 * self.dt;
                (-tau * tau / (2.0 * eps * eps)).exp()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let reflect = |idx: i64| -> usize {
            let last = n as i64 - 1;
            let mut i = idx;
            // mirror repeatedly for kernels wider than the trajectory
            loop {
                if i < 0 {
                    i = -i;
                } else if i > last {
                    i = 2 * last - i;
                } else {
                    return i as usize;
                }
            }
        };
        let smooth = |series: &[SpectralField]| -> Vec<SpectralField> {
            (0..n)
                .map(|i| {
                    let mut acc = SpectralField::zeros(series[0].k_max());
                    for (w, j) in weights.iter().zip(-half..=half) {
                        acc = acc.axpy(w / total, &series[reflect(i as i64 + j)]);
                    }
                    acc.mollify(eps)
                })
                .collect()
        };
        ShellTrajectory { dt: self.dt, eta: smooth(&self.eta), eta_t: smooth(&self.eta_t) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_round_trip() {
        let f = SpectralField::sin_mode(8, 3, 0.4).axpy(1.0, &SpectralField::cos_mode(8, 5, -0.2));
        let g = SpectralField::from_grid(&f.to_grid(40), 8);
        for k in -8..=8 {
            assert!((f.coeff(k) - g.coeff(k)).norm() < 1e-15);
        }
    }

    #[test]
    fn pointwise_derivatives() {
        let f = SpectralField::sin_mode(4, 2, 1.0);
        let y = 0.123;
        let w = 4.0 * PI;
        let [v, d1, d2] = f.eval_derivs(y);
        assert!((v - (w * y).sin()).abs() < 1e-14);
        assert!((d1 - w * (w * y).cos()).abs() < 1e-12);
        assert!((d2 + w * w * (w * y).sin()).abs() < 1e-10);
    }

    #[test]
    fn real_modes_match_constructors() {
        let f = SpectralField::real_mode(6, RealMode::Sin(2));
        for y in [0.0, 0.1, 0.77] {
            assert!((f.eval(y) - RealMode::Sin(2).eval(y)).abs() < 1e-14);
        }
        assert_eq!(RealMode::nth(0), RealMode::Cos(1));
        assert_eq!(RealMode::nth(3), RealMode::Sin(2));
    }

    #[test]
    fn hermite_reproduces_cubic_in_time() {
        // eta(t) = t^3 sin(2πy); Hermite data are exact so interpolation is exact
        let base = SpectralField::sin_mode(2, 1, 1.0);
        let dt = 0.1;
        let traj = ShellTrajectory {
            dt,
            eta: (0..4).map(|i| base.scaled((i as f64 * dt).powi(3))).collect(),
            eta_t: (0..4).map(|i| base.scaled(3.0 * (i as f64 * dt).powi(2))).collect(),
        };
        let (e, et) = traj.eval(0.137);
        assert!((e.coeff(1) - base.coeff(1) * 0.137f64.powi(3)).norm() < 1e-15);
        assert!((et.coeff(1) - base.coeff(1) * 3.0 * 0.137f64.powi(2)).norm() < 1e-14);
    }
}
