//! Field snapshots: one JSON header line followed by little-endian `f64` arrays.
//!
//! The header names every array with its shape, in payload order. The mesh is
//! written once per run next to the snapshots in the plain-text mesh format.

use std::fs;
use std::io;
use std::path::Path;

use fsi_core::spectral::SpectralField;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub step: usize,
    pub t: f64,
    pub arrays: Vec<ArrayHeader>,
}

/// Fields of one accepted state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    /// Interleaved `(v̄₁, v̄₂)` per velocity node.
    pub velocity: Vec<f64>,
    /// Full pressure per mesh vertex.
    pub pressure: Vec<f64>,
    pub eta: SpectralField,
    pub eta_t: SpectralField,
}

const FORMAT: &str = "fsi-snapshot-1";

fn nonnegative(f: &SpectralField) -> Vec<f64> {
    let k = f.k_max() as i64;
    (0..=k).flat_map(|j| {
        let c = f.coeff(j);
        [c.re, c.im]
    }).collect()
}

fn spectral(v: &[f64]) -> SpectralField {
    let c: Vec<Complex64> = v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    SpectralField::from_nonnegative(&c)
}

impl Snapshot {
    pub fn header(&self) -> SnapshotHeader {
        let modes = self.eta.k_max() + 1;
        SnapshotHeader {
            format: FORMAT.into(),
            step: self.step,
            t: self.t,
            arrays: vec![
                ArrayHeader { name: "velocity".into(), shape: vec![self.velocity.len() / 2, 2] },
                ArrayHeader { name: "pressure".into(), shape: vec![self.pressure.len()] },
                ArrayHeader { name: "eta".into(), shape: vec![modes, 2] },
                ArrayHeader { name: "eta_t".into(), shape: vec![self.eta_t.k_max() + 1, 2] },
            ],
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.header()).expect("header serializes");
        out.push(b'\n');
        for arr in [&self.velocity, &self.pressure, &nonnegative(&self.eta), &nonnegative(&self.eta_t)] {
            for v in arr.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> io::Result<Snapshot> {
        let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line".into()))?;
        let header: SnapshotHeader = serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(format!("header: {e}")))?;
        if header.format != FORMAT {
            return Err(bad(format!("unknown snapshot format {:?}", header.format)));
        }
        let mut payload = bytes[nl + 1..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut arrays = Vec::new();
        for a in &header.arrays {
            let len: usize = a.shape.iter().product();
            let v: Vec<f64> = payload.by_ref().take(len).collect();
            if v.len() != len {
                return Err(bad(format!("array {} truncated", a.name)));
            }
            arrays.push(v);
        }
        if payload.next().is_some() || (bytes.len() - nl - 1) % 8 != 0 {
            return Err(bad("trailing bytes after the last array".into()));
        }
        let [velocity, pressure, eta, eta_t]: [Vec<f64>; 4] =
            arrays.try_into().map_err(|_| bad("expected four arrays".into()))?;
        Ok(Snapshot { step: header.step, t: header.t, velocity, pressure, eta: spectral(&eta), eta_t: spectral(&eta_t) })
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_bytes())
    }

    pub fn read(path: &Path) -> io::Result<Snapshot> {
        Snapshot::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        Snapshot {
            step: 7,
            t: 0.007,
            velocity: vec![0.1, -0.2, 1.0 / 3.0, f64::MIN_POSITIVE],
            pressure: vec![2.5, -1e-300, 0.0],
            eta: SpectralField::sin_mode(4, 2, 0.01).axpy(1.0, &SpectralField::constant(4, 0.003)),
            eta_t: SpectralField::cos_mode(4, 1, -0.7),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let back = Snapshot::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back.header().t, s.t);
        for (a, b) in [(&back.velocity, &s.velocity), (&back.pressure, &s.pressure)] {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back, s);
    }

    #[test]
    fn corrupt_payloads_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Snapshot::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(Snapshot::from_bytes(&extra).is_err());
        assert!(Snapshot::from_bytes(b"{}").is_err());
    }
}
