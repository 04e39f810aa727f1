use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time in seconds of one basis index step.
pub const BASIS_TIME_UNIT: f64 = 0.01;

/// Load features of one bus: `sin(freq_j * k)` for each frequency, then the
/// constant 1. `coeffs` holds the true coefficients in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusBasis {
    pub freqs: Vec<f64>,
    pub coeffs: Vec<f64>,
}

/// Net-load variation `p_i(t) - p_i* = phi_i(t)^T a_i`.
///
/// The basis index is `k = t / time_unit`, evaluated fractionally between
/// integer steps. The constant feature is always the last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisFile", into = "BasisFile")]
pub struct BasisSignal {
    pub time_unit: f64,
    pub buses: Vec<BusBasis>,
    offsets: Vec<usize>,
}

#[derive(Clone, Serialize, Deserialize)]
struct BasisFile {
    time_unit: f64,
    buses: Vec<BusBasis>,
}

impl TryFrom<BasisFile> for BasisSignal {
    type Error = Error;

    fn try_from(f: BasisFile) -> Result<Self> {
        BasisSignal::new(f.time_unit, f.buses)
    }
}

impl From<BasisSignal> for BasisFile {
    fn from(b: BasisSignal) -> Self {
        BasisFile {
            time_unit: b.time_unit,
            buses: b.buses,
        }
    }
}

impl BasisSignal {
    pub fn new(time_unit: f64, buses: Vec<BusBasis>) -> Result<Self> {
        if !(time_unit > 0.0) {
            return Err(Error::Validation(format!("basis time unit {time_unit} must be positive")));
        }
        for (i, b) in buses.iter().enumerate() {
            if b.coeffs.len() != b.freqs.len() + 1 {
                return Err(Error::Dimension(format!(
                    "bus {i}: {} frequencies need {} coefficients, got {}",
                    b.freqs.len(),
                    b.freqs.len() + 1,
                    b.coeffs.len()
                )));
            }
            if b.freqs.iter().chain(&b.coeffs).any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("bus {i}: non-finite basis parameter")));
            }
        }
        let mut s = Self {
            time_unit,
            buses,
            offsets: Vec::new(),
        };
        s.index();
        Ok(s)
    }

    fn index(&mut self) {
        let mut off = 0;
        self.offsets = self
            .buses
            .iter()
            .map(|b| {
                let o = off;
                off += b.freqs.len() + 1;
                o
            })
            .collect();
        self.offsets.push(off);
    }

    /// Constant-only basis `phi_i = (1)` with the given coefficients.
    pub fn constant(coeffs: &[f64]) -> Self {
        let buses = coeffs
            .iter()
            .map(|&a| BusBasis {
                freqs: Vec::new(),
                coeffs: vec![a],
            })
            .collect();
        Self::new(BASIS_TIME_UNIT, buses).expect("valid constant basis")
    }

    /// No load variation at all.
    pub fn zero(n: usize) -> Self {
        Self::constant(&vec![0.0; n])
    }

    /// Same frequencies, with the sinusoid and/or constant coefficients zeroed.
    pub fn restricted(&self, sinusoids: bool, constant: bool) -> Self {
        let mut out = self.clone();
        for b in &mut out.buses {
            let c = b.freqs.len();
            for (j, a) in b.coeffs.iter_mut().enumerate() {
                if (j == c && !constant) || (j < c && !sinusoids) {
                    *a = 0.0;
                }
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }

    /// Number of features `l_i`.
    pub fn dim(&self, i: usize) -> usize {
        self.buses[i].freqs.len() + 1
    }

    /// Position of the constant feature.
    pub fn const_index(&self, i: usize) -> usize {
        self.buses[i].freqs.len()
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn coeffs(&self, i: usize) -> &[f64] {
        &self.buses[i].coeffs
    }

    pub fn features_into(&self, i: usize, t: f64, out: &mut [f64]) {
        let k = t / self.time_unit;
        let b = &self.buses[i];
        for (o, f) in out.iter_mut().zip(&b.freqs) {
            *o = (f * k).sin();
        }
        out[b.freqs.len()] = 1.0;
    }

    pub fn features(&self, i: usize, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim(i)];
        self.features_into(i, t, &mut out);
        out
    }

    /// All buses' features, concatenated in bus order.
    pub fn all_features_into(&self, t: f64, out: &mut [f64]) {
        for i in 0..self.n() {
            let (a, b) = (self.offsets[i], self.offsets[i + 1]);
            self.features_into(i, t, &mut out[a..b]);
        }
    }

    /// `phi_i(t)^T a_i`.
    pub fn injection(&self, i: usize, t: f64) -> f64 {
        let k = t / self.time_unit;
        let b = &self.buses[i];
        let mut s = b.coeffs[b.freqs.len()];
        for (f, a) in b.freqs.iter().zip(&b.coeffs) {
            s += a * (f * k).sin();
        }
        s
    }
}

/// Two sinusoids plus a constant on every bus.
///
/// Frequencies are drawn from `U[0.005 pi, 0.02 pi]` per basis index and
/// coefficients from `U[0.1, 0.2]` p.u.
pub fn make_sinusoid_basis(n: usize, seed: u64) -> BasisSignal {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buses = (0..n)
        .map(|_| {
            let freqs = vec![rng.random_range(0.005 * PI..0.02 * PI), rng.random_range(0.005 * PI..0.02 * PI)];
            let coeffs = (0..3).map(|_| rng.random_range(0.1..0.2)).collect();
            BusBasis { freqs, coeffs }
        })
        .collect();
    BasisSignal::new(BASIS_TIME_UNIT, buses).expect("valid sinusoid basis")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_basis_shape() {
        let b = make_sinusoid_basis(5, 3);
        for i in 0..5 {
            assert_eq!(b.dim(i), 3);
            assert_eq!(b.const_index(i), 2);
            let f0 = b.features(i, 0.0);
            assert_eq!(f0, vec![0.0, 0.0, 1.0]);
            for k in [1, 17, 400, 1500] {
                assert_eq!(b.features(i, k as f64 * 0.01)[2], 1.0);
            }
            for (f, a) in b.buses[i].freqs.iter().zip(&b.buses[i].coeffs) {
                assert!((0.005 * std::f64::consts::PI..0.02 * std::f64::consts::PI).contains(f));
                assert!((0.1..0.2).contains(a));
            }
        }
        assert_eq!(b, make_sinusoid_basis(5, 3));
    }

    #[test]
    fn injection_is_feature_dot_coefficients() {
        let b = make_sinusoid_basis(3, 11);
        for &t in &[0.0, 0.37, 2.5] {
            for i in 0..3 {
                let phi = b.features(i, t);
                let dot: f64 = phi.iter().zip(b.coeffs(i)).map(|(x, y)| x * y).sum();
                assert!((dot - b.injection(i, t)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn serde_round_trip_restores_offsets() {
        let b = make_sinusoid_basis(4, 1);
        let text = serde_json::to_string(&b).unwrap();
        let back: BasisSignal = serde_json::from_str(&text).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.offset(2), 6);
    }

    #[test]
    fn rejects_mismatched_coefficients() {
        let bad = BusBasis {
            freqs: vec![0.1],
            coeffs: vec![1.0],
        };
        assert!(BasisSignal::new(0.01, vec![bad]).is_err());
    }
}
