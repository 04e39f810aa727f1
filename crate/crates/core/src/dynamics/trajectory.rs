use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BasisSignal, Integrator, StepChange};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub controller: String,
    pub integrator: Integrator,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub noise: f64,
    pub steps: Vec<StepChange>,
    pub basis: BasisSignal,
}

/// Time-indexed record of a rollout. Record `k` is at `t = k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    n: usize,
    a_dims: Vec<usize>,
    a_len: usize,
    times: Vec<f64>,
    delta: Vec<f64>,
    omega: Vec<f64>,
    u: Vec<f64>,
    p: Vec<f64>,
    a_hat: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub(crate) fn with_capacity(n: usize, a_dims: Vec<usize>, dt: f64, records: usize, meta: TrajectoryMeta) -> Self {
        let a_len = a_dims.iter().sum();
        Self {
            dt,
            n,
            a_dims,
            a_len,
            times: Vec::with_capacity(records),
            delta: Vec::with_capacity(records * n),
            omega: Vec::with_capacity(records * n),
            u: Vec::with_capacity(records * n),
            p: Vec::with_capacity(records * n),
            a_hat: Vec::with_capacity(records * a_len),
            meta,
        }
    }

    /// Appends a record; `x` is the flat augmented state.
    pub(crate) fn push(&mut self, t: f64, x: &[f64], u: &[f64], p: &[f64]) {
        let n = self.n;
        self.times.push(t);
        self.delta.extend_from_slice(&x[..n]);
        self.omega.extend_from_slice(&x[n..2 * n]);
        self.a_hat.extend_from_slice(&x[2 * n..]);
        self.u.extend_from_slice(u);
        self.p.extend_from_slice(p);
    }

    #[cfg(test)]
    pub(crate) fn fill_for_test(&mut self, omega: f64, u: f64) {
        self.omega.iter_mut().for_each(|w| *w = omega);
        self.u.iter_mut().for_each(|x| *x = u);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn delta(&self, k: usize) -> &[f64] {
        &self.delta[k * self.n..(k + 1) * self.n]
    }

    pub fn omega(&self, k: usize) -> &[f64] {
        &self.omega[k * self.n..(k + 1) * self.n]
    }

    pub fn u(&self, k: usize) -> &[f64] {
        &self.u[k * self.n..(k + 1) * self.n]
    }

    pub fn p(&self, k: usize) -> &[f64] {
        &self.p[k * self.n..(k + 1) * self.n]
    }

    /// Flattened estimates of record `k`, buses concatenated.
    pub fn a_hat_flat(&self, k: usize) -> &[f64] {
        &self.a_hat[k * self.a_len..(k + 1) * self.a_len]
    }

    pub fn a_hat(&self, k: usize) -> Vec<Vec<f64>> {
        let flat = self.a_hat_flat(k);
        let mut off = 0;
        self.a_dims
            .iter()
            .map(|&d| {
                let v = flat[off..off + d].to_vec();
                off += d;
                v
            })
            .collect()
    }

    pub fn a_dims(&self) -> &[usize] {
        &self.a_dims
    }

    /// Index of the first record at or after time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        ((t / self.dt) - 1e-9).ceil().max(0.0) as usize
    }

    /// Maximum `|omega_i|` over all buses and records in `[from, to]`.
    pub fn peak_deviation(&self, from: f64, to: f64) -> f64 {
        let (a, b) = (self.index_at(from), self.index_at(to).min(self.len() - 1));
        (a..=b)
            .flat_map(|k| self.omega(k).iter())
            .fold(0.0, |m, w| m.max(w.abs()))
    }

    pub fn to_csv(&self) -> String {
        let n = self.n;
        let mut s = String::from("t");
        for name in ["delta", "omega", "u", "p"] {
            for i in 1..=n {
                let _ = write!(s, ",{name}_{i}");
            }
        }
        s.push('\n');
        for k in 0..self.len() {
            let _ = write!(s, "{}", self.times[k]);
            for block in [self.delta(k), self.omega(k), self.u(k), self.p(k)] {
                for v in block {
                    let _ = write!(s, ",{v}");
                }
            }
            s.push('\n');
        }
        s
    }

    /// Writes `<stem>.csv` and the `<stem>.json` metadata sidecar.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| Error::Io { path, source }
        };
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(io(&csv))?;
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&self.meta).expect("serializable");
        std::fs::write(&json, text).map_err(io(&json))?;
        Ok(())
    }
}
