//! Network description, case-file I/O and the pre-disturbance equilibrium.
//!
//! A [`Network`] is the lossless, unit-voltage transmission graph together
//! with per-bus inertia, damping and net-injection setpoints. All angle
//! functions here operate on center-of-inertia (COI) angles.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(p_star)` accepted at load time.
pub const BALANCE_TOL: f64 = 1e-9;

/// Largest residual accepted from [`solve_equilibrium`].
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    /// 0-based bus index, `from < to`.
    pub from: usize,
    pub to: usize,
    /// Susceptance in p.u., strictly positive.
    pub susceptance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    ids: Vec<i64>,
    lines: Vec<Line>,
    inertia: Vec<f64>,
    damping: Vec<f64>,
    p_star: Vec<f64>,
}

/// On-disk case schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: i64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub p_star: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub from: i64,
    pub to: i64,
    #[serde(rename = "B")]
    pub b: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Subtract the mean injection instead of rejecting an unbalanced case.
    pub rebalance: bool,
}

impl Network {
    /// Builds and validates a network. Lines use 0-based indices.
    pub fn new(
        inertia: Vec<f64>,
        damping: Vec<f64>,
        p_star: Vec<f64>,
        lines: Vec<Line>,
        opts: LoadOptions,
    ) -> Result<Self> {
        let n = inertia.len();
        let ids = (1..=n as i64).collect();
        Self::build("network".into(), ids, inertia, damping, p_star, lines, opts)
    }

    fn build(
        name: String,
        ids: Vec<i64>,
        inertia: Vec<f64>,
        damping: Vec<f64>,
        mut p_star: Vec<f64>,
        lines: Vec<Line>,
        opts: LoadOptions,
    ) -> Result<Self> {
        let n = inertia.len();
        if n == 0 {
            return Err(Error::Validation("network has no buses".into()));
        }
        if damping.len() != n || p_star.len() != n {
            return Err(Error::Dimension(format!(
                "{n} inertia values but {} damping and {} setpoints",
                damping.len(),
                p_star.len()
            )));
        }
        for i in 0..n {
            if !(inertia[i].is_finite() && inertia[i] > 0.0) {
                return Err(Error::Validation(format!(
                    "non-positive inertia at bus {}",
                    ids[i]
                )));
            }
            if !(damping[i].is_finite() && damping[i] > 0.0) {
                return Err(Error::Validation(format!(
                    "non-positive damping at bus {}",
                    ids[i]
                )));
            }
            if !p_star[i].is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite setpoint at bus {}",
                    ids[i]
                )));
            }
        }

        let mut seen = HashMap::new();
        let mut canon = Vec::with_capacity(lines.len());
        for l in &lines {
            let (a, b) = (l.from.min(l.to), l.from.max(l.to));
            if b >= n {
                return Err(Error::Validation(format!("line {}-{} references a missing bus", l.from, l.to)));
            }
            if a == b {
                return Err(Error::Validation(format!("self-loop at bus {}", ids[a])));
            }
            if !l.susceptance.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite susceptance on line {}-{}",
                    ids[a], ids[b]
                )));
            }
            if l.susceptance < 0.0 {
                return Err(Error::Validation(format!(
                    "negative susceptance on line {}-{}",
                    ids[a], ids[b]
                )));
            }
            if l.susceptance == 0.0 {
                return Err(Error::Validation(format!(
                    "zero susceptance on line {}-{}",
                    ids[a], ids[b]
                )));
            }
            if seen.insert((a, b), ()).is_some() {
                return Err(Error::Validation(format!("duplicate line {}-{}", ids[a], ids[b])));
            }
            canon.push(Line {
                from: a,
                to: b,
                susceptance: l.susceptance,
            });
        }

        if !is_connected(n, &canon) {
            return Err(Error::Validation("graph disconnected".into()));
        }

        let total: f64 = p_star.iter().sum();
        if total.abs() > BALANCE_TOL {
            if opts.rebalance {
                let mean = total / n as f64;
                p_star.iter_mut().for_each(|p| *p -= mean);
            } else {
                return Err(Error::Validation(format!(
                    "unbalanced injections: sum of p_star is {total:.3e} (tolerance {BALANCE_TOL:e})"
                )));
            }
        }

        Ok(Network {
            name,
            ids,
            lines: canon,
            inertia,
            damping,
            p_star,
        })
    }

    pub fn from_case(case: &CaseFile, opts: LoadOptions) -> Result<Self> {
        if case.version != 1 {
            return Err(Error::Validation(format!(
                "unsupported case version {}",
                case.version
            )));
        }
        let mut index = HashMap::new();
        for (k, b) in case.buses.iter().enumerate() {
            if index.insert(b.id, k).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id)));
            }
        }
        let lookup = |id: i64| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("line references unknown bus {id}")))
        };
        let lines = case
            .lines
            .iter()
            .map(|l| {
                Ok(Line {
                    from: lookup(l.from)?,
                    to: lookup(l.to)?,
                    susceptance: l.b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::build(
            case.name.clone().unwrap_or_else(|| "case".into()),
            case.buses.iter().map(|b| b.id).collect(),
            case.buses.iter().map(|b| b.m).collect(),
            case.buses.iter().map(|b| b.d).collect(),
            case.buses.iter().map(|b| b.p_star).collect(),
            lines,
            opts,
        )
    }

    pub fn from_json(text: &str, opts: LoadOptions) -> Result<Self> {
        let case: CaseFile = serde_json::from_str(text).map_err(|e| Error::parse("case file", e))?;
        Self::from_case(&case, opts)
    }

    pub fn to_case(&self) -> CaseFile {
        CaseFile {
            version: 1,
            name: Some(self.name.clone()),
            description: None,
            buses: (0..self.n())
                .map(|i| BusRecord {
                    id: self.ids[i],
                    m: self.inertia[i],
                    d: self.damping[i],
                    p_star: self.p_star[i],
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineRecord {
                    from: self.ids[l.from],
                    to: self.ids[l.to],
                    b: l.susceptance,
                })
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.inertia.len()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Bus identifiers as written in the case file.
    pub fn ids(&self) -> &[i64] {
        &self.ids
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn inertia(&self) -> &[f64] {
        &self.inertia
    }

    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    pub fn p_star(&self) -> &[f64] {
        &self.p_star
    }

    /// Dense susceptance matrix.
    pub fn susceptance_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut b = DMatrix::zeros(n, n);
        for l in &self.lines {
            b[(l.from, l.to)] = l.susceptance;
            b[(l.to, l.from)] = l.susceptance;
        }
        b
    }

    /// Copy of this network with different setpoints (validated again).
    pub fn with_p_star(&self, p_star: Vec<f64>, opts: LoadOptions) -> Result<Self> {
        Self::build(
            self.name.clone(),
            self.ids.clone(),
            self.inertia.clone(),
            self.damping.clone(),
            p_star,
            self.lines.clone(),
            opts,
        )
    }
}

fn is_connected(n: usize, lines: &[Line]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for l in lines {
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

pub fn load_case(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let case: CaseFile = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    Network::from_case(&case, opts)
}

/// Bundled case files, embedded at compile time.
pub mod bundled {
    use super::*;

    pub const TWO_BUS: &str = include_str!("../data/two_bus.json");
    pub const RING3: &str = include_str!("../data/ring3.json");
    pub const NE39: &str = include_str!("../data/ne39.json");

    pub fn two_bus() -> Network {
        Network::from_json(TWO_BUS, LoadOptions::default()).expect("bundled two-bus case")
    }

    pub fn ring3() -> Network {
        Network::from_json(RING3, LoadOptions::default()).expect("bundled ring case")
    }

    pub fn ne39() -> Network {
        Network::from_json(NE39, LoadOptions::default()).expect("bundled 39-bus case")
    }

    /// Looks up a bundled case by name (`two_bus`, `ring3`, `ne39`).
    pub fn by_name(name: &str) -> Option<Network> {
        match name {
            "two_bus" => Some(two_bus()),
            "ring3" => Some(ring3()),
            "ne39" => Some(ne39()),
            _ => None,
        }
    }
}

/// Potential `S(delta) = -1/2 sum_ij B_ij cos(delta_i - delta_j)`.
pub fn potential_s(net: &Network, delta: &[f64]) -> f64 {
    net.lines
        .iter()
        .map(|l| -l.susceptance * (delta[l.from] - delta[l.to]).cos())
        .sum()
}

/// `[grad S]_i = sum_j B_ij sin(delta_i - delta_j)`, the electrical power leaving bus `i`.
pub fn grad_s(net: &Network, delta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; net.n()];
    grad_s_into(net, delta, &mut g);
    g
}

pub fn grad_s_into(net: &Network, delta: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|g| *g = 0.0);
    for l in &net.lines {
        let s = l.susceptance * (delta[l.from] - delta[l.to]).sin();
        out[l.from] += s;
        out[l.to] -= s;
    }
}

/// Laplacian with weights `B_ij cos(delta_i - delta_j)`.
pub fn hessian_s(net: &Network, delta: &[f64]) -> DMatrix<f64> {
    let n = net.n();
    let mut h = DMatrix::zeros(n, n);
    for l in &net.lines {
        let w = l.susceptance * (delta[l.from] - delta[l.to]).cos();
        h[(l.from, l.to)] -= w;
        h[(l.to, l.from)] -= w;
        h[(l.from, l.from)] += w;
        h[(l.to, l.to)] += w;
    }
    h
}

/// Accumulates `scale * hessian_s(delta) * v` into `out` without forming the matrix.
pub fn hessian_s_mul_acc(net: &Network, delta: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
    for l in &net.lines {
        let w = scale * l.susceptance * (delta[l.from] - delta[l.to]).cos();
        let d = w * (v[l.from] - v[l.to]);
        out[l.from] += d;
        out[l.to] -= d;
    }
}

/// Shifts angles so they sum to zero.
pub fn project_coi(delta: &mut [f64]) {
    let mean = delta.iter().sum::<f64>() / delta.len() as f64;
    delta.iter_mut().for_each(|d| *d -= mean);
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumAngles {
    /// COI angles in radians.
    pub delta_star: Vec<f64>,
    /// Infinity norm of `p_star - grad S(delta_star)`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct EquilibriumOptions {
    pub max_iterations: usize,
    /// Newton stops once the residual falls below this value.
    pub tolerance: f64,
    pub initial: Option<Vec<f64>>,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-12,
            initial: None,
        }
    }
}

fn residual_into(net: &Network, delta: &[f64], r: &mut [f64]) -> f64 {
    grad_s_into(net, delta, r);
    let mut worst: f64 = 0.0;
    for (ri, p) in r.iter_mut().zip(&net.p_star) {
        *ri = p - *ri;
        worst = worst.max(ri.abs());
    }
    worst
}

pub fn solve_equilibrium(net: &Network) -> Result<EquilibriumAngles> {
    solve_equilibrium_with(net, &EquilibriumOptions::default())
}

/// Damped Newton on `grad S(delta) = p_star` restricted to the COI subspace.
///
/// The Jacobian is the cos-weighted Laplacian, singular along the all-ones
/// direction; adding `11^T / n` makes the step unique and orthogonal to it.
pub fn solve_equilibrium_with(net: &Network, opts: &EquilibriumOptions) -> Result<EquilibriumAngles> {
    let n = net.n();
    let mut delta = match &opts.initial {
        Some(d) if d.len() == n => d.clone(),
        Some(d) => {
            return Err(Error::Dimension(format!(
                "initial guess has {} angles, network has {n} buses",
                d.len()
            )))
        }
        None => vec![0.0; n],
    };
    project_coi(&mut delta);

    let mut r = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; n];
    let mut res = residual_into(net, &delta, &mut r);
    let mut iterations = 0;

    while res > opts.tolerance {
        if iterations == opts.max_iterations {
            return Err(Error::NoConvergence { iterations, residual: res });
        }
        iterations += 1;

        let mut jac = hessian_s(net, &delta);
        jac.add_scalar_mut(1.0 / n as f64);
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .ok_or(Error::NoConvergence { iterations, residual: res })?;

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            for i in 0..n {
                trial[i] = delta[i] + alpha * step[i];
            }
            project_coi(&mut trial);
            let rt = residual_into(net, &trial, &mut r_trial);
            if rt.is_finite() && rt < res {
                delta.copy_from_slice(&trial);
                r.copy_from_slice(&r_trial);
                res = rt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no descent left; either converged to roundoff or stuck
            break;
        }
    }

    if res > EQUILIBRIUM_TOL {
        return Err(Error::NoConvergence { iterations, residual: res });
    }
    for l in &net.lines {
        let diff = delta[l.from] - delta[l.to];
        if diff.abs() >= FRAC_PI_2 {
            return Err(Error::AngleBound {
                from: net.ids[l.from] as usize,
                to: net.ids[l.to] as usize,
                difference: diff,
            });
        }
    }
    Ok(EquilibriumAngles {
        delta_star: delta,
        residual: res,
        iterations,
    })
}
