//! Discrete adjoint of the rollout used for training.
//!
//! The forward pass repeats [`ClosedLoop::advance`](crate::dynamics::ClosedLoop::advance)
//! step for step, recording every stage state; the backward pass applies the
//! transposed stage Jacobians in reverse, including the COI projection, so the
//! gradient is exact for the discretised loss.

use serde::{Deserialize, Serialize};

use crate::controllers::Controller;
use crate::dynamics::{BasisSignal, Disturbance, Integrator, StateLayout};
use crate::error::{Error, Result};
use crate::netmodel::Network;

use super::CostSpec;

/// Sharpness of the log-sum-exp maximum.
pub const SMOOTH_MAX_TEMPERATURE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossOptions {
    pub integrator: Integrator,
    pub dt: f64,
    /// Replace the maximum over time by a log-sum-exp.
    pub smooth_max: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::Rk4,
            dt: 0.01,
            smooth_max: false,
        }
    }
}

/// Injections, features and held noise at every stage time of a scenario.
///
/// Independent of the controller, so it is built once per scenario and
/// reused across epochs.
#[derive(Debug, Clone)]
pub struct ExoTable {
    n: usize,
    fdim: usize,
    stride: usize,
    steps: usize,
    dt: f64,
    p: Vec<f64>,
    feat: Vec<f64>,
    noise: Vec<f64>,
}

impl ExoTable {
    pub fn new(net: &Network, basis: &BasisSignal, dist: &Disturbance, opts: &LossOptions, horizon: f64) -> Result<Self> {
        let steps = crate::dynamics::RolloutConfig::new(horizon, opts.dt).steps()?;
        let n = net.n();
        if basis.n() != n {
            return Err(Error::Dimension(format!("basis covers {} buses, network has {n}", basis.n())));
        }
        dist.validate(n, crate::dynamics::STEP_CAP)?;
        let stride = match opts.integrator {
            Integrator::Euler => 1,
            Integrator::Rk4 => 2,
        };
        let fdim = basis.total_dim();
        let pts = stride * steps + 1;
        let mut p = vec![0.0; pts * n];
        let mut feat = vec![0.0; pts * fdim];
        for j in 0..pts {
            // same time arithmetic as the integrator: t_k, t_k + dt/2
            let (k, s) = (j / stride, j % stride);
            let t = k as f64 * opts.dt + if s == 1 { 0.5 * opts.dt } else { 0.0 };
            let f = &mut feat[j * fdim..(j + 1) * fdim];
            basis.all_features_into(t, f);
            let row = &mut p[j * n..(j + 1) * n];
            for i in 0..n {
                let o = basis.offset(i);
                row[i] = net.p_star()[i] + crate::controllers::dot(&f[o..o + basis.dim(i)], basis.coeffs(i));
            }
            dist.add_steps(t, row);
        }
        let mut noise = vec![0.0; steps * n];
        for k in 0..steps {
            dist.noise_into(k, &mut noise[k * n..(k + 1) * n]);
        }
        Ok(Self {
            n,
            fdim,
            stride,
            steps,
            dt: opts.dt,
            p,
            feat,
            noise,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn p(&self, j: usize) -> &[f64] {
        &self.p[j * self.n..(j + 1) * self.n]
    }

    fn feat(&self, j: usize) -> &[f64] {
        &self.feat[j * self.fdim..(j + 1) * self.fdim]
    }

    fn noise(&self, k: usize) -> &[f64] {
        &self.noise[k * self.n..(k + 1) * self.n]
    }

    // table index of stage `s` of step `k`
    fn stage_point(&self, k: usize, s: usize, stages: usize) -> usize {
        if stages == 1 {
            k
        } else {
            2 * k + [0, 1, 1, 2][s]
        }
    }
}

struct Ctx<'a> {
    net: &'a Network,
    c: &'a Controller,
    basis: &'a BasisSignal,
    layout: StateLayout,
    inv_m: Vec<f64>,
    a_gain: Vec<Vec<f64>>,
    a_dgain: Vec<Vec<f64>>,
    a_param: Vec<usize>,
}

impl<'a> Ctx<'a> {
    fn new(net: &'a Network, c: &'a Controller, basis: &'a BasisSignal) -> Result<Self> {
        let n = net.n();
        c.validate_for(n, basis)?;
        let layout = StateLayout::new(n, (0..n).map(|i| c.estimate_dim(basis, i)).collect());
        let (a_gain, a_dgain) = match c.adaptive_params() {
            Some(ap) => (
                (0..n).map(|i| ap.diag(i)).collect(),
                (0..n)
                    .map(|i| (0..ap.dim(i)).map(|j| c.gain_raw_grad(i, j)).collect())
                    .collect(),
            ),
            None => (vec![Vec::new(); n], vec![Vec::new(); n]),
        };
        Ok(Self {
            net,
            c,
            basis,
            inv_m: net.inertia().iter().map(|m| 1.0 / m).collect(),
            a_param: c.adaptive_offsets(),
            layout,
            a_gain,
            a_dgain,
        })
    }

    fn phi<'f>(&self, i: usize, feat: &'f [f64]) -> &'f [f64] {
        let o = self.basis.offset(i);
        self.c.select_features(self.basis, i, &feat[o..o + self.basis.dim(i)])
    }

    fn a_slice<'y>(&self, i: usize, y: &'y [f64]) -> &'y [f64] {
        let o = self.layout.a_offsets[i];
        &y[o..o + self.layout.a_dims[i]]
    }

    fn control(&self, i: usize, y: &[f64], feat: &[f64]) -> f64 {
        let n = self.layout.n;
        self.c.control(i, y[n + i], self.phi(i, feat), self.a_slice(i, y))
    }

    /// Vector field; also stores `cos(delta_i - delta_j)` per line.
    fn rhs(&self, y: &[f64], p: &[f64], noise: &[f64], feat: &[f64], dx: &mut [f64], cos: &mut [f64]) {
        let n = self.layout.n;
        dx[n..2 * n].iter_mut().for_each(|v| *v = 0.0);
        for (l, line) in self.net.lines().iter().enumerate() {
            let (s, c) = (y[line.from] - y[line.to]).sin_cos();
            cos[l] = c;
            let f = line.susceptance * s;
            dx[n + line.from] -= f;
            dx[n + line.to] += f;
        }
        let mean = y[n..2 * n].iter().sum::<f64>() / n as f64;
        let d = self.net.damping();
        for i in 0..n {
            let w = y[n + i];
            let phi = self.phi(i, feat);
            let u = self.c.control(i, w, phi, self.a_slice(i, y));
            dx[i] = w - mean;
            dx[n + i] = (dx[n + i] + p[i] + noise[i] - d[i] * w - u) * self.inv_m[i];
            let o = self.layout.a_offsets[i];
            for (j, &f) in phi.iter().enumerate() {
                dx[o + j] = w * self.a_gain[i][j] * f;
            }
        }
    }

    /// Adds `ubar * d u_i / d (y, theta)` into `ybar` and `tbar`.
    fn control_vjp(&self, i: usize, y: &[f64], phi: &[f64], ubar: f64, ybar: &mut [f64], tbar: &mut [f64]) {
        let n = self.layout.n;
        let w = y[n + i];
        let a = self.a_slice(i, y);
        let ub = match self.c.saturation {
            Some(_) => ubar * self.c.saturation_slope(self.c.raw_control(i, w, phi, a)),
            None => ubar,
        };
        if ub == 0.0 {
            return;
        }
        ybar[n + i] += ub * self.c.base.derivative(i, w);
        let o = self.layout.a_offsets[i];
        for (j, &f) in phi.iter().enumerate() {
            ybar[o + j] += ub * f;
        }
        self.c.accumulate_base_grad(i, w, ub, tbar);
    }

    /// Adds `J_y^T g` into `ybar` and `J_theta^T g` into `tbar`.
    fn vjp(&self, y: &[f64], cos: &[f64], feat: &[f64], g: &[f64], ybar: &mut [f64], tbar: &mut [f64]) {
        let n = self.layout.n;
        let gm = g[..n].iter().sum::<f64>() / n as f64;
        let d = self.net.damping();
        // h_i = g_omega_i / M_i; d(-grad S)/d delta = -L(delta)
        for (line, &c) in self.net.lines().iter().zip(cos) {
            let (hf, ht) = (g[n + line.from] * self.inv_m[line.from], g[n + line.to] * self.inv_m[line.to]);
            let v = line.susceptance * c * (hf - ht);
            ybar[line.from] -= v;
            ybar[line.to] += v;
        }
        for i in 0..n {
            let h = g[n + i] * self.inv_m[i];
            let w = y[n + i];
            let phi = self.phi(i, feat);
            ybar[n + i] += g[i] - gm - d[i] * h;
            self.control_vjp(i, y, phi, -h, ybar, tbar);
            let o = self.layout.a_offsets[i];
            for (j, &f) in phi.iter().enumerate() {
                let ga = g[o + j];
                if ga != 0.0 {
                    ybar[n + i] += ga * self.a_gain[i][j] * f;
                    tbar[self.a_param[i] + j] += ga * w * f * self.a_dgain[i][j];
                }
            }
        }
    }
}

/// Forward states of every stage, kept for the backward pass.
struct Tape {
    len: usize,
    stages: usize,
    lines: usize,
    ys: Vec<f64>,
    cos: Vec<f64>,
    last: Vec<f64>,
}

impl Tape {
    fn y(&self, k: usize, s: usize) -> &[f64] {
        let o = (k * self.stages + s) * self.len;
        &self.ys[o..o + self.len]
    }

    fn cos(&self, k: usize, s: usize) -> &[f64] {
        let o = (k * self.stages + s) * self.lines;
        &self.cos[o..o + self.lines]
    }

    /// State at record `k`.
    fn x(&self, k: usize) -> &[f64] {
        if k * self.stages * self.len == self.ys.len() {
            &self.last
        } else {
            self.y(k, 0)
        }
    }
}

fn forward(ctx: &Ctx, table: &ExoTable, integrator: Integrator, x0: &[f64]) -> Result<Tape> {
    let len = ctx.layout.len;
    let lines = ctx.net.lines().len();
    let stages = match integrator {
        Integrator::Euler => 1,
        Integrator::Rk4 => 4,
    };
    let steps = table.steps;
    let mut tape = Tape {
        len,
        stages,
        lines,
        ys: Vec::with_capacity(steps * stages * len),
        cos: vec![0.0; steps * stages * lines],
        last: Vec::new(),
    };
    let h = table.dt;
    let n = ctx.layout.n;
    let mut x = x0.to_vec();
    let mut ks = vec![vec![0.0; len]; stages];
    let mut y = vec![0.0; len];
    for k in 0..steps {
        let noise = table.noise(k);
        for s in 0..stages {
            match s {
                0 => y.copy_from_slice(&x),
                _ => {
                    let c = if s == 3 { h } else { 0.5 * h };
                    for j in 0..len {
                        y[j] = x[j] + c * ks[s - 1][j];
                    }
                }
            }
            tape.ys.extend_from_slice(&y);
            let pt = table.stage_point(k, s, stages);
            let co = (k * stages + s) * lines;
            ctx.rhs(&y, table.p(pt), noise, table.feat(pt), &mut ks[s], &mut tape.cos[co..co + lines]);
        }
        if stages == 1 {
            for j in 0..len {
                x[j] += h * ks[0][j];
            }
        } else {
            for j in 0..len {
                x[j] += h / 6.0 * (ks[0][j] + 2.0 * ks[1][j] + 2.0 * ks[2][j] + ks[3][j]);
            }
        }
        crate::netmodel::project_coi(&mut x[..n]);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: k,
                time: k as f64 * h,
            });
        }
    }
    tape.last = x;
    Ok(tape)
}

/// Per-bus loss terms and their sensitivities to `omega_i` at each record.
struct LossTerms {
    value: f64,
    // weight of d|omega_i(k)|/d omega_i(k), record-major
    peak_weight: Vec<f64>,
}

fn peak_terms(ctx: &Ctx, tape: &Tape, records: usize, smooth: bool) -> LossTerms {
    let n = ctx.layout.n;
    let mut peak_weight = vec![0.0; records * n];
    let mut value = 0.0;
    for i in 0..n {
        let w = |k: usize| tape.x(k)[n + i];
        let (mut best, mut arg) = (-1.0, 0);
        for k in 0..records {
            // strict comparison keeps the earliest maximiser
            if w(k).abs() > best {
                best = w(k).abs();
                arg = k;
            }
        }
        if smooth {
            let tau = SMOOTH_MAX_TEMPERATURE;
            let z: f64 = (0..records).map(|k| (tau * (w(k).abs() - best)).exp()).sum();
            value += best + z.ln() / tau;
            for k in 0..records {
                let p = (tau * (w(k).abs() - best)).exp() / z;
                peak_weight[k * n + i] = p * sign(w(k));
            }
        } else {
            value += best;
            peak_weight[arg * n + i] = sign(w(arg));
        }
    }
    LossTerms { value, peak_weight }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn initial_state(ctx: &Ctx, delta_star: &[f64]) -> Result<Vec<f64>> {
    let n = ctx.layout.n;
    if delta_star.len() != n {
        return Err(Error::Dimension(format!(
            "equilibrium has {} angles, network has {n} buses",
            delta_star.len()
        )));
    }
    let mut x = vec![0.0; ctx.layout.len];
    x[..n].copy_from_slice(delta_star);
    Ok(x)
}

/// Loss of one scenario and, when `want_grad`, its gradient in raw parameters.
#[allow(clippy::too_many_arguments)]
pub(crate) fn loss_and_grad(
    net: &Network,
    controller: &Controller,
    basis: &BasisSignal,
    table: &ExoTable,
    delta_star: &[f64],
    cost: &CostSpec,
    opts: &LossOptions,
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let ctx = Ctx::new(net, controller, basis)?;
    if cost.c.len() != net.n() {
        return Err(Error::Dimension(format!(
            "{} cost coefficients for {} buses",
            cost.c.len(),
            net.n()
        )));
    }
    let x0 = initial_state(&ctx, delta_star)?;
    let tape = forward(&ctx, table, opts.integrator, &x0)?;
    let n = ctx.layout.n;
    let steps = table.steps;
    let records = steps + 1;
    let peaks = peak_terms(&ctx, &tape, records, opts.smooth_max);

    // action cost, left Riemann sum over records 0..steps-1
    let mut action = 0.0;
    let mut ubuf = vec![0.0; steps * n];
    for k in 0..steps {
        let feat = table.feat(k * table.stride);
        for i in 0..n {
            let u = ctx.control(i, tape.x(k), feat);
            ubuf[k * n + i] = u;
            action += cost.c[i] * u * u;
        }
    }
    let loss = peaks.value + cost.gamma * table.dt * action;
    if !want_grad {
        return Ok((loss, Vec::new()));
    }

    let len = ctx.layout.len;
    let mut tbar = vec![0.0; controller.num_params()];
    let mut lam = vec![0.0; len];
    let mut ybars = vec![vec![0.0; len]; tape.stages];
    let mut kbar = vec![0.0; len];
    let h = table.dt;
    for i in 0..n {
        lam[n + i] += peaks.peak_weight[steps * n + i];
    }
    for k in (0..steps).rev() {
        // through the COI projection, which is symmetric
        let mean = lam[..n].iter().sum::<f64>() / n as f64;
        lam[..n].iter_mut().for_each(|v| *v -= mean);
        ybars.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x = 0.0));
        if tape.stages == 1 {
            for j in 0..len {
                kbar[j] = h * lam[j];
            }
            ctx.vjp(tape.y(k, 0), tape.cos(k, 0), table.feat(k), &kbar, &mut ybars[0], &mut tbar);
        } else {
            let w = [h / 6.0, h / 3.0, h / 3.0, h / 6.0];
            let carry = [0.5 * h, 0.5 * h, h];
            for s in (0..4).rev() {
                for j in 0..len {
                    kbar[j] = w[s] * lam[j] + if s < 3 { carry[s] * ybars[s + 1][j] } else { 0.0 };
                }
                let pt = table.stage_point(k, s, 4);
                ctx.vjp(tape.y(k, s), tape.cos(k, s), table.feat(pt), &kbar, &mut ybars[s], &mut tbar);
            }
        }
        for ybar in &ybars {
            for j in 0..len {
                lam[j] += ybar[j];
            }
        }
        // loss terms recorded at state k
        let feat = table.feat(k * table.stride);
        let x = tape.x(k);
        for i in 0..n {
            lam[n + i] += peaks.peak_weight[k * n + i];
            let ubar = 2.0 * cost.gamma * h * cost.c[i] * ubuf[k * n + i];
            if ubar != 0.0 {
                let phi = ctx.phi(i, feat);
                ctx.control_vjp(i, x, phi, ubar, &mut lam, &mut tbar);
            }
        }
        if lam.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { step: k });
        }
    }
    if tbar.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { step: 0 });
    }
    Ok((loss, tbar))
}
