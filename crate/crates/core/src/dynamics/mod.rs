//! Closed-loop swing dynamics in center-of-inertia coordinates.
//!
//! The augmented state is `(delta, omega, a_hat)`, stored flat as
//! `[delta_1..delta_n, omega_1..omega_n, a_hat_1.., a_hat_n..]`:
//!
//! ```text
//! d delta_i / dt = omega_i - mean(omega)
//! M_i d omega_i / dt = p_i(t) - D_i omega_i - u_i - sum_j B_ij sin(delta_i - delta_j)
//! d a_hat_i / dt = omega_i A_i phi_i(t)
//! ```
//!
//! with `p_i(t) = p_i* + phi_i(t)^T a_i + steps + noise`.

mod basis;
mod disturbance;
mod trajectory;

pub use basis::{make_sinusoid_basis, BasisSignal, BusBasis, BASIS_TIME_UNIT};
pub use disturbance::{Disturbance, StepChange, STEP_CAP};
pub use trajectory::{Trajectory, TrajectoryMeta};

use serde::{Deserialize, Serialize};

use crate::controllers::Controller;
use crate::error::{Error, Result};
use crate::netmodel::{grad_s_into, project_coi, EquilibriumAngles, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Classical fourth-order Runge-Kutta.
    #[default]
    Rk4,
    /// Explicit Euler.
    Euler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    pub a_hat: Vec<Vec<f64>>,
}

impl SystemState {
    /// `(delta*, 0, 0)`, sized for the controller's estimates.
    pub fn at_equilibrium(eq: &EquilibriumAngles, controller: &Controller, basis: &BasisSignal) -> Self {
        let n = eq.delta_star.len();
        Self {
            delta: eq.delta_star.clone(),
            omega: vec![0.0; n],
            a_hat: (0..n).map(|i| vec![0.0; controller.estimate_dim(basis, i)]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta
            .iter()
            .chain(&self.omega)
            .chain(self.a_hat.iter().flatten())
            .all(|x| x.is_finite())
    }
}

/// Where each block of the augmented state lives in the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub n: usize,
    pub a_offsets: Vec<usize>,
    pub a_dims: Vec<usize>,
    pub len: usize,
}

impl StateLayout {
    pub fn new(n: usize, a_dims: Vec<usize>) -> Self {
        let mut off = 2 * n;
        let a_offsets = a_dims
            .iter()
            .map(|&d| {
                let o = off;
                off += d;
                o
            })
            .collect();
        Self {
            n,
            a_offsets,
            a_dims,
            len: off,
        }
    }

    pub fn a_len(&self) -> usize {
        self.len - 2 * self.n
    }

    pub fn flatten(&self, s: &SystemState) -> Result<Vec<f64>> {
        if s.delta.len() != self.n || s.omega.len() != self.n || s.a_hat.len() != self.n {
            return Err(Error::Dimension(format!("state is not sized for {} buses", self.n)));
        }
        let mut x = Vec::with_capacity(self.len);
        x.extend_from_slice(&s.delta);
        x.extend_from_slice(&s.omega);
        for (i, a) in s.a_hat.iter().enumerate() {
            if a.len() != self.a_dims[i] {
                return Err(Error::Dimension(format!(
                    "bus {i}: estimate has {} entries, controller expects {}",
                    a.len(),
                    self.a_dims[i]
                )));
            }
            x.extend_from_slice(a);
        }
        Ok(x)
    }

    pub fn unflatten(&self, x: &[f64]) -> SystemState {
        let n = self.n;
        SystemState {
            delta: x[..n].to_vec(),
            omega: x[n..2 * n].to_vec(),
            a_hat: self
                .a_offsets
                .iter()
                .zip(&self.a_dims)
                .map(|(&o, &d)| x[o..o + d].to_vec())
                .collect(),
        }
    }
}

/// Scratch buffers for right-hand-side evaluation.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub(crate) gs: Vec<f64>,
    pub(crate) p: Vec<f64>,
    pub(crate) feat: Vec<f64>,
    pub(crate) noise: Vec<f64>,
    pub(crate) k: [Vec<f64>; 4],
    pub(crate) tmp: Vec<f64>,
}

impl Workspace {
    pub fn new(layout: &StateLayout, basis: &BasisSignal) -> Self {
        let n = layout.n;
        Self {
            gs: vec![0.0; n],
            p: vec![0.0; n],
            feat: vec![0.0; basis.total_dim()],
            noise: vec![0.0; n],
            k: std::array::from_fn(|_| vec![0.0; layout.len]),
            tmp: vec![0.0; layout.len],
        }
    }
}

/// Network, controller and exogenous inputs bundled into one vector field.
pub struct ClosedLoop<'a> {
    pub net: &'a Network,
    pub controller: &'a Controller,
    pub basis: &'a BasisSignal,
    pub dist: &'a Disturbance,
    pub layout: StateLayout,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        net: &'a Network,
        controller: &'a Controller,
        basis: &'a BasisSignal,
        dist: &'a Disturbance,
    ) -> Result<Self> {
        let n = net.n();
        if basis.n() != n {
            return Err(Error::Dimension(format!("basis covers {} buses, network has {n}", basis.n())));
        }
        controller.validate_for(n, basis)?;
        dist.validate(n, STEP_CAP)?;
        let layout = StateLayout::new(n, (0..n).map(|i| controller.estimate_dim(basis, i)).collect());
        Ok(Self {
            net,
            controller,
            basis,
            dist,
            layout,
        })
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.layout, self.basis)
    }

    /// Features and total injection at time `t`, given the held noise.
    pub fn exogenous(&self, t: f64, noise: &[f64], p: &mut [f64], feat: &mut [f64]) {
        self.basis.all_features_into(t, feat);
        let ps = self.net.p_star();
        for i in 0..self.layout.n {
            let o = self.basis.offset(i);
            let phi = &feat[o..o + self.basis.dim(i)];
            p[i] = ps[i] + crate::controllers::dot(phi, self.basis.coeffs(i)) + noise[i];
        }
        self.dist.add_steps(t, p);
    }

    /// Vector field given precomputed injection `p` and features `feat`.
    pub fn rhs_exo(&self, x: &[f64], p: &[f64], feat: &[f64], gs: &mut [f64], dx: &mut [f64]) {
        let n = self.layout.n;
        let (delta, rest) = x.split_at(n);
        let omega = &rest[..n];
        grad_s_into(self.net, delta, gs);
        let mean = omega.iter().sum::<f64>() / n as f64;
        let (m, d) = (self.net.inertia(), self.net.damping());
        for i in 0..n {
            let o = self.basis.offset(i);
            let phi = self.controller.select_features(self.basis, i, &feat[o..o + self.basis.dim(i)]);
            let (ao, ad) = (self.layout.a_offsets[i], self.layout.a_dims[i]);
            let u = self.controller.control(i, omega[i], phi, &x[ao..ao + ad]);
            dx[i] = omega[i] - mean;
            dx[n + i] = (p[i] - d[i] * omega[i] - u - gs[i]) / m[i];
            self.controller.adaptation_into(i, omega[i], phi, &mut dx[ao..ao + ad]);
        }
    }

    pub fn rhs(&self, t: f64, x: &[f64], ws: &mut Workspace, dx: &mut [f64]) {
        let Workspace { gs, p, feat, noise, .. } = ws;
        self.exogenous(t, noise, p, feat);
        self.rhs_exo(x, p, feat, gs, dx);
    }

    /// Control actions at `(t, x)`.
    pub fn controls_into(&self, t: f64, x: &[f64], feat: &mut [f64], u: &mut [f64]) {
        let n = self.layout.n;
        self.basis.all_features_into(t, feat);
        for i in 0..n {
            let o = self.basis.offset(i);
            let phi = self.controller.select_features(self.basis, i, &feat[o..o + self.basis.dim(i)]);
            let (ao, ad) = (self.layout.a_offsets[i], self.layout.a_dims[i]);
            u[i] = self.controller.control(i, x[n + i], phi, &x[ao..ao + ad]);
        }
    }

    /// One integrator step from `(t, x)` with the noise held for step `k`.
    ///
    /// The angles of the result are re-projected onto the COI gauge.
    pub fn advance(
        &self,
        integrator: Integrator,
        t: f64,
        dt: f64,
        k: usize,
        x: &[f64],
        out: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<()> {
        self.dist.noise_into(k, &mut ws.noise);
        match integrator {
            Integrator::Euler => {
                let mut k1 = std::mem::take(&mut ws.k[0]);
                self.rhs(t, x, ws, &mut k1);
                for j in 0..x.len() {
                    out[j] = x[j] + dt * k1[j];
                }
                ws.k[0] = k1;
            }
            Integrator::Rk4 => {
                let [mut k1, mut k2, mut k3, mut k4] = std::mem::replace(&mut ws.k, Default::default());
                let mut tmp = std::mem::take(&mut ws.tmp);
                let h2 = 0.5 * dt;
                self.rhs(t, x, ws, &mut k1);
                for j in 0..x.len() {
                    tmp[j] = x[j] + h2 * k1[j];
                }
                self.rhs(t + h2, &tmp, ws, &mut k2);
                for j in 0..x.len() {
                    tmp[j] = x[j] + h2 * k2[j];
                }
                self.rhs(t + h2, &tmp, ws, &mut k3);
                for j in 0..x.len() {
                    tmp[j] = x[j] + dt * k3[j];
                }
                self.rhs(t + dt, &tmp, ws, &mut k4);
                for j in 0..x.len() {
                    out[j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
                ws.k = [k1, k2, k3, k4];
                ws.tmp = tmp;
            }
        }
        project_coi(&mut out[..self.layout.n]);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: k, time: t });
        }
        Ok(())
    }
}

/// Advances `state` by one step of length `dt` starting at time `t`.
#[allow(clippy::too_many_arguments)]
pub fn step(
    net: &Network,
    state: &SystemState,
    controller: &Controller,
    basis: &BasisSignal,
    dist: &Disturbance,
    t: f64,
    dt: f64,
    integrator: Integrator,
) -> Result<SystemState> {
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("step size {dt} must be positive")));
    }
    if !state.is_finite() {
        return Err(Error::BlowUp { step: 0, time: t });
    }
    let sys = ClosedLoop::new(net, controller, basis, dist)?;
    let x = sys.layout.flatten(state)?;
    let mut out = vec![0.0; x.len()];
    let mut ws = sys.workspace();
    let k = (t / dt).round() as usize;
    sys.advance(integrator, t, dt, k, &x, &mut out, &mut ws)?;
    Ok(sys.layout.unflatten(&out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutConfig {
    pub horizon: f64,
    pub dt: f64,
    pub integrator: Integrator,
}

impl RolloutConfig {
    pub fn new(horizon: f64, dt: f64) -> Self {
        Self {
            horizon,
            dt,
            integrator: Integrator::Rk4,
        }
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    /// Number of steps, `horizon / dt`, which must be integral.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(Error::Validation(format!(
                "dt ({}) and horizon ({}) must be positive",
                self.dt, self.horizon
            )));
        }
        let k = (self.horizon / self.dt).round();
        if (k * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(Error::Validation(format!(
                "horizon {} is not a multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(k as usize)
    }
}

/// Integrates from `x0` over `[0, horizon]`, recording every step.
pub fn rollout(
    net: &Network,
    controller: &Controller,
    basis: &BasisSignal,
    dist: &Disturbance,
    cfg: &RolloutConfig,
    x0: &SystemState,
) -> Result<Trajectory> {
    let steps = cfg.steps()?;
    let sys = ClosedLoop::new(net, controller, basis, dist)?;
    let mut x = sys.layout.flatten(x0)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { step: 0, time: 0.0 });
    }
    let mut next = vec![0.0; x.len()];
    let mut ws = sys.workspace();
    let mut traj = Trajectory::with_capacity(
        net.n(),
        sys.layout.a_dims.clone(),
        cfg.dt,
        steps + 1,
        TrajectoryMeta {
            controller: controller.name(),
            integrator: cfg.integrator,
            horizon: cfg.horizon,
            dt: cfg.dt,
            seed: dist.seed,
            noise: dist.noise,
            steps: dist.steps.clone(),
            basis: basis.clone(),
        },
    );
    let mut u = vec![0.0; net.n()];
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        sys.controls_into(t, &x, &mut ws.feat, &mut u);
        dist.noise_into(k, &mut ws.noise);
        let Workspace { p, feat, noise, .. } = &mut ws;
        sys.exogenous(t, noise, p, feat);
        traj.push(t, &x, &u, &ws.p);
        if k < steps {
            sys.advance(cfg.integrator, t, cfg.dt, k, &x, &mut next, &mut ws)?;
            std::mem::swap(&mut x, &mut next);
        }
    }
    Ok(traj)
}
