//! Scenario generation, transient and restoration costs, and BPTT training.

mod adjoint;
mod scenarios;

pub use adjoint::{ExoTable, LossOptions, SMOOTH_MAX_TEMPERATURE};
pub use scenarios::{make_scenarios, Scenario, ScenarioSet, Split};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{Controller, ControllerFile};
use crate::dynamics::{rollout, RolloutConfig, SystemState, Trajectory};
use crate::error::{Error, Result};
use crate::netmodel::Network;

/// Quadratic action cost `C_i(u) = c_i u^2` weighted by `gamma` over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub gamma: f64,
    pub c: Vec<f64>,
    pub horizon: f64,
}

impl CostSpec {
    pub const GAMMA: f64 = 0.1;
    pub const HORIZON: f64 = 4.0;

    pub fn new(gamma: f64, c: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(Error::Validation(format!("action weight {gamma} must be >= 0")));
        }
        if let Some(x) = c.iter().find(|x| !(**x > 0.0)) {
            return Err(Error::Validation(format!("cost coefficient {x} must be positive")));
        }
        if !(horizon > 0.0) {
            return Err(Error::Validation(format!("transient horizon {horizon} must be positive")));
        }
        Ok(Self { gamma, c, horizon })
    }

    /// `c_i ~ U[0.025, 0.075]`, drawn once per network.
    pub fn sample(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = (0..n).map(|_| rng.random_range(0.025..=0.075)).collect();
        Self {
            gamma: Self::GAMMA,
            c,
            horizon: Self::HORIZON,
        }
    }
}

/// Transient cost over `[0, horizon]`.
pub fn transient_loss(traj: &Trajectory, cost: &CostSpec) -> Result<f64> {
    transient_loss_from(traj, cost, 0.0)
}

/// `sum_i (max_k |omega_i(k)| + gamma sum_k c_i u_i(k)^2 dt)` over
/// `[start, start + horizon]`; the sum is a left Riemann sum.
pub fn transient_loss_from(traj: &Trajectory, cost: &CostSpec, start: f64) -> Result<f64> {
    let n = traj.n();
    if cost.c.len() != n {
        return Err(Error::Dimension(format!("{} cost coefficients for {n} buses", cost.c.len())));
    }
    let (a, b) = (traj.index_at(start), traj.index_at(start + cost.horizon));
    if b >= traj.len() {
        return Err(Error::Horizon(format!(
            "trajectory ends at {} s, cost needs {} s",
            traj.times().last().copied().unwrap_or(0.0),
            start + cost.horizon
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        let peak = (a..=b).map(|k| traj.omega(k)[i].abs()).fold(0.0, f64::max);
        let action: f64 = (a..b).map(|k| traj.u(k)[i].powi(2)).sum();
        total += peak + cost.gamma * cost.c[i] * action * traj.dt;
    }
    Ok(total)
}

/// Mean `|omega_i|` over buses and records in `window`.
pub fn restoration_cost(traj: &Trajectory, window: (f64, f64)) -> Result<f64> {
    let (a, b) = (traj.index_at(window.0), traj.index_at(window.1));
    if b >= traj.len() || a > b {
        return Err(Error::Horizon(format!(
            "restoration window [{}, {}] s is not covered by a {} s trajectory",
            window.0,
            window.1,
            traj.times().last().copied().unwrap_or(0.0)
        )));
    }
    let sum: f64 = (a..=b).flat_map(|k| traj.omega(k).iter()).map(|w| w.abs()).sum();
    Ok(sum / ((b - a + 1) * traj.n()) as f64)
}

/// Transient loss of one scenario, rolled out from `(delta*, 0, 0)` with
/// the training discretisation.
pub fn scenario_loss(
    net: &Network,
    controller: &Controller,
    scenario: &Scenario,
    delta_star: &[f64],
    cost: &CostSpec,
    opts: &LossOptions,
) -> Result<f64> {
    let table = ExoTable::new(net, &scenario.basis, &scenario.dist, opts, cost.horizon)?;
    adjoint::loss_and_grad(net, controller, &scenario.basis, &table, delta_star, cost, opts, false).map(|r| r.0)
}

/// Loss and its exact gradient with respect to `controller.raw_params()`.
///
/// The maximum over time takes the earliest maximiser; PWL kinks take the
/// left slope.
pub fn grad_loss(
    net: &Network,
    controller: &Controller,
    scenario: &Scenario,
    delta_star: &[f64],
    cost: &CostSpec,
    opts: &LossOptions,
) -> Result<(f64, Vec<f64>)> {
    let table = ExoTable::new(net, &scenario.basis, &scenario.dist, opts, cost.horizon)?;
    adjoint::loss_and_grad(net, controller, &scenario.basis, &table, delta_star, cost, opts, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for j in 0..params.len() {
            self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * grad[j];
            self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * grad[j] * grad[j];
            let mh = self.m[j] / b1t;
            let vh = self.v[j] / b2t;
            params[j] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub loss: LossOptions,
    /// Coordinates compared against finite differences before the first update.
    pub grad_check: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 10,
            lr: 1e-3,
            seed: 0,
            loss: LossOptions::default(),
            grad_check: 0,
            checkpoint: None,
            checkpoint_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub param: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
}

/// Optimizer progress saved alongside checkpointed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub adam: Adam,
    pub loss: Vec<f64>,
}

/// A controller file with the optimizer state attached; it loads as a
/// plain controller as well.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(flatten)]
    pub controller: ControllerFile,
    pub training: TrainState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("serializable");
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::parse(format!("checkpoint {}", path.display()), e))
    }

    pub fn controller(&self) -> Result<Controller> {
        Controller::try_from(self.controller.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub version: String,
    pub config: TrainConfig,
    pub cost: CostSpec,
    pub scenario_hash: String,
    /// Average batch loss of each epoch.
    pub loss: Vec<f64>,
    pub grad_check: Vec<GradCheck>,
    pub controller: serde_json::Value,
}

impl TrainReport {
    pub fn final_controller(&self) -> Result<Controller> {
        let file: ControllerFile =
            serde_json::from_value(self.controller.clone()).map_err(|e| Error::parse("train report", e))?;
        Controller::try_from(file)
    }
}

pub fn version_string() -> String {
    format!("swingfreq {}", env!("CARGO_PKG_VERSION"))
}

/// Trains `init` on every scenario in `scenarios` with Adam on raw parameters.
pub fn train(
    net: &Network,
    init: &Controller,
    scenarios: &ScenarioSet,
    delta_star: &[f64],
    cost: &CostSpec,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let state = TrainState {
        epoch: 0,
        adam: Adam::new(init.num_params(), cfg.lr),
        loss: Vec::new(),
    };
    train_from(net, init, state, scenarios, delta_star, cost, cfg)
}

/// Continues training from a saved state up to `cfg.epochs` in total.
///
/// Shuffles depend only on the seed and the epoch number, so resuming gives
/// the same result as an uninterrupted run.
pub fn train_from(
    net: &Network,
    init: &Controller,
    mut state: TrainState,
    scenarios: &ScenarioSet,
    delta_star: &[f64],
    cost: &CostSpec,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if scenarios.is_empty() {
        return Err(Error::Validation("training needs at least one scenario".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Validation("batch size must be at least 1".into()));
    }
    if state.adam.m.len() != init.num_params() {
        return Err(Error::Dimension(format!(
            "optimizer state has {} entries, controller has {} parameters",
            state.adam.m.len(),
            init.num_params()
        )));
    }
    state.adam.lr = cfg.lr;
    let mut controller = init.clone();
    for s in &scenarios.scenarios {
        controller.validate_for(net.n(), &s.basis)?;
    }
    let tables: Vec<ExoTable> = scenarios
        .scenarios
        .par_iter()
        .map(|s| ExoTable::new(net, &s.basis, &s.dist, &cfg.loss, cost.horizon))
        .collect::<Result<_>>()?;
    let eval = |c: &Controller, j: usize, want_grad: bool| {
        let s = &scenarios.scenarios[j];
        adjoint::loss_and_grad(net, c, &s.basis, &tables[j], delta_star, cost, &cfg.loss, want_grad)
    };

    let mut grad_check = Vec::new();
    if cfg.grad_check > 0 && state.epoch == 0 && cfg.epochs > 0 {
        let (_, g) = eval(&controller, 0, true)?;
        let theta = controller.raw_params();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
        for _ in 0..cfg.grad_check.min(theta.len()) {
            let j = rng.random_range(0..theta.len());
            let fd = central_difference(&controller, &theta, j, 1e-5, |c| eval(c, 0, false).map(|r| r.0))?;
            grad_check.push(GradCheck {
                param: j,
                adjoint: g[j],
                finite_difference: fd,
                rel_error: (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-12),
            });
        }
    }

    let count = scenarios.len();
    let dim = controller.num_params();
    let mut theta = controller.raw_params();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..count).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, Vec<f64>)>> =
                batch.par_iter().map(|&j| eval(&controller, j, true)).collect();
            let mut loss = 0.0;
            let mut grad = vec![0.0; dim];
            for r in results {
                let (l, g) = r.map_err(|e| match e {
                    Error::BlowUp { .. } | Error::NonFiniteGradient { .. } => Error::Divergence {
                        epoch,
                        last_good: Box::new(controller.clone()),
                    },
                    e => e,
                })?;
                loss += l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !(loss.is_finite() && grad.iter().all(|g| g.is_finite())) {
                return Err(Error::Divergence {
                    epoch,
                    last_good: Box::new(controller),
                });
            }
            epoch_loss += loss * scale;
            batches += 1;
            state.adam.step(&mut theta, &grad);
            controller.set_raw_params(&theta)?;
        }
        state.loss.push(epoch_loss / batches as f64);
        state.epoch += 1;
        if let Some(path) = &cfg.checkpoint {
            if state.epoch % cfg.checkpoint_every.max(1) == 0 || state.epoch == cfg.epochs {
                Checkpoint {
                    controller: ControllerFile::from(&controller),
                    training: state.clone(),
                }
                .save(path)?;
            }
        }
    }

    Ok(TrainReport {
        version: version_string(),
        config: cfg.clone(),
        cost: cost.clone(),
        scenario_hash: scenarios.hash(),
        loss: state.loss,
        grad_check,
        controller: serde_json::to_value(ControllerFile::from(&controller)).expect("serializable"),
    })
}

/// Central difference of `f` along raw parameter `j`.
pub fn central_difference(
    controller: &Controller,
    theta: &[f64],
    j: usize,
    h: f64,
    f: impl Fn(&Controller) -> Result<f64>,
) -> Result<f64> {
    let mut c = controller.clone();
    let mut t = theta.to_vec();
    t[j] = theta[j] + h;
    c.set_raw_params(&t)?;
    let up = f(&c)?;
    t[j] = theta[j] - h;
    c.set_raw_params(&t)?;
    let down = f(&c)?;
    Ok((up - down) / (2.0 * h))
}

/// Settings for held-out evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Time the scenario steps switch on; the system idles at equilibrium before.
    pub onset: f64,
    pub dt: f64,
    pub integrator: crate::dynamics::Integrator,
    /// Restoration window relative to the onset, s.
    pub window: (f64, f64),
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            onset: 2.0,
            dt: 0.01,
            integrator: crate::dynamics::Integrator::Rk4,
            window: (10.0, 15.0),
        }
    }
}

impl EvalConfig {
    pub fn horizon(&self) -> f64 {
        self.onset + self.window.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub index: usize,
    /// Transient cost over `[onset, onset + T]`.
    pub transient: f64,
    /// Mean `|omega|` over the restoration window.
    pub restoration: f64,
    /// Largest `|omega_i|` after the onset.
    pub nadir: f64,
    /// Largest `|omega_i|` over the last two seconds of the window.
    pub residual: f64,
}

/// Rolls out one scenario with its steps moved to `cfg.onset`.
pub fn evaluation_rollout(
    net: &Network,
    controller: &Controller,
    scenario: &Scenario,
    delta_star: &[f64],
    cfg: &EvalConfig,
) -> Result<Trajectory> {
    let mut dist = scenario.dist.clone();
    dist.steps.iter_mut().for_each(|s| s.onset = cfg.onset);
    let eq = crate::netmodel::EquilibriumAngles {
        delta_star: delta_star.to_vec(),
        residual: 0.0,
        iterations: 0,
    };
    let x0 = SystemState::at_equilibrium(&eq, controller, &scenario.basis);
    let rc = RolloutConfig::new(cfg.horizon(), cfg.dt).with_integrator(cfg.integrator);
    rollout(net, controller, &scenario.basis, &dist, &rc, &x0)
}

pub fn scenario_metrics(traj: &Trajectory, cost: &CostSpec, cfg: &EvalConfig, index: usize) -> Result<ScenarioMetrics> {
    let end = cfg.onset + cfg.window.1;
    Ok(ScenarioMetrics {
        index,
        transient: transient_loss_from(traj, cost, cfg.onset)?,
        restoration: restoration_cost(traj, (cfg.onset + cfg.window.0, end))?,
        nadir: traj.peak_deviation(cfg.onset, end),
        residual: traj.peak_deviation(end - 2.0, end),
    })
}

/// Metrics for every scenario, in scenario order.
pub fn evaluate(
    net: &Network,
    controller: &Controller,
    scenarios: &ScenarioSet,
    delta_star: &[f64],
    cost: &CostSpec,
    cfg: &EvalConfig,
) -> Result<Vec<ScenarioMetrics>> {
    scenarios
        .scenarios
        .par_iter()
        .map(|s| {
            let traj = evaluation_rollout(net, controller, s, delta_star, cfg)?;
            scenario_metrics(&traj, cost, cfg, s.index)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{FeatureSet, MonotonePwlParams};
    use crate::dynamics::{BasisSignal, Disturbance, StepChange};
    use crate::netmodel::{bundled, solve_equilibrium, LoadOptions};

    fn single_bus() -> Network {
        Network::new(vec![1.0], vec![1.0], vec![0.0], vec![], LoadOptions::default()).unwrap()
    }

    fn scenario(basis: BasisSignal, dist: Disturbance) -> Scenario {
        Scenario {
            index: 0,
            split: Split::Train,
            dist,
            basis,
        }
    }

    fn constant_trajectory(omega: f64, u: f64, horizon: f64) -> Trajectory {
        let net = single_bus();
        let basis = BasisSignal::zero(1);
        // a linear controller with zero gain keeps omega fixed at 0
        let c = Controller::linear(vec![0.0]);
        let x0 = SystemState {
            delta: vec![0.0],
            omega: vec![0.0],
            a_hat: vec![vec![]],
        };
        let mut t = rollout(&net, &c, &basis, &Disturbance::none(), &RolloutConfig::new(horizon, 0.01), &x0).unwrap();
        t.fill_for_test(omega, u);
        t
    }

    #[test]
    fn transient_loss_examples() {
        let cost = CostSpec::new(0.1, vec![0.05], 4.0).unwrap();
        assert_eq!(transient_loss(&constant_trajectory(0.0, 0.0, 4.0), &cost).unwrap(), 0.0);
        assert!((transient_loss(&constant_trajectory(0.1, 0.0, 4.0), &cost).unwrap() - 0.1).abs() < 1e-15);
        let l = transient_loss(&constant_trajectory(0.0, 1.0, 4.0), &cost).unwrap();
        assert!((l - 0.02).abs() < 1e-12, "{l}");
    }

    #[test]
    fn restoration_examples() {
        assert_eq!(restoration_cost(&constant_trajectory(0.0, 0.0, 16.0), (10.0, 15.0)).unwrap(), 0.0);
        let r = restoration_cost(&constant_trajectory(0.01, 0.0, 16.0), (10.0, 15.0)).unwrap();
        assert!((r - 0.01).abs() < 1e-15);
        assert!(restoration_cost(&constant_trajectory(0.0, 0.0, 12.0), (10.0, 15.0)).is_err());
    }

    #[test]
    fn droop_leaves_static_offset() {
        let net = bundled::two_bus();
        let eq = solve_equilibrium(&net).unwrap();
        let c = Controller::droop(&[2.0, 3.0]).unwrap();
        let s = scenario(BasisSignal::zero(2), Disturbance::step(0, 0.5, 0.0));
        let cfg = EvalConfig {
            onset: 0.0,
            window: (30.0, 35.0),
            ..EvalConfig::default()
        };
        let traj = evaluation_rollout(&net, &c, &s, &eq.delta_star, &cfg).unwrap();
        let r = restoration_cost(&traj, (10.0, 15.0)).unwrap();
        assert!(r > 0.0);
        let r = restoration_cost(&traj, cfg.window).unwrap();
        // static balance: omega = step / (sum D + sum phi)
        let expect = 0.5 / (1.0 + 1.0 + 2.0 + 3.0);
        assert!((r - expect).abs() < 1e-6, "{r} vs {expect}");
    }

    #[test]
    fn training_forward_matches_rollout() {
        let net = bundled::ring3();
        let eq = solve_equilibrium(&net).unwrap();
        let basis = crate::dynamics::make_sinusoid_basis(3, 8);
        let c = Controller::pwl(MonotonePwlParams::uniform(3, 1.3, 20, (-1.0, 1.0)).unwrap())
            .with_adaptation(&basis, FeatureSet::Basis, 0.7)
            .unwrap();
        let dist = Disturbance {
            steps: vec![StepChange { bus: 2, magnitude: -0.6, onset: 0.0 }],
            noise: 0.02,
            seed: 5,
        };
        let cost = CostSpec::sample(3, 1);
        for integrator in [crate::dynamics::Integrator::Rk4, crate::dynamics::Integrator::Euler] {
            let opts = LossOptions {
                integrator,
                ..LossOptions::default()
            };
            let s = scenario(basis.clone(), dist.clone());
            let l = scenario_loss(&net, &c, &s, &eq.delta_star, &cost, &opts).unwrap();
            let x0 = SystemState::at_equilibrium(&eq, &c, &basis);
            let rc = RolloutConfig::new(cost.horizon, 0.01).with_integrator(integrator);
            let traj = rollout(&net, &c, &basis, &dist, &rc, &x0).unwrap();
            let r = transient_loss(&traj, &cost).unwrap();
            assert!((l - r).abs() < 1e-12, "{integrator:?}: {l} vs {r}");
        }
    }

    fn check_gradient(net: &Network, c: &Controller, s: &Scenario, opts: &LossOptions) {
        let eq = solve_equilibrium(net).unwrap();
        let cost = CostSpec::sample(net.n(), 2);
        let (_, g) = grad_loss(net, c, s, &eq.delta_star, &cost, opts).unwrap();
        let theta = c.raw_params();
        for j in 0..theta.len() {
            let fd = central_difference(c, &theta, j, 1e-4, |c| scenario_loss(net, c, s, &eq.delta_star, &cost, opts))
                .unwrap();
            let scale = g[j].abs().max(fd.abs()).max(1e-6);
            assert!((g[j] - fd).abs() / scale < 1e-4, "param {j}: adjoint {} fd {}", g[j], fd);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = bundled::ring3();
        let basis = crate::dynamics::make_sinusoid_basis(3, 8);
        let dist = Disturbance {
            steps: vec![StepChange { bus: 1, magnitude: 0.7, onset: 0.0 }],
            noise: 0.0,
            seed: 0,
        };
        let s = scenario(basis.clone(), dist);
        let droop = Controller::droop(&[0.8, 1.5, 2.0])
            .unwrap()
            .with_adaptation(&basis, FeatureSet::Basis, 0.5)
            .unwrap();
        let integral = Controller::droop(&[0.8, 1.5, 2.0])
            .unwrap()
            .with_adaptation(&basis, FeatureSet::Constant, 0.5)
            .unwrap();
        for integrator in [crate::dynamics::Integrator::Rk4, crate::dynamics::Integrator::Euler] {
            for smooth_max in [false, true] {
                let opts = LossOptions {
                    integrator,
                    dt: 0.01,
                    smooth_max,
                };
                check_gradient(&net, &droop, &s, &opts);
                check_gradient(&net, &integral, &s, &opts);
            }
        }
        let mut sat = Controller::droop(&[0.8, 1.5, 2.0]).unwrap();
        sat.saturation = Some(0.3);
        check_gradient(&net, &sat, &s, &LossOptions::default());
    }

    #[test]
    fn droop_gain_gradient_is_negative_when_small() {
        let net = single_bus();
        let s = scenario(BasisSignal::zero(1), Disturbance::step(0, 0.5, 0.0));
        let c = Controller::droop(&[0.05]).unwrap();
        let cost = CostSpec::new(0.1, vec![0.05], 4.0).unwrap();
        let (_, g) = grad_loss(&net, &c, &s, &[0.0], &cost, &LossOptions::default()).unwrap();
        assert!(g[0] < 0.0);
    }

    #[test]
    fn adam_moves_against_the_gradient() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[2.0, -3.0]);
        // first bias-corrected step has magnitude lr
        assert!((p[0] - 0.9).abs() < 1e-9 && (p[1] + 0.9).abs() < 1e-9);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let net = bundled::two_bus();
        let eq = solve_equilibrium(&net).unwrap();
        let set = make_scenarios(2, 3, 1, 0.0);
        let c = Controller::droop(&[1.0, 2.0]).unwrap().with_adaptation(&set.scenarios[0].basis, FeatureSet::Basis, 1.0).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let r = train(&net, &c, &set, &eq.delta_star, &CostSpec::sample(2, 0), &cfg).unwrap();
        assert!(r.loss.is_empty());
        assert_eq!(r.final_controller().unwrap(), c);
    }

    #[test]
    fn resume_reproduces_uninterrupted_run() {
        let net = bundled::two_bus();
        let eq = solve_equilibrium(&net).unwrap();
        let set = make_scenarios(2, 4, 3, 0.0);
        let c = Controller::droop(&[1.0, 2.0]).unwrap();
        let cost = CostSpec::sample(2, 0);
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("ck.json");
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 3,
            lr: 0.05,
            seed: 9,
            checkpoint: Some(ck.clone()),
            checkpoint_every: 3,
            ..TrainConfig::default()
        };
        let full = train(&net, &c, &set, &eq.delta_star, &cost, &cfg).unwrap();
        assert_eq!(full.loss.len(), 6);

        let half = TrainConfig { epochs: 3, ..cfg.clone() };
        train(&net, &c, &set, &eq.delta_star, &cost, &half).unwrap();
        let saved = Checkpoint::load(&ck).unwrap();
        assert_eq!(saved.training.epoch, 3);
        // the checkpoint also reads as a plain controller file
        let plain = Controller::load(&ck).unwrap();
        assert_eq!(plain, saved.controller().unwrap());
        let resumed = train_from(&net, &plain, saved.training, &set, &eq.delta_star, &cost, &cfg).unwrap();
        assert_eq!(resumed.loss, full.loss);
        assert_eq!(resumed.controller, full.controller);
    }
}
