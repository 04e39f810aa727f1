//! Command-line front end: `simulate`, `train`, `evaluate`, `certify`.
//!
//! Every command is deterministic given `--seed`. Outputs go to `--out`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::controllers::{Controller, FeatureSet, MonotonePwlParams};
use crate::dynamics::{make_sinusoid_basis, rollout, BasisSignal, Disturbance, Integrator, RolloutConfig, StepChange, SystemState};
use crate::error::{Error, Result};
use crate::lyapunov::{certify, CertifyConfig, DEFAULT_SAMPLES};
use crate::netmodel::{bundled, load_case, solve_equilibrium, LoadOptions, Network};
use crate::training::{
    evaluate, restoration_cost, train, train_from, transient_loss_from, Checkpoint, CostSpec, EvalConfig, LossOptions,
    ScenarioSet, Split, TrainConfig, TrainReport,
};

#[derive(Debug, Parser)]
#[command(name = "swingfreq", version, about = "Adaptive frequency control workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out one scenario and write the trajectory CSV with a JSON sidecar.
    Simulate(SimulateArgs),
    /// Train a controller on seeded scenarios; writes a checkpoint and report.
    Train(TrainArgs),
    /// Compare controllers on a fresh seeded test set.
    Evaluate(EvaluateArgs),
    /// Check the energy-function decrease over a no-noise battery.
    Certify(CertifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Case JSON file, or `bundled:<name>` (two_bus, ring3, ne39).
    #[arg(long, default_value = "bundled:ne39")]
    pub case: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Integration step, s.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Per-step uniform noise half-width, p.u.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, conflicts_with = "rk4")]
    pub euler: bool,
    #[arg(long)]
    pub rk4: bool,
    /// Clip every control action to `[-UMAX, UMAX]`.
    #[arg(long, value_name = "UMAX")]
    pub saturate: Option<f64>,
    /// Initial slope of untrained base controllers.
    #[arg(long, default_value_t = InitOptions::default().slope)]
    pub init_slope: f64,
    /// Initial adaptation gain of untrained adaptive controllers.
    #[arg(long, default_value_t = InitOptions::default().adaptation_gain)]
    pub init_adaptation: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Controller JSON, or one of droop, pwl, adaptive-pwl, integral-pwl.
    #[arg(long, default_value = "droop")]
    pub controller: String,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Total simulated time, s.
    #[arg(long, default_value_t = 15.0)]
    pub horizon: f64,
    /// Step change `BUS:MAG` with a 1-based bus position; repeatable.
    #[arg(long = "step", value_name = "BUS:MAG")]
    pub steps: Vec<StepArg>,
    /// Onset of the step changes, s.
    #[arg(long, default_value_t = 2.0)]
    pub onset: f64,
    /// Keep the load sinusoid frequencies but zero every load coefficient.
    #[arg(long)]
    pub flat_load: bool,
    /// No steps, no load variation, no noise.
    #[arg(long)]
    pub no_disturbance: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "adaptive-pwl")]
    pub controller: String,
    /// Resume from this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of training scenarios.
    #[arg(long, default_value_t = 50)]
    pub scenarios: usize,
    /// Total number of epochs, counting any resumed ones.
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Transient loss horizon, s.
    #[arg(long, default_value_t = CostSpec::HORIZON)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    #[arg(long)]
    pub smooth_max: bool,
    /// Train on noisy scenarios as well (noise is evaluation-only otherwise).
    #[arg(long)]
    pub train_noise: bool,
    /// Coordinates compared against finite differences before training.
    #[arg(long, default_value_t = 5)]
    pub grad_check: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Controller JSON or type; repeatable.
    #[arg(long)]
    pub controller: Vec<String>,
    /// Checkpoint or controller JSON; repeatable.
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    /// Number of test scenarios.
    #[arg(long, default_value_t = 50)]
    pub scenarios: usize,
    /// Transient cost horizon after the onset, s.
    #[arg(long, default_value_t = CostSpec::HORIZON)]
    pub horizon: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub controller: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Size of the no-noise battery.
    #[arg(long, default_value_t = 100)]
    pub scenarios: usize,
    /// Length of each battery trajectory, s.
    #[arg(long, default_value_t = 15.0)]
    pub horizon: f64,
    /// Latin-hypercube samples for the curvature bounds.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
}

/// `BUS:MAG` with a 1-based bus position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepArg {
    pub bus: usize,
    pub magnitude: f64,
}

impl FromStr for StepArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (b, m) = s.split_once(':').ok_or_else(|| format!("expected BUS:MAG, got `{s}`"))?;
        let bus: usize = b.trim().parse().map_err(|e| format!("bus `{b}`: {e}"))?;
        if bus == 0 {
            return Err("bus positions start at 1".into());
        }
        let magnitude = m.trim().parse().map_err(|e| format!("magnitude `{m}`: {e}"))?;
        Ok(Self { bus, magnitude })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Droop,
    Pwl,
    AdaptivePwl,
    IntegralPwl,
}

/// Starting point of untrained controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitOptions {
    pub slope: f64,
    pub adaptation_gain: f64,
    pub segments: usize,
    pub range: (f64, f64),
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            slope: 1.0,
            adaptation_gain: 300.0,
            segments: MonotonePwlParams::DEFAULT_SEGMENTS,
            range: MonotonePwlParams::DEFAULT_RANGE,
        }
    }
}

impl ControllerKind {
    pub fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, true).ok()
    }

    /// Untrained controller sized for `basis`.
    pub fn build(self, basis: &BasisSignal, init: &InitOptions) -> Result<Controller> {
        let n = basis.n();
        let pwl = || MonotonePwlParams::uniform(n, init.slope, init.segments, init.range).map(Controller::pwl);
        match self {
            ControllerKind::Droop => Controller::droop(&vec![init.slope; n]),
            ControllerKind::Pwl => pwl(),
            ControllerKind::AdaptivePwl => pwl()?.with_adaptation(basis, FeatureSet::Basis, init.adaptation_gain),
            ControllerKind::IntegralPwl => pwl()?.with_adaptation(basis, FeatureSet::Constant, init.adaptation_gain),
        }
    }
}

/// Where a controller comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    Inline(ControllerKind),
    File(PathBuf),
}

impl ControllerSpec {
    pub fn parse(s: &str) -> Self {
        match ControllerKind::parse(s) {
            Some(k) => ControllerSpec::Inline(k),
            None => ControllerSpec::File(PathBuf::from(s)),
        }
    }

    /// Short label for tables: the type name or the file stem.
    pub fn label(&self) -> String {
        match self {
            ControllerSpec::Inline(k) => k.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string()),
            ControllerSpec::File(p) => p
                .file_stem()
                .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()),
        }
    }

    pub fn resolve(&self, basis: &BasisSignal, init: &InitOptions) -> Result<Controller> {
        match self {
            ControllerSpec::Inline(k) => k.build(basis, init),
            ControllerSpec::File(p) => Controller::load(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaseSource {
    Bundled(String),
    File(PathBuf),
}

impl CaseSource {
    pub fn parse(s: &str) -> Self {
        match s.strip_prefix("bundled:") {
            Some(name) => CaseSource::Bundled(name.to_string()),
            None => CaseSource::File(PathBuf::from(s)),
        }
    }

    pub fn load(&self) -> Result<Network> {
        match self {
            CaseSource::Bundled(name) => bundled::by_name(name)
                .ok_or_else(|| Error::Validation(format!("no bundled case named `{name}` (two_bus, ring3, ne39)"))),
            CaseSource::File(p) => load_case(p, LoadOptions::default()),
        }
    }
}

/// Validated settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: CaseSource,
    pub controllers: Vec<ControllerSpec>,
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub scenarios: usize,
    pub dt: f64,
    pub horizon: f64,
    pub noise: f64,
    pub out: PathBuf,
    pub integrator: Integrator,
    pub saturation: Option<f64>,
    pub init: InitOptions,
}

fn missing(path: &Path) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
    }
}

impl RunConfig {
    pub fn new(
        common: &CommonArgs,
        controllers: Vec<ControllerSpec>,
        checkpoint: Option<PathBuf>,
        scenarios: usize,
        default_dt: f64,
        horizon: f64,
    ) -> Result<Self> {
        let cfg = Self {
            case: CaseSource::parse(&common.case),
            controllers,
            checkpoint,
            seed: common.seed,
            scenarios,
            dt: common.dt.unwrap_or(default_dt),
            horizon,
            noise: common.noise,
            out: common.out.clone(),
            integrator: if common.euler { Integrator::Euler } else { Integrator::Rk4 },
            saturation: common.saturate,
            init: InitOptions {
                slope: common.init_slope,
                adaptation_gain: common.init_adaptation,
                ..InitOptions::default()
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the invariants: referenced files exist, steps and horizons positive.
    pub fn validate(&self) -> Result<()> {
        if let CaseSource::File(p) = &self.case {
            if !p.is_file() {
                return Err(missing(p));
            }
        }
        for c in &self.controllers {
            if let ControllerSpec::File(p) = c {
                if !p.is_file() {
                    return Err(missing(p));
                }
            }
        }
        if let Some(p) = &self.checkpoint {
            if !p.is_file() {
                return Err(missing(p));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("--dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Validation(format!("--horizon must be positive, got {}", self.horizon)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Validation(format!("--noise must be >= 0, got {}", self.noise)));
        }
        if let Some(u) = self.saturation {
            if !(u > 0.0) {
                return Err(Error::Validation(format!("--saturate must be positive, got {u}")));
            }
        }
        if !(self.init.slope > 0.0 && self.init.adaptation_gain > 0.0) {
            return Err(Error::Validation("initial slope and adaptation gain must be positive".into()));
        }
        Ok(())
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|source| Error::Io {
            path: self.out.clone(),
            source,
        })
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn apply_saturation(&self, mut c: Controller) -> Controller {
        if self.saturation.is_some() {
            c.saturation = self.saturation;
        }
        c
    }
}

/// Per-network action-cost coefficients used by every command.
pub fn cost_spec(n: usize, horizon: f64) -> Result<CostSpec> {
    let c = CostSpec::sample(n, COST_SEED);
    CostSpec::new(c.gamma, c.c, horizon)
}

/// Seed of the per-bus cost coefficients; fixed so train and test agree.
pub const COST_SEED: u64 = 7;

/// Evaluation onset, s.
pub const ONSET: f64 = 2.0;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| ()),
        Command::Certify(a) => cmd_certify(&a).map(|_| ()),
    }
}

/// Summary printed by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub rows: usize,
    pub nadir: f64,
    pub transient: Option<f64>,
    pub restoration: Option<f64>,
}

fn single_controller(specs: &[ControllerSpec], checkpoint: &Option<PathBuf>) -> Result<ControllerSpec> {
    match (specs.first(), checkpoint) {
        (_, Some(p)) => Ok(ControllerSpec::File(p.clone())),
        (Some(s), None) => Ok(s.clone()),
        (None, None) => Err(Error::Validation("pass --controller or --checkpoint".into())),
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<SimulationSummary> {
    let cfg = RunConfig::new(
        &a.common,
        vec![ControllerSpec::parse(&a.controller)],
        a.checkpoint.clone(),
        1,
        0.01,
        a.horizon,
    )?;
    let net = cfg.case.load()?;
    let n = net.n();
    let eq = solve_equilibrium(&net)?;

    let (basis, dist) = if a.no_disturbance {
        (make_sinusoid_basis(n, cfg.seed).restricted(false, false), Disturbance::none())
    } else if a.steps.is_empty() {
        let s = crate::training::make_scenarios(n, 1, cfg.seed, cfg.noise)
            .with_onset(a.onset)
            .scenarios
            .remove(0);
        (s.basis, s.dist)
    } else {
        let steps = a
            .steps
            .iter()
            .map(|s| StepChange {
                bus: s.bus - 1,
                magnitude: s.magnitude,
                onset: a.onset,
            })
            .collect();
        let dist = Disturbance {
            steps,
            noise: cfg.noise,
            seed: cfg.seed,
        };
        (make_sinusoid_basis(n, cfg.seed), dist)
    };
    let basis = if a.flat_load { basis.restricted(false, false) } else { basis };
    dist.validate(n, f64::INFINITY)?;

    let spec = single_controller(&cfg.controllers, &cfg.checkpoint)?;
    let controller = cfg.apply_saturation(spec.resolve(&basis, &cfg.init)?);
    controller.validate_for(n, &basis)?;
    let x0 = SystemState::at_equilibrium(&eq, &controller, &basis);
    let rc = RolloutConfig::new(cfg.horizon, cfg.dt).with_integrator(cfg.integrator);
    let traj = rollout(&net, &controller, &basis, &dist, &rc, &x0)?;

    cfg.ensure_out()?;
    traj.write(&cfg.out, "trajectory")?;

    let onset = if dist.steps.is_empty() { 0.0 } else { a.onset };
    let end = traj.times().last().copied().unwrap_or(0.0);
    let cost = cost_spec(n, CostSpec::HORIZON)?;
    let summary = SimulationSummary {
        rows: traj.len(),
        nadir: traj.peak_deviation(onset, end),
        transient: transient_loss_from(&traj, &cost, onset).ok(),
        restoration: restoration_cost(&traj, (onset + 10.0, onset + 15.0)).ok(),
    };
    let show = |x: Option<f64>| x.map_or_else(|| "n/a (horizon too short)".to_string(), |v| format!("{v:.6e}"));
    println!("controller   {}", controller.name());
    println!("rows         {}", summary.rows);
    println!("nadir        {:.6e} rad/s", summary.nadir);
    println!("transient    {}", show(summary.transient));
    println!("restoration  {}", show(summary.restoration));
    println!("wrote {}", cfg.out.join("trajectory.csv").display());
    Ok(summary)
}

pub fn cmd_train(a: &TrainArgs) -> Result<TrainReport> {
    let cfg = RunConfig::new(
        &a.common,
        vec![ControllerSpec::parse(&a.controller)],
        a.checkpoint.clone(),
        a.scenarios,
        0.01,
        a.horizon,
    )?;
    if cfg.scenarios == 0 {
        return Err(Error::Validation("--scenarios must be at least 1".into()));
    }
    let net = cfg.case.load()?;
    let n = net.n();
    let eq = solve_equilibrium(&net)?;
    let noise = if a.train_noise { cfg.noise } else { 0.0 };
    let scenarios = ScenarioSet::train_test(n, cfg.scenarios, 0, cfg.seed, noise).split(Split::Train);
    let cost = cost_spec(n, cfg.horizon)?;
    cfg.ensure_out()?;
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        seed: cfg.seed,
        loss: LossOptions {
            integrator: cfg.integrator,
            dt: cfg.dt,
            smooth_max: a.smooth_max,
        },
        grad_check: a.grad_check,
        checkpoint: Some(cfg.out.join("checkpoint.json")),
        checkpoint_every: 10,
    };

    let result = match &cfg.checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let init = cfg.apply_saturation(ck.controller()?);
            train_from(&net, &init, ck.training, &scenarios, &eq.delta_star, &cost, &tc)
        }
        None => {
            let spec = &cfg.controllers[0];
            let init = cfg.apply_saturation(spec.resolve(&scenarios.scenarios[0].basis, &cfg.init)?);
            train(&net, &init, &scenarios, &eq.delta_star, &cost, &tc)
        }
    };
    let report = match result {
        Ok(r) => r,
        Err(Error::Divergence { epoch, last_good }) => {
            let path = cfg.out.join("last_good.json");
            last_good.save(&path)?;
            eprintln!("last good parameters written to {}", path.display());
            return Err(Error::Divergence { epoch, last_good });
        }
        Err(e) => return Err(e),
    };

    let text = serde_json::to_string_pretty(&report).expect("serializable");
    cfg.write("train_report.json", &text)?;
    let controller = report.final_controller()?;
    controller.save(cfg.out.join("controller.json"))?;
    if let (Some(first), Some(last)) = (report.loss.first(), report.loss.last()) {
        println!("{}: {} epochs, loss {first:.6} -> {last:.6}", controller.name(), report.loss.len());
    }
    for g in &report.grad_check {
        println!(
            "grad check param {:>4}: adjoint {:+.6e} fd {:+.6e} rel {:.2e}",
            g.param, g.adjoint, g.finite_difference, g.rel_error
        );
    }
    println!("wrote {}", cfg.out.display());
    Ok(report)
}

/// One controller's averages over the shared test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub controller: String,
    pub scenarios: usize,
    pub scenario_hash: String,
    pub transient_mean: f64,
    pub transient_se: f64,
    pub restoration_mean: f64,
    pub restoration_se: f64,
    /// Ratios to the first row; only present when there is more than one row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restoration_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
}

/// Mean and standard error of the mean.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / k;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let ratios = self.rows.len() > 1;
        let mut s = String::from(
            "label,controller,scenarios,scenario_hash,transient_mean,transient_se,restoration_mean,restoration_se",
        );
        if ratios {
            s.push_str(",transient_ratio,restoration_ratio");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.label,
                r.controller,
                r.scenarios,
                r.scenario_hash,
                r.transient_mean,
                r.transient_se,
                r.restoration_mean,
                r.restoration_se
            );
            if ratios {
                let f = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
                let _ = write!(s, ",{},{}", f(r.transient_ratio), f(r.restoration_ratio));
            }
            s.push('\n');
        }
        s
    }
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<ComparisonTable> {
    let mut specs: Vec<ControllerSpec> = a.controller.iter().map(|s| ControllerSpec::parse(s)).collect();
    specs.extend(a.checkpoint.iter().cloned().map(ControllerSpec::File));
    let cfg = RunConfig::new(&a.common, specs, None, a.scenarios, 0.01, a.horizon)?;
    if cfg.controllers.is_empty() {
        return Err(Error::Validation("pass at least one --controller or --checkpoint".into()));
    }
    if cfg.scenarios == 0 {
        return Err(Error::Validation("--scenarios must be at least 1".into()));
    }
    let net = cfg.case.load()?;
    let n = net.n();
    let eq = solve_equilibrium(&net)?;
    let scenarios = ScenarioSet::train_test(n, 0, cfg.scenarios, cfg.seed, cfg.noise).split(Split::Test);
    let hash = scenarios.hash();
    let cost = cost_spec(n, cfg.horizon)?;
    let ec = EvalConfig {
        onset: ONSET,
        dt: cfg.dt,
        integrator: cfg.integrator,
        window: (10.0, 15.0),
    };

    let mut rows = Vec::new();
    for spec in &cfg.controllers {
        let controller = cfg.apply_saturation(spec.resolve(&scenarios.scenarios[0].basis, &cfg.init)?);
        controller.validate_for(n, &scenarios.scenarios[0].basis).map_err(|e| {
            Error::Dimension(format!("{} does not fit the {}-bus case: {e}", spec.label(), n))
        })?;
        let metrics = evaluate(&net, &controller, &scenarios, &eq.delta_star, &cost, &ec)?;
        let tr: Vec<f64> = metrics.iter().map(|m| m.transient).collect();
        let re: Vec<f64> = metrics.iter().map(|m| m.restoration).collect();
        let (transient_mean, transient_se) = mean_se(&tr);
        let (restoration_mean, restoration_se) = mean_se(&re);
        rows.push(ComparisonRow {
            label: spec.label(),
            controller: controller.name(),
            scenarios: metrics.len(),
            scenario_hash: hash.clone(),
            transient_mean,
            transient_se,
            restoration_mean,
            restoration_se,
            transient_ratio: None,
            restoration_ratio: None,
        });
    }
    if rows.len() > 1 {
        let (t0, r0) = (rows[0].transient_mean, rows[0].restoration_mean);
        for r in &mut rows {
            r.transient_ratio = Some(r.transient_mean / t0);
            r.restoration_ratio = Some(r.restoration_mean / r0);
        }
    }
    let table = ComparisonTable { seed: cfg.seed, rows };

    cfg.ensure_out()?;
    cfg.write("comparison.csv", &table.to_csv())?;
    cfg.write("comparison.json", &serde_json::to_string_pretty(&table).expect("serializable"))?;
    println!(
        "{:<20} {:>12} {:>12} {:>12} {:>12}",
        "controller", "transient", "+-", "restoration", "+-"
    );
    for r in &table.rows {
        println!(
            "{:<20} {:>12.5e} {:>12.2e} {:>12.5e} {:>12.2e}",
            r.label, r.transient_mean, r.transient_se, r.restoration_mean, r.restoration_se
        );
    }
    println!("{} scenarios, hash {}", scenarios.len(), hash);
    Ok(table)
}

pub fn cmd_certify(a: &CertifyArgs) -> Result<crate::lyapunov::Certificate> {
    let specs = a.controller.iter().map(|s| ControllerSpec::parse(s)).collect();
    let cfg = RunConfig::new(&a.common, specs, a.checkpoint.clone(), a.scenarios, 0.005, a.horizon)?;
    if let Some(u) = cfg.saturation {
        return Err(Error::CertificationRefused(format!(
            "--saturate {u} puts the controller outside the monotone class the certificate covers"
        )));
    }
    if cfg.noise != 0.0 {
        return Err(Error::CertificationRefused("certificates are issued for noise-free dynamics only".into()));
    }
    let net = cfg.case.load()?;
    let n = net.n();
    let eq = solve_equilibrium(&net)?;
    let spec = single_controller(&cfg.controllers, &cfg.checkpoint)?;
    let controller = spec.resolve(&make_sinusoid_basis(n, cfg.seed), &cfg.init)?;
    if controller.n() != n {
        return Err(Error::Dimension(format!(
            "controller has {} buses, case has {n}",
            controller.n()
        )));
    }
    let cc = CertifyConfig {
        scenarios: cfg.scenarios,
        seed: cfg.seed,
        dt: cfg.dt,
        horizon: cfg.horizon,
        samples: a.samples,
        ..CertifyConfig::default()
    };
    let cert = certify(&net, &controller, &eq.delta_star, &cc)?;
    cfg.ensure_out()?;
    let path = cfg.write("certificate.json", &serde_json::to_string_pretty(&cert).expect("serializable"))?;
    println!("gamma1 {:.6e} gamma2 {:.6e}", cert.gamma1, cert.gamma2);
    println!("beta1 {:.6e} beta2 {:.6e}", cert.beta1, cert.beta2);
    println!("roa r {:.6e} rho {:.6e}", cert.roa.r, cert.roa.rho);
    println!(
        "worst margin {:.6e} at t = {:.3} s over {} scenarios, {} violations",
        cert.worst_margin, cert.worst_time, cert.scenarios, cert.violations
    );
    println!("wrote {}", path.display());
    if !cert.pass {
        let at = cert.first_violation.map_or_else(String::new, |v| {
            format!(" first violation in scenario {} at record {} (t = {:.3} s)", v.scenario, v.index, v.time)
        });
        return Err(Error::CertificateFailed(format!("{} violations;{at}", cert.violations)));
    }
    println!("pass");
    Ok(cert)
}
