//! Energy function, its quadratic bounds, and numerical certificates.
//!
//! ```text
//! V = 1/2 sum_i M_i omega_i^2 + W_p(delta) + 1/2 sum_i (a_hat_i - a_i)^T A_i^{-1} (a_hat_i - a_i)
//! ```
//!
//! `W_p` is the Bregman distance of the potential `S` at the equilibrium
//! angles. The true coefficients `a_i` are only known to the simulator, so
//! everything here is instrumentation and never feeds back into control.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{AdaptiveParams, Controller, FeatureSet};
use crate::dynamics::{rollout, BasisSignal, Disturbance, RolloutConfig, StepChange, SystemState, Trajectory};
use crate::error::{Error, Result};
use crate::netmodel::{potential_s, grad_s, Network};

/// Largest edge angle difference of the certified region, rad.
pub const DEFAULT_THETA_MAX: f64 = std::f64::consts::FRAC_PI_2 - 0.01;

/// Default number of Latin-hypercube samples for the curvature bounds.
pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEval {
    pub value: f64,
    pub wp: f64,
    pub kinetic: f64,
    pub est_err: f64,
}

/// Bregman distance `S(delta) - S(delta*) - grad S(delta*)^T (delta - delta*)`,
/// summed line by line in cosine form.
pub fn eval_wp(net: &Network, delta: &[f64], delta_star: &[f64]) -> f64 {
    net.lines()
        .iter()
        .map(|l| {
            let base = delta_star[l.from] - delta_star[l.to];
            let d = (delta[l.from] - delta[l.to]) - base;
            let half = (0.5 * d).sin();
            l.susceptance * (base.cos() * 2.0 * half * half + base.sin() * (d.sin() - d))
        })
        .sum()
}

/// The same distance evaluated directly from `S`; loses precision near `delta*`.
pub fn eval_wp_potential(net: &Network, delta: &[f64], delta_star: &[f64]) -> f64 {
    let g = grad_s(net, delta_star);
    let lin: f64 = g.iter().zip(delta).zip(delta_star).map(|((g, d), s)| g * (d - s)).sum();
    potential_s(net, delta) - potential_s(net, delta_star) - lin
}

/// Evaluates `V` and its three parts.
///
/// `target` holds the true coefficient of every estimate, in the same layout
/// as `state.a_hat`; `ap` must be given whenever estimates are present.
pub fn eval_v(
    net: &Network,
    state: &SystemState,
    target: &[Vec<f64>],
    ap: Option<&AdaptiveParams>,
    delta_star: &[f64],
) -> Result<LyapunovEval> {
    let n = net.n();
    if state.delta.len() != n || state.omega.len() != n || delta_star.len() != n {
        return Err(Error::Dimension(format!("state is not sized for {n} buses")));
    }
    let kinetic = 0.5
        * net
            .inertia()
            .iter()
            .zip(&state.omega)
            .map(|(m, w)| m * w * w)
            .sum::<f64>();
    let wp = eval_wp(net, &state.delta, delta_star);
    let est_err = estimation_error(state, target, ap)?;
    Ok(LyapunovEval {
        value: kinetic + wp + est_err,
        wp,
        kinetic,
        est_err,
    })
}

fn estimation_error(state: &SystemState, target: &[Vec<f64>], ap: Option<&AdaptiveParams>) -> Result<f64> {
    if target.len() != state.a_hat.len() {
        return Err(Error::Dimension(format!(
            "{} coefficient vectors for {} estimates",
            target.len(),
            state.a_hat.len()
        )));
    }
    let mut sum = 0.0;
    for (i, (a_hat, a)) in state.a_hat.iter().zip(target).enumerate() {
        if a_hat.len() != a.len() {
            return Err(Error::Dimension(format!(
                "bus {i}: estimate has {} entries, true coefficients {}",
                a_hat.len(),
                a.len()
            )));
        }
        if a_hat.is_empty() {
            continue;
        }
        let ap = ap.ok_or_else(|| Error::Dimension("estimates present but no adaptation gains".into()))?;
        if ap.dim(i) != a.len() {
            return Err(Error::Dimension(format!(
                "bus {i}: gain matrix is {}x{}, estimate has {} entries",
                ap.dim(i),
                ap.dim(i),
                a.len()
            )));
        }
        for (j, (x, y)) in a_hat.iter().zip(a).enumerate() {
            let e = x - y;
            sum += 0.5 * e * e / ap.gain(i, j);
        }
    }
    Ok(sum)
}

/// Coefficients the estimates should converge to at time `t`.
///
/// Active steps are folded into the constant feature. Fails when part of
/// the load variation lies outside the features the controller adapts on,
/// since the energy function then has no equilibrium to measure against.
pub fn target_estimates(
    controller: &Controller,
    basis: &BasisSignal,
    steps: &[StepChange],
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = basis.n();
    let dist = Disturbance {
        steps: steps.to_vec(),
        ..Disturbance::default()
    };
    (0..n)
        .map(|i| {
            let mut a = basis.coeffs(i).to_vec();
            let c = basis.const_index(i);
            a[c] += dist.step_on(i, t);
            let uncovered = |a: &[f64]| -> Error {
                Error::Validation(format!(
                    "bus {i}: load coefficients {a:?} are not covered by the {} controller's features",
                    controller.name()
                ))
            };
            match controller.adaptive.as_ref().map(|ad| ad.features) {
                Some(FeatureSet::Basis) => Ok(a),
                Some(FeatureSet::Constant) => {
                    if a.iter().enumerate().any(|(j, &x)| j != c && x != 0.0) {
                        Err(uncovered(&a))
                    } else {
                        Ok(vec![a[c]])
                    }
                }
                None => {
                    if a.iter().any(|&x| x != 0.0) {
                        Err(uncovered(&a))
                    } else {
                        Ok(Vec::new())
                    }
                }
            }
        })
        .collect()
}

/// Euclidean norm of `(delta - delta*, omega, a_hat - a)`.
pub fn augmented_distance(state: &SystemState, target: &[Vec<f64>], delta_star: &[f64]) -> f64 {
    let d: f64 = state.delta.iter().zip(delta_star).map(|(x, y)| (x - y).powi(2)).sum();
    let w: f64 = state.omega.iter().map(|x| x * x).sum();
    let e: f64 = state
        .a_hat
        .iter()
        .zip(target)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)))
        .sum();
    (d + w + e).sqrt()
}

/// Quadratic bounds `gamma1 |x|^2 <= V <= gamma2 |x|^2` on the region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBounds {
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Largest edge angle difference of the region, rad.
    pub theta_max: f64,
    pub samples: usize,
}

/// Orthonormal basis of the subspace orthogonal to the all-ones vector.
fn helmert(n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n.saturating_sub(1));
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}

fn weighted_laplacian(net: &Network, weights: &[f64]) -> DMatrix<f64> {
    let n = net.n();
    let mut h = DMatrix::zeros(n, n);
    for (l, w) in net.lines().iter().zip(weights) {
        let w = l.susceptance * w;
        h[(l.from, l.to)] -= w;
        h[(l.to, l.from)] -= w;
        h[(l.from, l.from)] += w;
        h[(l.to, l.to)] += w;
    }
    h
}

// extreme eigenvalues of the Laplacian restricted to the COI subspace
fn restricted_extremes(net: &Network, q: &DMatrix<f64>, weights: &[f64]) -> (f64, f64) {
    let h = q.transpose() * weighted_laplacian(net, weights) * q;
    let eig = SymmetricEigen::new(h).eigenvalues;
    (eig.min(), eig.max())
}

/// Curvature and energy bounds on the region `|delta_i - delta_j| <= theta_max`.
///
/// The Hessian of `S` is the Laplacian with edge weights `B_ij cos(delta_ij)`,
/// so it depends on each line's angle only. Line angles are sampled by Latin
/// hypercube in `[-theta_max, theta_max]`, plus the two corners (all lines at
/// `theta_max`, all at 0). Since the Laplacian is monotone in its weights the
/// corners already bound every realisable angle vector; the samples confirm it.
pub fn compute_gammas(
    net: &Network,
    ap: Option<&AdaptiveParams>,
    theta_max: f64,
    samples: usize,
    seed: u64,
) -> Result<GammaBounds> {
    if !(theta_max > 0.0 && theta_max < std::f64::consts::FRAC_PI_2) {
        return Err(Error::Validation(format!("theta_max {theta_max} must lie in (0, pi/2)")));
    }
    let n = net.n();
    let m = net.lines().len();
    let q = helmert(n);
    let (lo_w, hi_w) = (theta_max.cos(), 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            let mut s: Vec<usize> = (0..samples).collect();
            s.shuffle(&mut rng);
            s
        })
        .collect();
    let jitter: Vec<f64> = (0..samples * m).map(|_| rng.random::<f64>()).collect();
    let mut points: Vec<Vec<f64>> = (0..samples)
        .map(|k| {
            (0..m)
                .map(|l| {
                    let u = (strata[l][k] as f64 + jitter[k * m + l]) / samples as f64;
                    (theta_max * (2.0 * u - 1.0)).cos()
                })
                .collect()
        })
        .collect();
    points.push(vec![lo_w; m]);
    points.push(vec![hi_w; m]);

    let (lmin, lmax) = points
        .par_iter()
        .map(|w| restricted_extremes(net, &q, w))
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    let (beta1, beta2) = (0.5 * lmin, 0.5 * lmax);
    if !(beta1 > 0.0) {
        return Err(Error::Validation(format!(
            "curvature bound beta1 = {beta1:.3e} is not positive; shrink the region"
        )));
    }

    let (m_min, m_max) = min_max(net.inertia());
    let mut lo = [m_min, 2.0 * beta1].iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = [m_max, 2.0 * beta2].iter().copied().fold(0.0, f64::max);
    // the estimate term is weighted by A^{-1}
    if let Some(ap) = ap.filter(|a| (0..a.n()).any(|i| a.dim(i) > 0)) {
        lo = lo.min(1.0 / ap.max_gain());
        hi = hi.max(1.0 / ap.min_gain());
    }
    Ok(GammaBounds {
        gamma1: 0.5 * lo,
        gamma2: 0.5 * hi,
        beta1,
        beta2,
        theta_max,
        samples: points.len(),
    })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// A ball and energy level whose sublevel set stays inside the region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoaEstimate {
    pub r: f64,
    pub rho: f64,
    pub valid: bool,
    pub gamma2: f64,
}

impl RoaEstimate {
    /// Sufficient test for membership in the sublevel set: `|x| < r` and `gamma2 |x|^2 <= rho`.
    pub fn contains(&self, distance: f64) -> bool {
        self.valid && distance < self.r && self.gamma2 * distance * distance <= self.rho
    }
}

/// Largest ball around the equilibrium inside the region, and its level.
///
/// A line's angle moves by at most `sqrt(2) |x|`, so the ball radius is the
/// smallest slack `theta_max - |delta*_ij|` divided by `sqrt(2)`.
pub fn estimate_roa(net: &Network, bounds: &GammaBounds, delta_star: &[f64], margin_frac: f64) -> Result<RoaEstimate> {
    let slack = net
        .lines()
        .iter()
        .map(|l| bounds.theta_max - (delta_star[l.from] - delta_star[l.to]).abs())
        .fold(f64::INFINITY, f64::min);
    let r = slack / std::f64::consts::SQRT_2;
    if !(r > 0.0) {
        return Err(Error::Validation(format!(
            "equilibrium angles leave no slack inside the region (r = {r:.3e})"
        )));
    }
    let rho = bounds.gamma1 * r * r * (1.0 - margin_frac.clamp(0.0, 1.0));
    Ok(RoaEstimate {
        r,
        rho,
        valid: rho > 0.0,
        gamma2: bounds.gamma2,
    })
}

/// Outcome of the decrease check along one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecreaseReport {
    /// Largest `dV/dt + sum_i D_i omega_i^2` over the checked points.
    pub worst_margin: f64,
    pub worst_time: f64,
    pub worst_index: usize,
    /// Allowed slack `c dt^2`.
    pub tolerance: f64,
    pub c: f64,
    pub checked: usize,
    pub violations: usize,
    /// First record where the margin exceeded the tolerance.
    pub first_violation: Option<usize>,
    pub first_violation_time: Option<f64>,
    pub pass: bool,
}

/// Checks `dV/dt <= -sum_i D_i omega_i^2` along a recorded trajectory.
///
/// `dV/dt` comes from central differences of `V` (second-order one-sided at
/// the ends). The slack is `c dt^2`, where `c` bounds the truncation error
/// via the largest third difference of `V`, floored by the round-off level.
/// Difference stencils that touch a step onset are skipped, since the true
/// coefficient jumps there.
pub fn check_decrease(
    traj: &Trajectory,
    net: &Network,
    controller: &Controller,
    basis: &BasisSignal,
    delta_star: &[f64],
) -> Result<DecreaseReport> {
    if traj.meta.noise != 0.0 {
        return Err(Error::Validation(
            "the decrease check needs a trajectory without noise".into(),
        ));
    }
    let len = traj.len();
    if len < 4 {
        return Err(Error::Horizon(format!("{len} records; the decrease check needs at least 4")));
    }
    let dt = traj.dt;
    let steps = &traj.meta.steps;
    let ap = controller.adaptive_params();
    let values: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|k| {
            let t = traj.times()[k];
            let state = SystemState {
                delta: traj.delta(k).to_vec(),
                omega: traj.omega(k).to_vec(),
                a_hat: traj.a_hat(k),
            };
            let target = target_estimates(controller, basis, steps, t)?;
            Ok(eval_v(net, &state, &target, ap, delta_star)?.value)
        })
        .collect::<Result<_>>()?;

    // records within one step of an onset have a non-smooth neighbourhood
    let mut rough = vec![false; len];
    for s in steps.iter().filter(|s| s.onset > 0.0) {
        let k0 = s.onset / dt;
        for (k, r) in rough.iter_mut().enumerate() {
            if (k as f64 - k0).abs() <= 1.0 + 1e-9 {
                *r = true;
            }
        }
    }
    let smooth = |a: usize, b: usize| (a..=b).all(|k| !rough[k]);

    let mut v3 = 0.0f64;
    for k in 0..len - 3 {
        if smooth(k, k + 3) {
            let d3 = values[k + 3] - 3.0 * values[k + 2] + 3.0 * values[k + 1] - values[k];
            v3 = v3.max(d3.abs() / dt.powi(3));
        }
    }
    let v_max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // round-off in V itself, plus the energy of state vectors rounded to
    // machine precision, which moves V even at an exact equilibrium
    let scale = delta_star.iter().fold(1.0f64, |m, d| m.max(d.abs()));
    let roundoff = 64.0 * (f64::EPSILON * v_max + (f64::EPSILON * scale).powi(2)) / dt.powi(3);
    // one-sided stencils carry twice the central truncation constant
    let c = (2.0 * v3 / 3.0).max(roundoff);
    let tolerance = c * dt * dt;

    let d = net.damping();
    let mut report = DecreaseReport {
        worst_margin: f64::NEG_INFINITY,
        worst_time: 0.0,
        worst_index: 0,
        tolerance,
        c,
        checked: 0,
        violations: 0,
        first_violation: None,
        first_violation_time: None,
        pass: true,
    };
    for k in 0..len {
        let vdot = if k == 0 {
            if !smooth(0, 2) {
                continue;
            }
            (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
        } else if k == len - 1 {
            if !smooth(k - 2, k) {
                continue;
            }
            (3.0 * values[k] - 4.0 * values[k - 1] + values[k - 2]) / (2.0 * dt)
        } else {
            if !smooth(k - 1, k + 1) {
                continue;
            }
            (values[k + 1] - values[k - 1]) / (2.0 * dt)
        };
        let dissipation: f64 = traj.omega(k).iter().zip(d).map(|(w, d)| d * w * w).sum();
        let margin = vdot + dissipation;
        report.checked += 1;
        if margin > report.worst_margin {
            report.worst_margin = margin;
            report.worst_index = k;
            report.worst_time = traj.times()[k];
        }
        if margin > tolerance {
            report.violations += 1;
            if report.first_violation.is_none() {
                report.first_violation = Some(k);
                report.first_violation_time = Some(traj.times()[k]);
            }
        }
    }
    report.pass = report.violations == 0;
    Ok(report)
}

/// Certificate file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub worst_margin: f64,
    pub worst_time: f64,
    pub roa: RoaLevel,
    pub pass: bool,
    pub scenarios: usize,
    pub violations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<ViolationAt>,
    /// Largest final `|a_hat - a|` over the battery; reported, not checked.
    #[serde(default)]
    pub estimate_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoaLevel {
    pub r: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationAt {
    pub scenario: usize,
    pub index: usize,
    pub time: f64,
}

impl Certificate {
    /// Combines the bounds, region and per-trajectory decrease reports.
    pub fn assemble(bounds: &GammaBounds, roa: &RoaEstimate, reports: &[DecreaseReport]) -> Self {
        let worst = reports
            .iter()
            .max_by(|a, b| a.worst_margin.total_cmp(&b.worst_margin));
        let violations = reports.iter().map(|r| r.violations).sum();
        let first_violation = reports.iter().enumerate().find_map(|(j, r)| {
            Some(ViolationAt {
                scenario: j,
                index: r.first_violation?,
                time: r.first_violation_time?,
            })
        });
        Self {
            gamma1: bounds.gamma1,
            gamma2: bounds.gamma2,
            beta1: bounds.beta1,
            beta2: bounds.beta2,
            worst_margin: worst.map_or(0.0, |r| r.worst_margin),
            worst_time: worst.map_or(0.0, |r| r.worst_time),
            roa: RoaLevel { r: roa.r, rho: roa.rho },
            pass: violations == 0 && roa.valid && reports.iter().all(|r| r.pass),
            scenarios: reports.len(),
            violations,
            first_violation,
            estimate_error: 0.0,
        }
    }
}

/// Settings for [`certify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub scenarios: usize,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    /// Step onset, s.
    pub onset: f64,
    /// Initial frequencies are drawn from `U[-omega0, omega0]`.
    pub omega0: f64,
    pub samples: usize,
    pub theta_max: f64,
    /// Fraction shaved off the energy level of the region estimate.
    pub roa_margin: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            scenarios: 100,
            seed: 0,
            dt: 0.005,
            horizon: 15.0,
            onset: 1.0,
            omega0: 0.05,
            samples: DEFAULT_SAMPLES,
            theta_max: DEFAULT_THETA_MAX,
            roa_margin: 0.05,
        }
    }
}

/// One trajectory of the certification battery.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryCase {
    pub basis: BasisSignal,
    pub dist: Disturbance,
    pub x0: SystemState,
}

/// No-noise scenarios the controller is expected to handle.
///
/// Loads are cut down to what the controller adapts on: a basis-adaptive
/// controller sees the full load and steps, a constant-feature one keeps
/// steps and constant offsets, and a plain base controller only gets the
/// initial frequency kick.
pub fn certification_battery(
    net: &Network,
    controller: &Controller,
    delta_star: &[f64],
    cfg: &CertifyConfig,
) -> Vec<BatteryCase> {
    let n = net.n();
    let set = crate::training::make_scenarios(n, cfg.scenarios, cfg.seed, 0.0).with_onset(cfg.onset);
    let features = controller.adaptive.as_ref().map(|a| a.features);
    set.scenarios
        .into_iter()
        .map(|s| {
            let (basis, steps) = match features {
                Some(FeatureSet::Basis) => (s.basis, s.dist.steps),
                Some(FeatureSet::Constant) => (s.basis.restricted(false, true), s.dist.steps),
                None => (s.basis.restricted(false, false), Vec::new()),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f0e);
            rng.set_stream(s.index as u64);
            let omega = (0..n).map(|_| rng.random_range(-cfg.omega0..=cfg.omega0)).collect();
            let a_hat = (0..n).map(|i| vec![0.0; controller.estimate_dim(&basis, i)]).collect();
            BatteryCase {
                x0: SystemState {
                    delta: delta_star.to_vec(),
                    omega,
                    a_hat,
                },
                dist: Disturbance {
                    steps,
                    noise: 0.0,
                    seed: s.dist.seed,
                },
                basis,
            }
        })
        .collect()
}

/// Curvature bounds, region estimate and decrease check over the battery.
///
/// Saturated controllers leave the class the energy argument covers and are
/// refused outright.
pub fn certify(net: &Network, controller: &Controller, delta_star: &[f64], cfg: &CertifyConfig) -> Result<Certificate> {
    if let Some(umax) = controller.saturation {
        return Err(Error::CertificationRefused(format!(
            "actuation saturation at {umax} p.u. breaks the monotone sector condition; \
             certify the unsaturated controller instead"
        )));
    }
    let bounds = compute_gammas(net, controller.adaptive_params(), cfg.theta_max, cfg.samples, cfg.seed)?;
    let roa = estimate_roa(net, &bounds, delta_star, cfg.roa_margin)?;
    let rc = RolloutConfig::new(cfg.horizon, cfg.dt);
    let results: Vec<(DecreaseReport, f64)> = certification_battery(net, controller, delta_star, cfg)
        .par_iter()
        .map(|case| {
            let traj = rollout(net, controller, &case.basis, &case.dist, &rc, &case.x0)?;
            let report = check_decrease(&traj, net, controller, &case.basis, delta_star)?;
            let last = traj.len() - 1;
            let target = target_estimates(controller, &case.basis, &case.dist.steps, traj.times()[last])?;
            let est: f64 = traj
                .a_hat(last)
                .iter()
                .flatten()
                .zip(target.iter().flatten())
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            Ok((report, est.sqrt()))
        })
        .collect::<Result<_>>()?;
    let reports: Vec<DecreaseReport> = results.iter().map(|r| r.0.clone()).collect();
    let mut cert = Certificate::assemble(&bounds, &roa, &reports);
    cert.estimate_error = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(cert)
}
