//! Trajectories started inside the certified sublevel set settle to nominal
//! frequency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swingfreq::cli::{ControllerKind, InitOptions};
use swingfreq::dynamics::{make_sinusoid_basis, rollout, Disturbance, RolloutConfig};
use swingfreq::lyapunov::{augmented_distance, compute_gammas, estimate_roa, target_estimates};
use swingfreq::netmodel::{bundled, project_coi, solve_equilibrium, Network};
use swingfreq::SystemState;

fn settles_from_the_sublevel_set(net: &Network, starts: usize, seed: u64) -> f64 {
    let eq = solve_equilibrium(net).unwrap();
    let n = net.n();
    let basis = make_sinusoid_basis(n, seed);
    let init = InitOptions { slope: 5.0, adaptation_gain: 20.0, ..InitOptions::default() };
    let c = ControllerKind::AdaptivePwl.build(&basis, &init).unwrap();
    let bounds = compute_gammas(net, c.adaptive_params(), 1.2, 2000, seed).unwrap();
    let roa = estimate_roa(net, &bounds, &eq.delta_star, 0.05).unwrap();
    assert!(roa.valid);
    let radius = 0.99 * roa.r.min((roa.rho / roa.gamma2).sqrt());
    let target = target_estimates(&c, &basis, &[], 0.0).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..starts {
        let mut delta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        project_coi(&mut delta);
        let omega: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err: Vec<Vec<f64>> = target.iter().map(|a| a.iter().map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let zero = SystemState { delta: vec![0.0; n], omega: vec![0.0; n], a_hat: target.iter().map(|a| vec![0.0; a.len()]).collect() };
        let raw = SystemState { delta: delta.clone(), omega: omega.clone(), a_hat: err.clone() };
        let scale = rng.random_range(0.1..1.0) * radius / augmented_distance(&raw, &zero.a_hat, &zero.delta);

        let x0 = SystemState {
            delta: eq.delta_star.iter().zip(&delta).map(|(s, d)| s + scale * d).collect(),
            omega: omega.iter().map(|w| scale * w).collect(),
            a_hat: target.iter().zip(&err).map(|(a, e)| a.iter().zip(e).map(|(a, e)| a + scale * e).collect()).collect(),
        };
        assert!(roa.contains(augmented_distance(&x0, &target, &eq.delta_star)));
        let traj = rollout(net, &c, &basis, &Disturbance::none(), &RolloutConfig::new(30.0, 0.01), &x0).unwrap();
        let last = traj.omega(traj.len() - 1);
        worst = worst.max(last.iter().fold(0.0, |m, w| m.max(w.abs())));
    }
    worst
}

#[test]
fn two_bus_settles_within_thirty_seconds() {
    let worst = settles_from_the_sublevel_set(&bundled::two_bus(), 20, 1);
    assert!(worst <= 1e-3, "max |omega(30 s)| = {worst:e}");
}

#[test]
fn ne39_settles_within_thirty_seconds() {
    let worst = settles_from_the_sublevel_set(&bundled::ne39(), 10, 2);
    assert!(worst <= 1e-3, "max |omega(30 s)| = {worst:e}");
}
