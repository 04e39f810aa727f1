use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on a single step magnitude, p.u.
pub const STEP_CAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepChange {
    /// 0-based bus index.
    pub bus: usize,
    /// Additive change of net injection, p.u.
    pub magnitude: f64,
    /// Time the step switches on, s. It stays on afterwards.
    pub onset: f64,
}

/// Step changes plus optional zero-order-hold uniform noise on every bus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Disturbance {
    pub steps: Vec<StepChange>,
    /// Half-width of the per-step uniform noise, p.u.
    pub noise: f64,
    pub seed: u64,
}

// onsets that land on a grid point count as switched on there
const ONSET_SLACK: f64 = 1e-9;

impl Disturbance {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn step(bus: usize, magnitude: f64, onset: f64) -> Self {
        Self {
            steps: vec![StepChange { bus, magnitude, onset }],
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize, cap: f64) -> Result<()> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Validation(format!("noise bound {} must be >= 0", self.noise)));
        }
        for s in &self.steps {
            if s.bus >= n {
                return Err(Error::Validation(format!("step on bus index {} but network has {n} buses", s.bus)));
            }
            if !(s.magnitude.abs() <= cap) {
                return Err(Error::Validation(format!(
                    "step magnitude {} exceeds the cap {cap} p.u.",
                    s.magnitude
                )));
            }
            if !(s.onset.is_finite() && s.onset >= 0.0) {
                return Err(Error::Validation(format!("step onset {} must be >= 0", s.onset)));
            }
        }
        Ok(())
    }

    pub fn is_active(step: &StepChange, t: f64) -> bool {
        t + ONSET_SLACK >= step.onset
    }

    /// Adds the active step changes at time `t` into `out`.
    pub fn add_steps(&self, t: f64, out: &mut [f64]) {
        for s in &self.steps {
            if Self::is_active(s, t) {
                out[s.bus] += s.magnitude;
            }
        }
    }

    /// Step change accumulated on bus `i` at time `t`.
    pub fn step_on(&self, i: usize, t: f64) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.bus == i && Self::is_active(s, t))
            .map(|s| s.magnitude)
            .sum()
    }

    /// Noise held over integrator step `k`, written into `out`.
    ///
    /// Each step index has its own ChaCha stream, so draws do not depend on
    /// how many earlier steps were taken.
    pub fn noise_into(&self, k: usize, out: &mut [f64]) {
        if self.noise == 0.0 {
            out.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64);
        for x in out.iter_mut() {
            *x = rng.random_range(-self.noise..=self.noise);
        }
    }

    /// Onset times inside `(0, horizon]`, where the injection jumps.
    pub fn jump_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.steps.iter().map(|s| s.onset).filter(|&o| o > 0.0).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_and_noise_are_validated() {
        assert!(Disturbance::step(0, 1.5, 0.0).validate(2, STEP_CAP).is_err());
        assert!(Disturbance::step(3, 0.5, 0.0).validate(2, STEP_CAP).is_err());
        let mut d = Disturbance::step(1, -1.0, 0.0);
        assert!(d.validate(2, STEP_CAP).is_ok());
        d.noise = -0.1;
        assert!(d.validate(2, STEP_CAP).is_err());
    }

    #[test]
    fn steps_persist_after_onset() {
        let d = Disturbance::step(1, 0.5, 2.0);
        let mut out = [0.0; 2];
        d.add_steps(1.99, &mut out);
        assert_eq!(out, [0.0, 0.0]);
        d.add_steps(200.0 * 0.01, &mut out);
        assert_eq!(out, [0.0, 0.5]);
        assert_eq!(d.step_on(1, 10.0), 0.5);
    }

    #[test]
    fn noise_is_bounded_and_reproducible() {
        let d = Disturbance {
            noise: 0.03,
            seed: 9,
            ..Default::default()
        };
        let mut a = [0.0; 39];
        let mut b = [0.0; 39];
        for k in [0, 1, 77] {
            d.noise_into(k, &mut a);
            d.noise_into(k, &mut b);
            assert_eq!(a, b);
            assert!(a.iter().all(|x| x.abs() <= 0.03));
        }
        d.noise_into(1, &mut a);
        d.noise_into(2, &mut b);
        assert_ne!(a, b);
    }
}
