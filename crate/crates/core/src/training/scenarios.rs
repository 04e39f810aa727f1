use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{make_sinusoid_basis, BasisSignal, Disturbance, StepChange, STEP_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One disturbance and load basis. Rollouts start at `(delta*, 0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: usize,
    pub split: Split,
    pub dist: Disturbance,
    pub basis: BasisSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
}

/// Draws `count` scenarios: 1 to 3 distinct buses, each with a step from
/// `U[-1, 1]` p.u. at `t = 0`, a fresh sinusoid basis, and noise bound `noise`.
///
/// Scenario `j` uses its own ChaCha stream of `seed`, so a scenario does not
/// depend on how many others were drawn.
pub fn make_scenarios(n: usize, count: usize, seed: u64, noise: f64) -> ScenarioSet {
    make_range(n, count, 0, seed, noise, Split::Train)
}

// test scenarios draw from a disjoint block of streams
const TEST_STREAMS: u64 = 1 << 32;

fn make_range(n: usize, count: usize, first_index: usize, seed: u64, noise: f64, split: Split) -> ScenarioSet {
    let scenarios = (0..count)
        .map(|k| {
            let j = first_index + k;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(match split {
                Split::Train => k as u64,
                Split::Test => TEST_STREAMS + k as u64,
            });
            let k = rng.random_range(1..=3.min(n));
            let mut buses = sample(&mut rng, n, k).into_vec();
            buses.sort_unstable();
            let steps = buses
                .into_iter()
                .map(|bus| StepChange {
                    bus,
                    magnitude: rng.random_range(-STEP_CAP..=STEP_CAP),
                    onset: 0.0,
                })
                .collect();
            let basis = make_sinusoid_basis(n, rng.random());
            Scenario {
                index: j,
                split,
                dist: Disturbance {
                    steps,
                    noise,
                    seed: rng.random(),
                },
                basis,
            }
        })
        .collect();
    ScenarioSet { seed, scenarios }
}

impl ScenarioSet {
    /// `train` training scenarios followed by `test` disjoint test scenarios.
    ///
    /// Either part depends only on the seed and its own count.
    pub fn train_test(n: usize, train: usize, test: usize, seed: u64, noise: f64) -> Self {
        let mut set = make_range(n, train, 0, seed, noise, Split::Train);
        set.scenarios
            .extend(make_range(n, test, train, seed, noise, Split::Test).scenarios);
        set
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn split(&self, split: Split) -> ScenarioSet {
        ScenarioSet {
            seed: self.seed,
            scenarios: self.scenarios.iter().filter(|s| s.split == split).cloned().collect(),
        }
    }

    /// Moves every step onset to `onset`.
    pub fn with_onset(mut self, onset: f64) -> Self {
        for s in &mut self.scenarios {
            s.dist.steps.iter_mut().for_each(|st| st.onset = onset);
        }
        self
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        for s in &mut self.scenarios {
            s.dist.noise = noise;
        }
        self
    }

    /// SHA-256 of the canonical JSON encoding, in hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("serializable");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_shape() {
        let set = make_scenarios(39, 300, 11, 0.0);
        assert_eq!(set.len(), 300);
        for s in &set.scenarios {
            let k = s.dist.steps.len();
            assert!((1..=3).contains(&k));
            assert!(s.dist.steps.iter().all(|st| st.magnitude.abs() <= 1.0 && st.onset == 0.0));
            let mut buses: Vec<usize> = s.dist.steps.iter().map(|st| st.bus).collect();
            buses.dedup();
            assert_eq!(buses.len(), k);
            assert_eq!(s.basis.n(), 39);
        }
        let noisy = make_scenarios(39, 3, 11, 0.03);
        assert!(noisy.scenarios.iter().all(|s| s.dist.noise == 0.03));
    }

    #[test]
    fn deterministic_and_disjoint() {
        let a = ScenarioSet::train_test(10, 5, 4, 3, 0.0);
        let b = ScenarioSet::train_test(10, 5, 4, 3, 0.0);
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        let (tr, te) = (a.split(Split::Train), a.split(Split::Test));
        assert_eq!((tr.len(), te.len()), (5, 4));
        for x in &tr.scenarios {
            assert!(te.scenarios.iter().all(|y| y.dist != x.dist));
        }
        // the training prefix does not depend on the test count
        let c = ScenarioSet::train_test(10, 5, 1, 3, 0.0);
        assert_eq!(c.split(Split::Train), tr);
        let d = ScenarioSet::train_test(10, 0, 4, 3, 0.0).split(Split::Test);
        let dists = |s: &ScenarioSet| s.scenarios.iter().map(|x| x.dist.clone()).collect::<Vec<_>>();
        assert_eq!(dists(&d), dists(&te));
        assert_ne!(make_scenarios(10, 5, 4, 0.0).hash(), tr.hash());
    }
}
