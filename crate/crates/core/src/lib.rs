//! Adaptive frequency control for lossless power networks.
//!
//! The crate simulates swing dynamics in center-of-inertia coordinates,
//! evaluates droop / monotone piecewise-linear base controllers with an
//! optional basis-function adaptation law, certifies the energy-function
//! decrease along simulated trajectories, and trains controller parameters
//! by backpropagation through the discretized rollout.

pub mod cli;
pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod lyapunov;
pub mod netmodel;
pub mod training;

pub use controllers::{BaseController, Controller, FeatureSet};
pub use dynamics::{BasisSignal, Disturbance, Integrator, SystemState, Trajectory};
pub use error::{Error, Result};
pub use netmodel::{EquilibriumAngles, Network};

/// Softplus `ln(1 + e^x)`, evaluated without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], the logistic function.
pub(crate) fn softplus_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub(crate) fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_inverse_round_trips() {
        for &y in &[1e-4, 0.01, 0.5, 1.0, 3.0, 29.0, 31.0, 80.0] {
            let x = softplus_inv(y);
            assert!((softplus(x) - y).abs() <= 1e-12 * y.max(1.0), "y={y}");
        }
    }

    #[test]
    fn softplus_grad_matches_difference_quotient() {
        for &x in &[-5.0, -0.3, 0.0, 0.7, 4.0, 35.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((fd - softplus_grad(x)).abs() < 1e-8);
        }
    }
}
