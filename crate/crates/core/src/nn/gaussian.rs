//! Diagonal Gaussian policy with a state-independent learnable log-std.

use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{forward_tape, Tape};
use super::{MlpArchitecture, ParamVector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log density of `action` under `N(mean, diag(exp(log_std)^2))`.
pub fn gaussian_logprob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// Differential entropy of the diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().sum::<f64>() + 0.5 * log_std.len() as f64 * (1.0 + LN_2PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub arch: MlpArchitecture,
    pub mean: ParamVector,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(arch: MlpArchitecture, mean: ParamVector, init_log_std: f64) -> Self {
        let log_std = vec![init_log_std; arch.output_size];
        Self { arch, mean, log_std }
    }

    /// Mean action, written into the tape's output.
    pub fn mean_action<'t>(&self, obs: &[f64], tape: &'t mut Tape) -> &'t [f64] {
        forward_tape(&self.mean.0, &self.arch, obs, tape);
        tape.output()
    }

    /// Draws an action and returns its log-probability.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        tape: &mut Tape,
        rng: &mut R,
        action: &mut [f64],
    ) -> f64 {
        let mean = self.mean_action(obs, tape);
        for ((a, m), ls) in action.iter_mut().zip(mean).zip(&self.log_std) {
            let eps: f64 = rng.sample(StandardNormal);
            *a = m + ls.exp() * eps;
        }
        gaussian_logprob(mean, &self.log_std, action)
    }

    pub fn entropy(&self) -> f64 {
        gaussian_entropy(&self.log_std)
    }
}
