//! Proximal policy optimization with GAE, a clipped surrogate, a separate
//! value network and an entropy bonus.

pub mod adam;
pub mod gae;
pub mod loss;
pub mod ppo;
pub mod rollout;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ControllerMode, Policy, NUM_JOINTS};
use crate::nn::mlp::{forward_tape, Tape};
use crate::nn::{GaussianPolicy, MlpArchitecture, ParamVector};

pub use adam::Adam;
pub use gae::compute_gae;
pub use loss::{clip_objective, minibatch_loss, LossParts};
pub use ppo::{ppo_update, train, PpoCurvePoint, TrainOutput, UpdateMetrics};
pub use rollout::{collect_rollouts, Actor, RolloutBatch};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("non-finite loss at epoch {epoch}, minibatch {minibatch}: {parts:?}")]
    NonFiniteLoss { epoch: usize, minibatch: usize, parts: LossParts },
    #[error("invalid PPO hyper-parameters: {0}")]
    InvalidHyperParams(String),
    #[error("budget of {budget} frames is below one batch ({needed} frames)")]
    BudgetTooSmall { budget: u64, needed: u64 },
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoHyperParams {
    pub learning_rate: f64,
    pub clip_eps: f64,
    /// Value-loss coefficient.
    pub c1: f64,
    /// Entropy-bonus coefficient.
    pub c2: f64,
    pub epochs: usize,
    pub num_minibatches: usize,
    /// Frames per iteration across all actors.
    pub batch_frames: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub hidden: [usize; 2],
    pub num_actors: usize,
    pub normalize_advantages: bool,
    pub normalize_observations: bool,
    pub max_grad_norm: Option<f64>,
    pub init_log_std: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for PpoHyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            clip_eps: 0.2,
            c1: 0.5,
            c2: 0.0,
            epochs: 10,
            num_minibatches: 32,
            batch_frames: 32 * 1024,
            gamma: 0.99,
            gae_lambda: 0.95,
            hidden: [5, 5],
            num_actors: 8,
            normalize_advantages: true,
            normalize_observations: false,
            max_grad_norm: None,
            init_log_std: 0.5f64.ln(),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl PpoHyperParams {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: String| Err(RlError::InvalidHyperParams(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be non-negative".into());
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]".into());
        }
        if !(self.c1 >= 0.0) || !(self.c2 >= 0.0) {
            return bad("c1 and c2 must be non-negative".into());
        }
        if self.epochs == 0 || self.num_minibatches == 0 || self.num_actors == 0 {
            return bad("epochs, num_minibatches and num_actors must be positive".into());
        }
        if self.batch_frames == 0 || self.batch_frames % self.num_minibatches != 0 {
            return bad(format!(
                "batch_frames {} must be a positive multiple of num_minibatches {}",
                self.batch_frames, self.num_minibatches
            ));
        }
        if self.batch_frames % self.num_actors != 0 {
            return bad(format!(
                "batch_frames {} must be a multiple of num_actors {}",
                self.batch_frames, self.num_actors
            ));
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        if let Some(g) = self.max_grad_norm {
            if !(g > 0.0) {
                return bad("max_grad_norm must be positive when set".into());
            }
        }
        Ok(())
    }

    /// Frames each actor collects per iteration.
    pub fn horizon(&self) -> usize {
        self.batch_frames / self.num_actors
    }

    pub fn minibatch_size(&self) -> usize {
        self.batch_frames / self.num_minibatches
    }
}

/// Running per-feature mean and variance of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl ObsNormalizer {
    pub fn new(size: usize) -> Self {
        Self { mean: vec![0.0; size], var: vec![1.0; size], count: 0.0 }
    }

    pub fn apply(&self, obs: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            obs.iter()
                .zip(&self.mean)
                .zip(&self.var)
                .map(|((o, m), v)| (o - m) / (v + 1e-8).sqrt()),
        );
    }

    /// Merges the moments of a flat block of observations (parallel-variance update).
    pub fn update(&mut self, flat: &[f64]) {
        let size = self.mean.len();
        let n = (flat.len() / size) as f64;
        if n == 0.0 {
            return;
        }
        for j in 0..size {
            let col = flat.iter().skip(j).step_by(size);
            let mean = col.clone().sum::<f64>() / n;
            let var = col.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let total = self.count + n;
            let delta = mean - self.mean[j];
            let m2 = self.var[j] * self.count + var * n + delta * delta * self.count * n / total;
            self.mean[j] += delta * n / total;
            self.var[j] = m2 / total;
        }
        self.count += n;
    }
}

/// Policy, value network and optional observation normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoModel {
    pub policy: GaussianPolicy,
    pub value_arch: MlpArchitecture,
    pub value: ParamVector,
    pub obs_norm: Option<ObsNormalizer>,
}

impl PpoModel {
    pub fn init<R: Rng + ?Sized>(
        mode: ControllerMode,
        hp: &PpoHyperParams,
        action_limit: f64,
        rng: &mut R,
    ) -> Self {
        let arch = MlpArchitecture::policy(mode.obs_size(), hp.hidden, action_limit);
        let value_arch = MlpArchitecture::value(mode.obs_size(), hp.hidden);
        let mean = ParamVector::fan_in_uniform(&arch, rng);
        let value = ParamVector::fan_in_uniform(&value_arch, rng);
        let obs_norm = hp.normalize_observations.then(|| ObsNormalizer::new(mode.obs_size()));
        Self { policy: GaussianPolicy::new(arch, mean, hp.init_log_std), value_arch, value, obs_norm }
    }

    /// Length of the flat `[mean net | log_std | value net]` vector.
    pub fn flat_len(&self) -> usize {
        self.policy.mean.len() + self.policy.log_std.len() + self.value.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.flat_len());
        v.extend_from_slice(self.policy.mean.as_slice());
        v.extend_from_slice(&self.policy.log_std);
        v.extend_from_slice(self.value.as_slice());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.flat_len());
        let (m, rest) = flat.split_at(self.policy.mean.len());
        let (s, v) = rest.split_at(self.policy.log_std.len());
        self.policy.mean.as_mut_slice().copy_from_slice(m);
        self.policy.log_std.copy_from_slice(s);
        self.value.as_mut_slice().copy_from_slice(v);
    }

    /// Observation as fed to the networks.
    pub fn prepare(&self, obs: &[f64], out: &mut Vec<f64>) {
        match &self.obs_norm {
            Some(n) => n.apply(obs, out),
            None => {
                out.clear();
                out.extend_from_slice(obs);
            }
        }
    }

    pub fn value_of(&self, prepared_obs: &[f64], tape: &mut Tape) -> f64 {
        forward_tape(self.value.as_slice(), &self.value_arch, prepared_obs, tape);
        tape.output()[0]
    }

    /// Deterministic controller playing the policy mean.
    pub fn mean_policy(&self) -> MeanPolicy<'_> {
        MeanPolicy { model: self, scratch: Default::default() }
    }
}

pub struct MeanPolicy<'a> {
    model: &'a PpoModel,
    scratch: std::cell::RefCell<(Tape, Vec<f64>)>,
}

impl Policy for MeanPolicy<'_> {
    fn input_size(&self) -> usize {
        self.model.policy.arch.input_size
    }

    fn act(&self, observation: &[f64], action: &mut [f64]) {
        let mut guard = self.scratch.borrow_mut();
        let (tape, buf) = &mut *guard;
        self.model.prepare(observation, buf);
        let mean = self.model.policy.mean_action(buf, tape);
        action[..NUM_JOINTS].copy_from_slice(mean);
    }
}
