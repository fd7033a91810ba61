//! The PPO update and the outer training loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{collect_rollouts, minibatch_loss, Actor, Adam, LossParts, PpoHyperParams, PpoModel, RlError, RolloutBatch};
use crate::env::{run_episode, ControllerMode, EnvSpec};
use crate::nn::mlp::Tape;

/// Averages over all minibatches of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// `K` epochs of shuffled minibatch Adam steps on the minimized loss. Ratios
/// are taken against the log-probabilities stored in `batch`, i.e. the
/// policy that collected it.
pub fn ppo_update<R: Rng + ?Sized>(
    model: &mut PpoModel,
    adam: &mut Adam,
    batch: &RolloutBatch,
    hp: &PpoHyperParams,
    rng: &mut R,
) -> Result<UpdateMetrics, RlError> {
    let n = batch.len();
    let chunk = n / hp.num_minibatches;
    if chunk == 0 || n % hp.num_minibatches != 0 {
        return Err(RlError::InvalidHyperParams(format!(
            "batch of {n} frames cannot be split into {} minibatches",
            hp.num_minibatches
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut flat = model.flat();
    let mut grad = vec![0.0; flat.len()];
    let mut tape = Tape::default();
    let mut metrics = UpdateMetrics::default();

    for epoch in 0..hp.epochs {
        order.shuffle(rng);
        for (minibatch, idx) in order.chunks_exact(chunk).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let parts = minibatch_loss(model, hp, batch, idx, Some(&mut grad), &mut tape);
            if !parts.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(RlError::NonFiniteLoss { epoch, minibatch, parts });
            }
            if let Some(max) = hp.max_grad_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    let s = max / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam.step(&mut flat, &grad);
            model.set_flat(&flat);
            accumulate(&mut metrics, &parts);
        }
    }
    let k = metrics.minibatches as f64;
    metrics.policy_loss /= k;
    metrics.value_loss /= k;
    metrics.entropy /= k;
    metrics.approx_kl /= k;
    metrics.clip_fraction /= k;
    Ok(metrics)
}

fn accumulate(m: &mut UpdateMetrics, p: &LossParts) {
    m.policy_loss += p.policy_loss;
    m.value_loss += p.value_loss;
    m.entropy += p.entropy;
    m.approx_kl += p.approx_kl;
    m.clip_fraction += p.clip_fraction;
    m.minibatches += 1;
}

/// One training iteration on the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoCurvePoint {
    pub iteration: u64,
    /// Cumulative training frames after this iteration's rollout.
    pub frames: u64,
    /// Mean return of stochastic-policy episodes completed in the rollout;
    /// NaN when none completed.
    pub mean_episode_reward: f64,
    /// Return of the deterministic mean policy after the update. These
    /// evaluation episodes are not counted in `frames`.
    pub eval_reward: f64,
    pub update: UpdateMetrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: PpoModel,
    pub curve: Vec<PpoCurvePoint>,
    pub frames: u64,
}

impl TrainOutput {
    /// Return of the final deterministic policy.
    pub fn final_reward(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |p| p.eval_reward)
    }
}

/// Collect, estimate advantages, update; repeated while another full batch
/// fits in `budget_frames`.
pub fn train<R: Rng + ?Sized>(
    spec: &EnvSpec,
    mode: ControllerMode,
    hp: &PpoHyperParams,
    rng: &mut R,
    budget_frames: u64,
) -> Result<TrainOutput, RlError> {
    hp.validate()?;
    spec.validate().map_err(RlError::InvalidHyperParams)?;
    let nt = hp.batch_frames as u64;
    if budget_frames < nt {
        return Err(RlError::BudgetTooSmall { budget: budget_frames, needed: nt });
    }
    let iterations = budget_frames / nt;

    let mut model = PpoModel::init(mode, hp, spec.action_limit(), rng);
    let mut adam = Adam::new(model.flat_len(), hp.learning_rate, hp.adam_beta1, hp.adam_beta2, hp.adam_eps);
    let mut actors = Actor::pool(spec, mode, rng.random(), hp.num_actors);
    let mut eval_env = spec.build(mode);
    let mut curve = Vec::with_capacity(iterations as usize);
    let mut frames = 0u64;

    for iteration in 0..iterations {
        let batch = collect_rollouts(&model, &mut actors, hp, hp.horizon())?;
        frames += batch.len() as u64;
        let update = ppo_update(&mut model, &mut adam, &batch, hp, rng)?;
        if let Some(norm) = model.obs_norm.as_mut() {
            norm.update(&batch.raw_observations);
        }
        let mean_episode_reward = if batch.completed_returns.is_empty() {
            f64::NAN
        } else {
            batch.completed_returns.iter().sum::<f64>() / batch.completed_returns.len() as f64
        };
        let eval_reward = run_episode(&mut eval_env, &model.mean_policy())?.fitness;
        curve.push(PpoCurvePoint { iteration, frames, mean_episode_reward, eval_reward, update });
    }
    Ok(TrainOutput { model, curve, frames })
}
