//! Parallel on-policy data collection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{compute_gae, PpoHyperParams, PpoModel, RlError};
use crate::env::{Env, EnvSpec, ControllerMode, Observation, NUM_JOINTS};
use crate::nn::mlp::Tape;

/// One environment instance with its own noise stream. Actors persist
/// across iterations, so an episode may span two rollouts.
#[derive(Debug, Clone)]
pub struct Actor {
    pub env: Env,
    obs: Observation,
    episode_return: f64,
    rng: ChaCha8Rng,
}

impl Actor {
    pub fn new(mut env: Env, seed: u64, stream: u64) -> Self {
        let obs = env.reset();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { env, obs, episode_return: 0.0, rng }
    }

    /// `count` actors on fresh instances of `spec`, streams `0..count`.
    pub fn pool(spec: &EnvSpec, mode: ControllerMode, seed: u64, count: usize) -> Vec<Actor> {
        (0..count).map(|k| Actor::new(spec.build(mode), seed, k as u64)).collect()
    }
}

/// Frame-major training data; actor segments are concatenated in actor order.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub obs_size: usize,
    /// Observations as fed to the networks (normalized if enabled).
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    /// Value targets: unnormalized advantage plus value prediction.
    pub returns: Vec<f64>,
    pub advantages_normalized: bool,
    /// Returns of episodes that finished during this rollout.
    pub completed_returns: Vec<f64>,
    /// Raw observations, kept for the normalizer update.
    pub raw_observations: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Default)]
struct Segment {
    observations: Vec<f64>,
    raw_observations: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    completed: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

fn run_actor(actor: &mut Actor, model: &PpoModel, hp: &PpoHyperParams, horizon: usize) -> Result<Segment, RlError> {
    let obs_size = model.policy.arch.input_size;
    let mut seg = Segment::default();
    let mut tape = Tape::default();
    let mut prepared = Vec::with_capacity(obs_size);
    let mut action = [0.0; NUM_JOINTS];
    for _ in 0..horizon {
        model.prepare(&actor.obs, &mut prepared);
        let logp = model.policy.sample(&prepared, &mut tape, &mut actor.rng, &mut action);
        let value = model.value_of(&prepared, &mut tape);
        let out = actor.env.step(&action)?;
        seg.raw_observations.extend_from_slice(&actor.obs);
        seg.observations.extend_from_slice(&prepared);
        seg.actions.extend_from_slice(&action);
        seg.log_probs.push(logp);
        seg.values.push(value);
        seg.rewards.push(out.reward);
        seg.dones.push(out.done);
        actor.episode_return += out.reward;
        if out.done {
            seg.completed.push(actor.episode_return);
            actor.episode_return = 0.0;
            actor.obs = actor.env.reset();
        } else {
            actor.obs = out.observation;
        }
    }
    let bootstrap = if seg.dones.last().copied().unwrap_or(true) {
        0.0
    } else {
        model.prepare(&actor.obs, &mut prepared);
        model.value_of(&prepared, &mut tape)
    };
    let (adv, ret) = compute_gae(&seg.rewards, &seg.values, &seg.dones, bootstrap, hp.gamma, hp.gae_lambda);
    seg.advantages = adv;
    seg.returns = ret;
    Ok(seg)
}

/// Steps every actor `horizon` frames under the sampling policy and
/// assembles the batch with GAE advantages.
pub fn collect_rollouts(
    model: &PpoModel,
    actors: &mut [Actor],
    hp: &PpoHyperParams,
    horizon: usize,
) -> Result<RolloutBatch, RlError> {
    let segments: Vec<Segment> = actors
        .par_iter_mut()
        .map(|actor| run_actor(actor, model, hp, horizon))
        .collect::<Result<_, _>>()?;

    let total = horizon * actors.len();
    let obs_size = model.policy.arch.input_size;
    let mut batch = RolloutBatch {
        obs_size,
        observations: Vec::with_capacity(total * obs_size),
        actions: Vec::with_capacity(total * NUM_JOINTS),
        log_probs: Vec::with_capacity(total),
        rewards: Vec::with_capacity(total),
        values: Vec::with_capacity(total),
        dones: Vec::with_capacity(total),
        advantages: Vec::with_capacity(total),
        returns: Vec::with_capacity(total),
        advantages_normalized: hp.normalize_advantages,
        completed_returns: Vec::new(),
        raw_observations: Vec::with_capacity(total * obs_size),
    };
    for s in segments {
        batch.observations.extend(s.observations);
        batch.raw_observations.extend(s.raw_observations);
        batch.actions.extend(s.actions);
        batch.log_probs.extend(s.log_probs);
        batch.rewards.extend(s.rewards);
        batch.values.extend(s.values);
        batch.dones.extend(s.dones);
        batch.advantages.extend(s.advantages);
        batch.returns.extend(s.returns);
        batch.completed_returns.extend(s.completed);
    }
    if hp.normalize_advantages {
        normalize(&mut batch.advantages);
    }
    Ok(batch)
}

/// Shifts to mean 0 and scales to unit standard deviation (a constant
/// vector is only centred).
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scale = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
    for x in xs {
        *x = (*x - mean) * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::HexapodConfig;

    fn model(hp: &PpoHyperParams, mode: ControllerMode) -> PpoModel {
        PpoModel::init(mode, hp, std::f64::consts::FRAC_PI_4, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn one_actor_one_episode_sums_to_fitness() {
        let spec = EnvSpec::Hexapod(HexapodConfig::default());
        let hp = PpoHyperParams { num_actors: 1, batch_frames: 333, num_minibatches: 1, ..Default::default() };
        let mut m = model(&hp, ControllerMode::OpenLoop);
        // Collapse the noise so the episode can be replayed by the mean policy.
        m.policy.log_std.iter_mut().for_each(|s| *s = (1e-8f64).ln());
        let mut actors = Actor::pool(&spec, ControllerMode::OpenLoop, 5, 1);
        let batch = collect_rollouts(&m, &mut actors, &hp, 333).unwrap();
        assert_eq!(batch.len(), 333);
        assert_eq!(batch.dones.iter().filter(|&&d| d).count(), 1);
        assert!(batch.dones[332]);
        let sum: f64 = batch.rewards.iter().sum();
        assert_eq!(batch.completed_returns, vec![sum]);
        let mut env = spec.build(ControllerMode::OpenLoop);
        let replay = crate::env::run_episode(&mut env, &m.mean_policy()).unwrap();
        assert!((replay.fitness - sum).abs() < 1e-6, "{} vs {}", replay.fitness, sum);
    }

    #[test]
    fn fixed_seeds_give_identical_batches() {
        let spec = EnvSpec::Hexapod(HexapodConfig::default());
        let hp = PpoHyperParams { num_actors: 4, batch_frames: 400, num_minibatches: 4, ..Default::default() };
        let m = model(&hp, ControllerMode::ClosedLoop);
        let run = || {
            let mut actors = Actor::pool(&spec, ControllerMode::ClosedLoop, 11, 4);
            collect_rollouts(&m, &mut actors, &hp, 100).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn returns_are_raw_advantage_plus_value() {
        let spec = EnvSpec::Oracle(Default::default());
        let base = PpoHyperParams { num_actors: 2, batch_frames: 200, num_minibatches: 2, ..Default::default() };
        let m = model(&base, ControllerMode::ClosedLoop);
        let collect = |norm| {
            let hp = PpoHyperParams { normalize_advantages: norm, ..base.clone() };
            let mut actors = Actor::pool(&spec, ControllerMode::ClosedLoop, 2, 2);
            collect_rollouts(&m, &mut actors, &hp, 100).unwrap()
        };
        let raw = collect(false);
        let normed = collect(true);
        assert_eq!(raw.returns, normed.returns);
        for i in 0..raw.len() {
            assert!((raw.returns[i] - raw.advantages[i] - raw.values[i]).abs() < 1e-12);
        }
        let mean = normed.advantages.iter().sum::<f64>() / 200.0;
        let var = normed.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 200.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        assert!(normed.advantages_normalized && !raw.advantages_normalized);
    }
}
