//! Deterministic locomotion environments behind one interface.

pub mod hexapod;
pub mod kinematics;
pub mod oracle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hexapod::{HexapodConfig, HexapodEnv, EPISODE_FRAMES};
pub use kinematics::{forward_kinematics, stance_transform, Pose2, PoseDelta, NUM_JOINTS, NUM_LEGS};
pub use oracle::{OracleConfig, OracleEnv};

pub type Observation = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("step called after the episode finished")]
    StepAfterDone,
    #[error("action component {index} is not finite")]
    NonFiniteAction { index: usize },
    #[error("action has {got} components, expected {expected}")]
    ActionWidth { expected: usize, got: usize },
    #[error("policy takes {got} inputs but the controller mode provides {expected}")]
    PolicyWidth { expected: usize, got: usize },
}

/// What the policy sees: the gait phase only, or the full joint state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerMode {
    OpenLoop,
    ClosedLoop,
}

impl ControllerMode {
    pub fn obs_size(self) -> usize {
        match self {
            ControllerMode::OpenLoop => 1,
            ControllerMode::ClosedLoop => NUM_JOINTS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerMode::OpenLoop => "open-loop",
            ControllerMode::ClosedLoop => "closed-loop",
        }
    }
}

impl std::str::FromStr for ControllerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "open-loop" => Ok(ControllerMode::OpenLoop),
            "closed-loop" => Ok(ControllerMode::ClosedLoop),
            other => Err(format!("unknown controller mode `{other}` (open-loop | closed-loop)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    /// Body displacement along X this frame, meters.
    pub reward: f64,
    pub done: bool,
    pub contacts: [bool; NUM_LEGS],
}

/// Outcome of one full episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Final body X minus initial body X, meters.
    pub fitness: f64,
    /// Per-leg share of frames spent in stance.
    pub contact_fraction: [f64; NUM_LEGS],
    pub frames: usize,
}

/// Environment description from which independent instances are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvSpec {
    Hexapod(HexapodConfig),
    Oracle(OracleConfig),
}

impl EnvSpec {
    pub fn build(&self, mode: ControllerMode) -> Env {
        match self {
            EnvSpec::Hexapod(cfg) => Env::Hexapod(HexapodEnv::new(cfg.clone(), mode)),
            EnvSpec::Oracle(cfg) => Env::Oracle(OracleEnv::new(cfg.clone(), mode)),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            EnvSpec::Hexapod(cfg) => cfg.validate(),
            EnvSpec::Oracle(cfg) => cfg.validate(),
        }
    }

    pub fn episode_len(&self) -> usize {
        match self {
            EnvSpec::Hexapod(cfg) => cfg.episode_len,
            EnvSpec::Oracle(cfg) => cfg.episode_len,
        }
    }

    /// Range the policy output is squashed into.
    pub fn action_limit(&self) -> f64 {
        match self {
            EnvSpec::Hexapod(cfg) => cfg.joint_limit,
            EnvSpec::Oracle(_) => std::f64::consts::FRAC_PI_4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Hexapod(_) => "hexapod",
            EnvSpec::Oracle(_) => "oracle",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Env {
    Hexapod(HexapodEnv),
    Oracle(OracleEnv),
}

impl Env {
    pub fn reset(&mut self) -> Observation {
        match self {
            Env::Hexapod(e) => e.reset(),
            Env::Oracle(e) => e.reset(),
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        match self {
            Env::Hexapod(e) => e.step(action),
            Env::Oracle(e) => e.step(action),
        }
    }

    pub fn episode_len(&self) -> usize {
        match self {
            Env::Hexapod(e) => e.config().episode_len,
            Env::Oracle(e) => e.config().episode_len,
        }
    }

    pub fn mode(&self) -> ControllerMode {
        match self {
            Env::Hexapod(e) => e.mode(),
            Env::Oracle(e) => e.mode(),
        }
    }
}

/// A deterministic map from observation to an 18-joint action.
pub trait Policy {
    fn input_size(&self) -> usize;
    fn act(&self, observation: &[f64], action: &mut [f64]);
}

impl<F: Fn(&[f64], &mut [f64])> Policy for (usize, F) {
    fn input_size(&self) -> usize {
        self.0
    }
    fn act(&self, observation: &[f64], action: &mut [f64]) {
        (self.1)(observation, action)
    }
}

/// Resets `env` and plays one full episode with `policy`.
pub fn run_episode<P: Policy + ?Sized>(env: &mut Env, policy: &P) -> Result<EpisodeResult, EnvError> {
    let expected = env.mode().obs_size();
    if policy.input_size() != expected {
        return Err(EnvError::PolicyWidth { expected, got: policy.input_size() });
    }
    let mut obs = env.reset();
    let mut action = [0.0; NUM_JOINTS];
    let mut stance_frames = [0usize; NUM_LEGS];
    let mut fitness = 0.0;
    let mut frames = 0;
    loop {
        policy.act(&obs, &mut action);
        let out = env.step(&action)?;
        fitness += out.reward;
        frames += 1;
        for (count, &c) in stance_frames.iter_mut().zip(&out.contacts) {
            *count += c as usize;
        }
        obs = out.observation;
        if out.done {
            break;
        }
    }
    let contact_fraction = stance_frames.map(|c| c as f64 / frames as f64);
    Ok(EpisodeResult { fitness, contact_fraction, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_policy(mode: ControllerMode) -> (usize, impl Fn(&[f64], &mut [f64])) {
        (mode.obs_size(), |_: &[f64], a: &mut [f64]| a.fill(0.0))
    }

    #[test]
    fn static_robot_goes_nowhere() {
        for mode in [ControllerMode::OpenLoop, ControllerMode::ClosedLoop] {
            let mut env = EnvSpec::Hexapod(HexapodConfig::default()).build(mode);
            let r = run_episode(&mut env, &zero_policy(mode)).unwrap();
            assert_eq!(r.fitness, 0.0);
            assert_eq!(r.frames, EPISODE_FRAMES);
            // Neutral feet sit level with the hips, well above the ground.
            assert_eq!(r.contact_fraction, [0.0; NUM_LEGS]);
        }
    }

    #[test]
    fn policy_width_checked() {
        let mut env = EnvSpec::Hexapod(HexapodConfig::default()).build(ControllerMode::ClosedLoop);
        let err = run_episode(&mut env, &zero_policy(ControllerMode::OpenLoop)).unwrap_err();
        assert_eq!(err, EnvError::PolicyWidth { expected: 18, got: 1 });
    }

    #[test]
    fn non_finite_action_propagates() {
        let mut env = EnvSpec::Oracle(OracleConfig::default()).build(ControllerMode::OpenLoop);
        let bad = (1usize, |_: &[f64], a: &mut [f64]| a.fill(f64::NAN));
        assert_eq!(
            run_episode(&mut env, &bad).unwrap_err(),
            EnvError::NonFiniteAction { index: 0 }
        );
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("open-loop".parse::<ControllerMode>().unwrap(), ControllerMode::OpenLoop);
        assert_eq!("closed-loop".parse::<ControllerMode>().unwrap(), ControllerMode::ClosedLoop);
        assert!("closed".parse::<ControllerMode>().is_err());
    }
}
