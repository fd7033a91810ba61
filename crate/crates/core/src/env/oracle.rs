//! Quadratic oracle environment with a known optimum.
//!
//! Every frame pays `-|action - target|^2`, so an episode that plays the
//! target throughout scores exactly zero and anything else scores below it.

use serde::{Deserialize, Serialize};

use super::hexapod::{check_action, phase, EPISODE_FRAMES, EPISODE_SECONDS};
use super::kinematics::{NUM_JOINTS, NUM_LEGS};
use super::{ControllerMode, EnvError, Observation, StepOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub target: Vec<f64>,
    pub episode_len: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { target: default_target(), episode_len: EPISODE_FRAMES }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.target.len() != NUM_JOINTS {
            return Err(format!("oracle target needs {NUM_JOINTS} values, got {}", self.target.len()));
        }
        if !self.target.iter().all(|t| t.is_finite()) {
            return Err("oracle target must be finite".into());
        }
        if self.episode_len == 0 {
            return Err("episode_len must be positive".into());
        }
        Ok(())
    }
}

/// Fixed optimum, well inside the policy output range.
pub fn default_target() -> Vec<f64> {
    (0..NUM_JOINTS).map(|i| 0.4 * (1.3 * (i + 1) as f64).sin()).collect()
}

#[derive(Debug, Clone)]
pub struct OracleEnv {
    cfg: OracleConfig,
    mode: ControllerMode,
    step_index: usize,
    last_action: [f64; NUM_JOINTS],
}

impl OracleEnv {
    pub fn new(cfg: OracleConfig, mode: ControllerMode) -> Self {
        Self { cfg, mode, step_index: 0, last_action: [0.0; NUM_JOINTS] }
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    pub fn reset(&mut self) -> Observation {
        self.step_index = 0;
        self.last_action = [0.0; NUM_JOINTS];
        self.observe()
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if self.step_index >= self.cfg.episode_len {
            return Err(EnvError::StepAfterDone);
        }
        check_action(action)?;
        let reward = -action
            .iter()
            .zip(&self.cfg.target)
            .map(|(a, t)| (a - t) * (a - t))
            .sum::<f64>();
        // A leg "touches down" when its hip-pitch command is at or above the
        // target's; gives MAP-Elites a descriptor to spread over.
        let contacts: [bool; NUM_LEGS] =
            std::array::from_fn(|leg| action[3 * leg + 1] >= self.cfg.target[3 * leg + 1]);
        self.last_action.copy_from_slice(action);
        self.step_index += 1;
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done: self.step_index >= self.cfg.episode_len,
            contacts,
        })
    }

    fn observe(&self) -> Observation {
        match self.mode {
            ControllerMode::OpenLoop => {
                let dt = EPISODE_SECONDS / self.cfg.episode_len as f64;
                vec![phase(self.step_index, dt)]
            }
            ControllerMode::ClosedLoop => self.last_action.to_vec(),
        }
    }
}
