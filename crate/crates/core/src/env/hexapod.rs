//! Kinematic hexapod surrogate.
//!
//! The body rides at a fixed height; each foot whose world height is at or
//! below the contact tolerance is in stance. Stance feet are pinned to the
//! ground where they touched down and the body pose is re-registered against
//! those anchors every step, so sweeping stance feet backward moves the body
//! forward.

use serde::{Deserialize, Serialize};

use super::kinematics::{
    forward_kinematics, stance_transform, Pose2, JOINTS_PER_LEG, NUM_JOINTS, NUM_LEGS,
};
use super::{ControllerMode, EnvError, Observation, StepOutcome};

/// Episode duration in seconds.
pub const EPISODE_SECONDS: f64 = 5.0;
/// Frames per episode.
pub const EPISODE_FRAMES: usize = 333;
/// Period of the open-loop phase input, seconds.
pub const GAIT_PERIOD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexapodConfig {
    /// Seconds per frame.
    pub dt: f64,
    pub episode_len: usize,
    /// Distance of each hip from the body centre; hips sit on a regular hexagon.
    pub hip_radius: f64,
    /// Coxa, femur and tibia lengths in meters.
    pub segment_lengths: [f64; 3],
    /// Symmetric joint range, radians.
    pub joint_limit: f64,
    /// Actuator rate limit, radians per second.
    pub max_joint_speed: f64,
    /// Height of the hip plane above the ground.
    pub body_half_height: f64,
    pub contact_tolerance: f64,
}

impl Default for HexapodConfig {
    fn default() -> Self {
        Self {
            dt: EPISODE_SECONDS / EPISODE_FRAMES as f64,
            episode_len: EPISODE_FRAMES,
            hip_radius: 0.12,
            segment_lengths: [0.06, 0.085, 0.14],
            joint_limit: std::f64::consts::FRAC_PI_4,
            max_joint_speed: 6.0,
            body_half_height: 0.1,
            contact_tolerance: 1e-6,
        }
    }
}

impl HexapodConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.episode_len == 0 {
            return Err("episode_len must be positive".into());
        }
        if self.dt * self.episode_len as f64 != EPISODE_SECONDS {
            return Err(format!(
                "dt * episode_len must equal {EPISODE_SECONDS} s, got {}",
                self.dt * self.episode_len as f64
            ));
        }
        let lengths_ok = self.segment_lengths.iter().all(|l| l.is_finite() && *l > 0.0);
        if !lengths_ok || !(self.hip_radius > 0.0) || !(self.body_half_height > 0.0) {
            return Err("all lengths must be strictly positive".into());
        }
        if !(self.joint_limit > 0.0 && self.joint_limit <= std::f64::consts::PI) {
            return Err("joint_limit must lie in (0, pi]".into());
        }
        if !(self.max_joint_speed > 0.0) || !self.max_joint_speed.is_finite() {
            return Err("max_joint_speed must be positive".into());
        }
        if !(self.contact_tolerance >= 0.0) {
            return Err("contact_tolerance must be non-negative".into());
        }
        Ok(())
    }

    /// Heading of leg `leg`'s hip on the hexagon: 30, 90, ..., 330 degrees.
    pub fn hip_angle(&self, leg: usize) -> f64 {
        (30.0 + 60.0 * leg as f64).to_radians()
    }

    pub fn hip_offset(&self, leg: usize) -> [f64; 2] {
        let a = self.hip_angle(leg);
        [self.hip_radius * a.cos(), self.hip_radius * a.sin()]
    }

    /// Largest joint change per frame.
    pub fn max_step(&self) -> f64 {
        self.max_joint_speed * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub joint_angles: [f64; NUM_JOINTS],
    pub pose: Pose2,
    pub step_index: usize,
    /// World-frame touchdown points of legs currently in stance.
    pub anchors: [Option<[f64; 2]>; NUM_LEGS],
}

impl Default for EnvState {
    fn default() -> Self {
        Self {
            joint_angles: [0.0; NUM_JOINTS],
            pose: Pose2::default(),
            step_index: 0,
            anchors: [None; NUM_LEGS],
        }
    }
}

#[derive(Debug, Clone)]
pub struct HexapodEnv {
    cfg: HexapodConfig,
    mode: ControllerMode,
    state: EnvState,
}

impl HexapodEnv {
    pub fn new(cfg: HexapodConfig, mode: ControllerMode) -> Self {
        Self { cfg, mode, state: EnvState::default() }
    }

    pub fn config(&self) -> &HexapodConfig {
        &self.cfg
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn reset(&mut self) -> Observation {
        self.state = EnvState::default();
        let feet = self.feet();
        let ground = self.cfg.contact_tolerance - self.cfg.body_half_height;
        for (anchor, foot) in self.state.anchors.iter_mut().zip(&feet) {
            if foot[2] <= ground {
                *anchor = Some([foot[0], foot[1]]);
            }
        }
        self.observe()
    }

    /// Body-frame foot positions for the current joint angles.
    pub fn feet(&self) -> [[f64; 3]; NUM_LEGS] {
        feet_for(&self.cfg, &self.state.joint_angles)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if self.state.step_index >= self.cfg.episode_len {
            return Err(EnvError::StepAfterDone);
        }
        check_action(action)?;

        let limit = self.cfg.joint_limit;
        let max_step = self.cfg.max_step();
        let mut moved = false;
        for (q, &a) in self.state.joint_angles.iter_mut().zip(action) {
            let target = a.clamp(-limit, limit);
            let dq = (target - *q).clamp(-max_step, max_step);
            moved |= dq != 0.0;
            *q += dq;
        }
        if !moved {
            // Feet are where they were: contacts, anchors and pose are unchanged.
            let contacts: [bool; NUM_LEGS] = std::array::from_fn(|i| self.state.anchors[i].is_some());
            self.state.step_index += 1;
            return Ok(StepOutcome {
                observation: self.observe(),
                reward: 0.0,
                done: self.state.step_index >= self.cfg.episode_len,
                contacts,
            });
        }

        let feet = self.feet();
        let ground = self.cfg.contact_tolerance - self.cfg.body_half_height;
        let contacts: [bool; NUM_LEGS] = std::array::from_fn(|i| feet[i][2] <= ground);

        // Legs leaving stance drop their anchors before registration.
        for (anchor, &c) in self.state.anchors.iter_mut().zip(&contacts) {
            if !c {
                *anchor = None;
            }
        }
        let delta = stance_transform(&self.state.pose, &self.state.anchors, &feet, &contacts);
        let pose = &mut self.state.pose;
        pose.x += delta.dx;
        pose.y += delta.dy;
        pose.yaw = super::kinematics::wrap_angle(pose.yaw + delta.dyaw);

        let pose = self.state.pose;
        for i in 0..NUM_LEGS {
            if contacts[i] && self.state.anchors[i].is_none() {
                self.state.anchors[i] = Some(pose.to_world([feet[i][0], feet[i][1]]));
            }
        }

        self.state.step_index += 1;
        Ok(StepOutcome {
            observation: self.observe(),
            reward: delta.dx,
            done: self.state.step_index >= self.cfg.episode_len,
            contacts,
        })
    }

    fn observe(&self) -> Observation {
        match self.mode {
            ControllerMode::OpenLoop => vec![phase(self.state.step_index, self.cfg.dt)],
            ControllerMode::ClosedLoop => self.state.joint_angles.to_vec(),
        }
    }
}

pub(crate) fn feet_for(cfg: &HexapodConfig, q: &[f64; NUM_JOINTS]) -> [[f64; 3]; NUM_LEGS] {
    std::array::from_fn(|leg| {
        let j = leg * JOINTS_PER_LEG;
        forward_kinematics(cfg, leg, [q[j], q[j + 1], q[j + 2]])
    })
}

/// Open-loop input: elapsed time modulo the gait period, normalized to [0, 1).
pub fn phase(step_index: usize, dt: f64) -> f64 {
    let t = step_index as f64 * dt;
    (t % GAIT_PERIOD) / GAIT_PERIOD
}

pub(crate) fn check_action(action: &[f64]) -> Result<(), EnvError> {
    if action.len() != NUM_JOINTS {
        return Err(EnvError::ActionWidth { expected: NUM_JOINTS, got: action.len() });
    }
    if let Some(index) = action.iter().position(|a| !a.is_finite()) {
        return Err(EnvError::NonFiniteAction { index });
    }
    Ok(())
}
