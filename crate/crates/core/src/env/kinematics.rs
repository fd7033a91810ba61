//! Leg kinematics and the planar stance registration that moves the body.

use super::hexapod::HexapodConfig;

/// Number of legs on the body.
pub const NUM_LEGS: usize = 6;
/// Actuated joints per leg: hip-yaw, hip-pitch, knee-pitch.
pub const JOINTS_PER_LEG: usize = 3;
/// Total actuated degrees of freedom.
pub const NUM_JOINTS: usize = NUM_LEGS * JOINTS_PER_LEG;

/// Planar body pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    /// Maps a body-frame planar point into the world frame.
    pub fn to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }
}

/// Planar rigid displacement of the body over one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseDelta {
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
}

/// Foot position of one leg in the body frame (x forward, y left, z up).
///
/// The chain is hip-yaw about the vertical axis through the hip, followed by
/// hip-pitch and knee-pitch about horizontal axes perpendicular to the leg
/// plane. Positive pitch raises the distal link. At zero angles the leg is a
/// straight horizontal line pointing radially outward from the body centre.
pub fn forward_kinematics(cfg: &HexapodConfig, leg: usize, angles: [f64; 3]) -> [f64; 3] {
    let hip = cfg.hip_offset(leg);
    let [l1, l2, l3] = cfg.segment_lengths;
    let heading = cfg.hip_angle(leg) + angles[0];
    let knee = angles[1] + angles[2];
    let reach = l1 + l2 * angles[1].cos() + l3 * knee.cos();
    let height = l2 * angles[1].sin() + l3 * knee.sin();
    let (s, c) = heading.sin_cos();
    [hip[0] + reach * c, hip[1] + reach * s, height]
}

/// Least-squares planar registration of the body against its stance anchors.
///
/// `anchors[i]` holds the world-frame touchdown point of leg `i` when it is in
/// persistent stance; `feet` are the current body-frame foot positions. Only
/// legs with `stance[i]` set and an anchor present contribute. The returned
/// delta moves `pose` to the rigid planar pose that minimizes the summed
/// squared slip between the mapped stance feet and their anchors.
///
/// A single contributing leg fixes translation only; yaw is held.
pub fn stance_transform(
    pose: &Pose2,
    anchors: &[Option<[f64; 2]>; NUM_LEGS],
    feet: &[[f64; 3]; NUM_LEGS],
    stance: &[bool; NUM_LEGS],
) -> PoseDelta {
    let mut n = 0usize;
    let mut a_mean = [0.0; 2];
    let mut b_mean = [0.0; 2];
    for i in 0..NUM_LEGS {
        if let (true, Some(a)) = (stance[i], anchors[i]) {
            n += 1;
            a_mean[0] += a[0];
            a_mean[1] += a[1];
            b_mean[0] += feet[i][0];
            b_mean[1] += feet[i][1];
        }
    }
    if n == 0 {
        return PoseDelta::default();
    }
    let inv = 1.0 / n as f64;
    a_mean = [a_mean[0] * inv, a_mean[1] * inv];
    b_mean = [b_mean[0] * inv, b_mean[1] * inv];

    let yaw = if n == 1 {
        pose.yaw
    } else {
        // Closed-form 2-D Procrustes rotation from the cross-covariance.
        let (mut dot, mut cross) = (0.0, 0.0);
        for i in 0..NUM_LEGS {
            if let (true, Some(a)) = (stance[i], anchors[i]) {
                let (ax, ay) = (a[0] - a_mean[0], a[1] - a_mean[1]);
                let (bx, by) = (feet[i][0] - b_mean[0], feet[i][1] - b_mean[1]);
                dot += bx * ax + by * ay;
                cross += bx * ay - by * ax;
            }
        }
        if dot == 0.0 && cross == 0.0 {
            pose.yaw
        } else {
            cross.atan2(dot)
        }
    };
    let (s, c) = yaw.sin_cos();
    let x = a_mean[0] - (c * b_mean[0] - s * b_mean[1]);
    let y = a_mean[1] - (s * b_mean[0] + c * b_mean[1]);
    PoseDelta {
        dx: x - pose.x,
        dy: y - pose.y,
        dyaw: wrap_angle(yaw - pose.yaw),
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a % TAU;
    if w <= -PI {
        w += TAU;
    } else if w > PI {
        w -= TAU;
    }
    w
}
