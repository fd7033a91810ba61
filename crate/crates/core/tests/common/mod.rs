//! Reference implementations the library is checked against. Each one is
//! written the slow, obvious way and shares no code with the crate.
#![allow(dead_code)]

use std::f64::consts::PI;

use hexbench::env::{HexapodConfig, Pose2, NUM_JOINTS, NUM_LEGS};

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm, with `floor` guarding
/// near-zero vectors.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}

// ---------------------------------------------------------------- GAE

/// Truncated lambda-return form: each advantage is the `(1 - lambda)`-weighted
/// mixture of k-step advantages, with the remaining mass on the longest one.
pub fn gae_bruteforce(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let value_after = |t: usize| -> f64 {
        // Value of the state reached after frame t.
        if dones[t] {
            0.0
        } else if t + 1 < n {
            values[t + 1]
        } else {
            bootstrap
        }
    };
    (0..n)
        .map(|t| {
            // Horizon: frames t..t+h, stopping at the first done or segment end.
            let mut h = 1;
            while t + h - 1 < n - 1 && !dones[t + h - 1] {
                h += 1;
            }
            let k_step = |k: usize| -> f64 {
                let mut g = 0.0;
                for l in 0..k {
                    g += gamma.powi(l as i32) * rewards[t + l];
                }
                g + gamma.powi(k as i32) * value_after(t + k - 1) - values[t]
            };
            let mut a = 0.0;
            for k in 1..h {
                a += (1.0 - lambda) * lambda.powi(k as i32 - 1) * k_step(k);
            }
            a + lambda.powi(h as i32 - 1) * k_step(h)
        })
        .collect()
}

// ---------------------------------------------------------------- Wilcoxon

/// Two-sided signed-rank p-value by enumerating all sign assignments.
/// Assumes nonzero, tie-free differences.
pub fn wilcoxon_enumeration(diffs: &[f64]) -> (f64, f64) {
    let n = diffs.len();
    assert!(n <= 20);
    // Plain ranks from a selection count.
    let ranks: Vec<u32> = diffs
        .iter()
        .map(|d| 1 + diffs.iter().filter(|e| e.abs() < d.abs()).count() as u32)
        .collect();
    let total: u32 = ranks.iter().sum();
    let w_plus: u32 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let centre = total as f64 / 2.0;
    let observed = (w_plus as f64 - centre).abs();
    let mut extreme = 0u64;
    for mask in 0u32..(1 << n) {
        let t: u32 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if (t as f64 - centre).abs() >= observed {
            extreme += 1;
        }
    }
    let w = w_plus.min(total - w_plus) as f64;
    (w, extreme as f64 / (1u64 << n) as f64)
}

// ---------------------------------------------------------------- KS

/// Kolmogorov-Smirnov statistic of `samples` against Uniform(lo, hi).
pub fn ks_uniform(samples: &[f64], lo: f64, hi: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic two-sided KS critical value at significance 0.001.
pub fn ks_critical_001(n: usize) -> f64 {
    1.949 / (n as f64).sqrt()
}

// ---------------------------------------------------------------- registration

/// Sum of squared planar slips of `feet` (body frame) mapped by `pose`
/// against `anchors` (world frame).
pub fn slip(pose: &Pose2, feet: &[[f64; 2]], anchors: &[[f64; 2]]) -> f64 {
    let (s, c) = pose.yaw.sin_cos();
    feet.iter()
        .zip(anchors)
        .map(|(f, a)| {
            let wx = pose.x + c * f[0] - s * f[1];
            let wy = pose.y + s * f[0] + c * f[1];
            (wx - a[0]).powi(2) + (wy - a[1]).powi(2)
        })
        .sum()
}

/// Least-slip pose by exhaustive yaw search: a coarse grid over the circle,
/// then repeated local grids of shrinking width. For a fixed yaw the best
/// translation is the mean residual.
pub fn brute_registration(feet: &[[f64; 2]], anchors: &[[f64; 2]]) -> Pose2 {
    let at_yaw = |yaw: f64| -> Pose2 {
        let (s, c) = yaw.sin_cos();
        let n = feet.len() as f64;
        let mut x = 0.0;
        let mut y = 0.0;
        for (f, a) in feet.iter().zip(anchors) {
            x += a[0] - (c * f[0] - s * f[1]);
            y += a[1] - (s * f[0] + c * f[1]);
        }
        Pose2 { x: x / n, y: y / n, yaw }
    };
    let cost = |yaw: f64| slip(&at_yaw(yaw), feet, anchors);
    let mut best = 0.0;
    let mut best_cost = f64::INFINITY;
    let coarse = 3600;
    for k in 0..coarse {
        let yaw = -PI + 2.0 * PI * k as f64 / coarse as f64;
        let c = cost(yaw);
        if c < best_cost {
            best_cost = c;
            best = yaw;
        }
    }
    let mut width = 2.0 * PI / coarse as f64;
    for _ in 0..40 {
        let centre = best;
        for k in -20..=20 {
            let yaw = centre + width * k as f64 / 10.0;
            let c = cost(yaw);
            if c < best_cost {
                best_cost = c;
                best = yaw;
            }
        }
        width /= 5.0;
    }
    at_yaw(best)
}

pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

// ---------------------------------------------------------------- tripod gait

/// Inverse kinematics for one leg: joint angles placing the foot at the
/// body-frame point `foot`. Knee bent downward.
pub fn leg_ik(cfg: &HexapodConfig, leg: usize, foot: [f64; 3]) -> [f64; 3] {
    let hip_angle = (30.0 + 60.0 * leg as f64).to_radians();
    let hip = [cfg.hip_radius * hip_angle.cos(), cfg.hip_radius * hip_angle.sin()];
    let [l1, l2, l3] = cfg.segment_lengths;
    let vx = foot[0] - hip[0];
    let vy = foot[1] - hip[1];
    let mut yaw = vy.atan2(vx) - hip_angle;
    yaw = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    let r = (vx * vx + vy * vy).sqrt() - l1;
    let z = foot[2];
    let cos_knee = (r * r + z * z - l2 * l2 - l3 * l3) / (2.0 * l2 * l3);
    let knee = -cos_knee.clamp(-1.0, 1.0).acos();
    let pitch = z.atan2(r) - (l3 * knee.sin()).atan2(l2 + l3 * knee.cos());
    [yaw, pitch, knee]
}

/// Alternating-tripod script. Legs 0, 2, 4 and 1, 3, 5 take turns: a stance
/// half sweeps its feet backward by `delta` per frame for `sweep` frames,
/// then both tripods swap vertically in a single frame.
pub struct TripodScript {
    pub cfg: HexapodConfig,
    pub delta: f64,
    pub sweep: usize,
    pub warmup: usize,
    pub reach: f64,
    pub z_down: f64,
    pub z_up: f64,
}

impl TripodScript {
    pub fn new(cfg: HexapodConfig) -> Self {
        let ground = cfg.contact_tolerance - cfg.body_half_height;
        Self {
            delta: 0.001,
            sweep: 10,
            warmup: 20,
            reach: cfg.segment_lengths[0] + 0.19,
            z_down: ground - 5e-4,
            z_up: ground + 3e-3,
            cfg,
        }
    }

    fn period(&self) -> usize {
        2 * (self.sweep + 1)
    }

    /// `(x offset, grounded)` of a tripod at cycle position `u`.
    fn tripod_state(&self, u: usize) -> (f64, bool) {
        let k = self.sweep;
        let half = k as f64 * self.delta / 2.0;
        if u <= k {
            // u = 0 touches down; 1..=k sweep backward.
            (half - u as f64 * self.delta, true)
        } else {
            // u = k + 1 lifts; the rest swing forward.
            (-half + (u - k - 1) as f64 * self.delta, false)
        }
    }

    /// Per-leg `(x offset, grounded)` at gait frame `g`.
    fn leg_state(&self, leg: usize, g: usize) -> (f64, bool) {
        let shift = if leg % 2 == 0 { 0 } else { self.sweep + 1 };
        self.tripod_state((g + shift) % self.period())
    }

    fn foot(&self, leg: usize, offset: f64, grounded: bool) -> [f64; 3] {
        let a = (30.0 + 60.0 * leg as f64).to_radians();
        let rho = self.cfg.hip_radius + self.reach;
        [rho * a.cos() + offset, rho * a.sin(), if grounded { self.z_down } else { self.z_up }]
    }

    fn gait_pose(&self, g: usize) -> [f64; NUM_JOINTS] {
        let mut q = [0.0; NUM_JOINTS];
        for leg in 0..NUM_LEGS {
            let (x, down) = self.leg_state(leg, g);
            q[leg * 3..leg * 3 + 3].copy_from_slice(&leg_ik(&self.cfg, leg, self.foot(leg, x, down)));
        }
        q
    }

    /// Pose before gait frame 0: every foot lifted where its tripod will
    /// next be.
    fn start_pose(&self) -> [f64; NUM_JOINTS] {
        let mut q = [0.0; NUM_JOINTS];
        for leg in 0..NUM_LEGS {
            let (x, _) = self.leg_state(leg, 0);
            q[leg * 3..leg * 3 + 3].copy_from_slice(&leg_ik(&self.cfg, leg, self.foot(leg, x, false)));
        }
        q
    }

    /// Joint targets for frame `t` of the episode (frame 0 is the first step).
    pub fn action(&self, t: usize) -> [f64; NUM_JOINTS] {
        if t < self.warmup {
            let s = (t + 1) as f64 / self.warmup as f64;
            self.start_pose().map(|q| q * s)
        } else {
            self.gait_pose(t - self.warmup)
        }
    }

    /// Whether the script puts leg `leg` on the ground at frame `t`.
    pub fn grounded(&self, leg: usize, t: usize) -> bool {
        t >= self.warmup && self.leg_state(leg, t - self.warmup).1
    }

    /// Hand-derived body advance at frame `t`: a tripod that was already
    /// anchored and sweeps its feet back by `delta` carries the body forward
    /// by exactly `delta`; touchdown frames have no anchored feet.
    pub fn expected_reward(&self, t: usize) -> f64 {
        if t <= self.warmup {
            return 0.0;
        }
        let g = t - self.warmup;
        let u = g % (self.sweep + 1);
        if u == 0 {
            0.0
        } else {
            self.delta
        }
    }
}

// ---------------------------------------------------------------- Adam

/// First Adam step from zero moments: bias correction makes it
/// `-lr * g / (|g| + eps)` per coordinate.
pub fn adam_first_step(params: &[f64], grad: &[f64], lr: f64, eps: f64) -> Vec<f64> {
    params.iter().zip(grad).map(|(p, g)| p - lr * g / (g.abs() + eps)).collect()
}

// ---------------------------------------------------------------- PPO fixtures

use hexbench::env::ControllerMode;
use hexbench::nn::{forward, ParamVector};
use hexbench::rl::{PpoHyperParams, PpoModel, RolloutBatch};
use rand::Rng;

/// Diagonal Gaussian log-density, written out term by term.
pub fn log_density(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), x)| {
            let s = ls.exp();
            -0.5 * ((x - m) / s).powi(2) - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// A model with randomized log-stds plus a synthetic batch of `n` frames
/// whose behaviour log-probs put every ratio at least `margin` away from
/// both clip boundaries.
pub fn synthetic_batch<R: Rng>(
    mode: ControllerMode,
    hp: &PpoHyperParams,
    n: usize,
    margin: f64,
    rng: &mut R,
) -> (PpoModel, RolloutBatch) {
    let mut model = PpoModel::init(mode, hp, std::f64::consts::FRAC_PI_4, rng);
    for ls in model.policy.log_std.iter_mut() {
        *ls = rng.random_range(-1.5..0.0);
    }
    let obs_size = mode.obs_size();
    let mut batch = RolloutBatch {
        obs_size,
        observations: Vec::new(),
        actions: Vec::new(),
        log_probs: Vec::new(),
        rewards: vec![0.0; n],
        values: vec![0.0; n],
        dones: vec![false; n],
        advantages: Vec::new(),
        returns: Vec::new(),
        advantages_normalized: false,
        completed_returns: Vec::new(),
        raw_observations: Vec::new(),
    };
    for _ in 0..n {
        let obs: Vec<f64> = (0..obs_size).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = forward(&model.policy.mean, &model.policy.arch, &obs).unwrap();
        let action: Vec<f64> = mean
            .iter()
            .zip(&model.policy.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.random_range(-2.0..2.0))
            .collect();
        let current = log_density(&mean, &model.policy.log_std, &action);
        let shift = loop {
            let s: f64 = rng.random_range(-0.6..0.6);
            let r = s.exp();
            if (r - 1.0 - hp.clip_eps).abs() > margin && (r - 1.0 + hp.clip_eps).abs() > margin {
                break s;
            }
        };
        batch.observations.extend_from_slice(&obs);
        batch.raw_observations.extend_from_slice(&obs);
        batch.actions.extend_from_slice(&action);
        batch.log_probs.push(current - shift);
        batch.advantages.push(rng.random_range(-2.0..2.0));
        batch.returns.push(rng.random_range(-2.0..2.0));
    }
    (model, batch)
}

/// Total PPO loss written from its definition: the negated clipped
/// surrogate, plus `c1` times the squared value error, minus `c2` times
/// the Gaussian entropy, averaged over `indices`.
pub fn reference_loss(model: &PpoModel, hp: &PpoHyperParams, batch: &RolloutBatch, indices: &[usize]) -> f64 {
    let k = batch.obs_size;
    let m = indices.len() as f64;
    let mut surrogate = 0.0;
    let mut value_err = 0.0;
    for &i in indices {
        let obs = &batch.observations[i * k..(i + 1) * k];
        let action = &batch.actions[i * NUM_JOINTS..(i + 1) * NUM_JOINTS];
        let mean = forward(&model.policy.mean, &model.policy.arch, obs).unwrap();
        let ratio = (log_density(&mean, &model.policy.log_std, action) - batch.log_probs[i]).exp();
        let a = batch.advantages[i];
        let clipped = ratio.clamp(1.0 - hp.clip_eps, 1.0 + hp.clip_eps);
        surrogate += (ratio * a).min(clipped * a);
        let v = forward(&model.value, &model.value_arch, obs).unwrap()[0];
        value_err += (v - batch.returns[i]).powi(2);
    }
    let entropy: f64 = model.policy.log_std.iter().map(|ls| ls + 0.5 * (1.0 + (2.0 * PI).ln())).sum();
    -surrogate / m + hp.c1 * value_err / m - hp.c2 * entropy
}

/// `model` with its flat parameter vector replaced.
pub fn with_flat(model: &PpoModel, flat: &[f64]) -> PpoModel {
    let mut m = model.clone();
    m.set_flat(flat);
    m
}

pub fn param_vector(v: &[f64]) -> ParamVector {
    ParamVector(v.to_vec())
}

// ---------------------------------------------------------------- archive fuzz

use std::collections::HashMap;

use hexbench::qd::{descriptor_of_cell, Archive, InsertOutcome};

/// Random insertions checked against a shadow map of cell -> fitness.
/// Fitnesses come from a coarse grid so equal-fitness challengers are common.
pub fn archive_fuzz(base: u8, ops: usize, seed: u64) -> Result<(), String> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut archive = Archive::new(base);
    let mut shadow: HashMap<usize, f64> = HashMap::new();
    let cells = (base as usize).pow(NUM_LEGS as u32);
    // Concentrate on a few hundred cells so replacements happen.
    let hot = 300.min(cells);
    let mut best = f64::NEG_INFINITY;
    for op in 0..ops {
        let cell = if rng.random_bool(0.9) { rng.random_range(0..hot) } else { rng.random_range(0..cells) };
        let fitness = rng.random_range(-40..40) as f64 / 8.0;
        let descriptor = descriptor_of_cell(cell, base);
        let genome = ParamVector(vec![op as f64]);
        let before_occ = archive.occupancy();
        let outcome = archive.try_insert(genome, descriptor, fitness, op as u64);
        let expected = match shadow.get(&cell) {
            None => InsertOutcome::InsertedEmpty,
            Some(&f) if f < fitness => InsertOutcome::Replaced,
            Some(_) => InsertOutcome::Rejected,
        };
        if outcome != expected {
            return Err(format!("op {op}: {outcome:?}, expected {expected:?}"));
        }
        if outcome != InsertOutcome::Rejected {
            shadow.insert(cell, fitness);
        }
        let stored = archive.get(cell).map(|e| (e.fitness, e.genome.0[0]));
        match outcome {
            InsertOutcome::Rejected if stored.map(|s| s.1) == Some(op as f64) => {
                return Err(format!("op {op}: rejected genome was stored"));
            }
            InsertOutcome::InsertedEmpty | InsertOutcome::Replaced if stored != Some((fitness, op as f64)) => {
                return Err(format!("op {op}: accepted genome missing"));
            }
            _ => {}
        }
        if archive.occupancy() < before_occ || archive.occupancy() != shadow.len() {
            return Err(format!("op {op}: occupancy {} vs shadow {}", archive.occupancy(), shadow.len()));
        }
        let now = archive.best_fitness().unwrap();
        if now < best {
            return Err(format!("op {op}: best fell from {best} to {now}"));
        }
        best = now;
        if now != shadow.values().cloned().fold(f64::NEG_INFINITY, f64::max) && op % 997 == 0 {
            return Err(format!("op {op}: best {now} disagrees with shadow"));
        }
    }
    for (cell, elite) in archive.iter() {
        if elite.descriptor.cell_index() != cell {
            return Err(format!("cell {cell} holds a foreign descriptor"));
        }
    }
    Ok(())
}
