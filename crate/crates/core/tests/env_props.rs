mod common;

use common::{angle_diff, brute_registration, slip, TripodScript};
use hexbench::env::{
    run_episode, stance_transform, ControllerMode, Env, EnvSpec, HexapodConfig, HexapodEnv, OracleConfig,
    Pose2, EPISODE_FRAMES, NUM_JOINTS, NUM_LEGS,
};
use hexbench::nn::{MlpArchitecture, MlpPolicy, ParamVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coord() -> impl Strategy<Value = f64> {
    -0.4..0.4f64
}

prop_compose! {
    fn stance_instance()(
        mask in prop::array::uniform6(any::<bool>()).prop_filter("two or more legs", |m| m.iter().filter(|b| **b).count() >= 2),
        anchors in prop::array::uniform6((coord(), coord())),
        x in -1.0..1.0f64,
        y in -1.0..1.0f64,
        yaw in -3.1..3.1f64,
        noise in prop::array::uniform6((-0.01..0.01f64, -0.01..0.01f64)),
        start in (-1.0..1.0f64, -1.0..1.0f64, -3.1..3.1f64),
    ) -> ([bool; 6], [[f64; 2]; 6], Pose2, [[f64; 2]; 6], Pose2) {
        let truth = Pose2 { x, y, yaw };
        let anchors = anchors.map(|(a, b)| [a, b]);
        let noise = noise.map(|(a, b)| [a, b]);
        (mask, anchors, truth, noise, Pose2 { x: start.0, y: start.1, yaw: start.2 })
    }
}

/// Body-frame feet that `truth` maps exactly onto `anchors`.
fn feet_under(truth: &Pose2, anchors: &[[f64; 2]; 6], noise: &[[f64; 2]; 6]) -> [[f64; 3]; NUM_LEGS] {
    let (s, c) = truth.yaw.sin_cos();
    std::array::from_fn(|i| {
        let dx = anchors[i][0] - truth.x;
        let dy = anchors[i][1] - truth.y;
        [c * dx + s * dy + noise[i][0], -s * dx + c * dy + noise[i][1], -0.1]
    })
}

fn apply(pose: &Pose2, mask: &[bool; 6], anchors: &[[f64; 2]; 6], feet: &[[f64; 3]; 6]) -> Pose2 {
    let slots: [Option<[f64; 2]>; 6] = std::array::from_fn(|i| Some(anchors[i]));
    let d = stance_transform(pose, &slots, feet, mask);
    Pose2 { x: pose.x + d.dx, y: pose.y + d.dy, yaw: pose.yaw + d.dyaw }
}

fn selected<T: Copy>(mask: &[bool; 6], xs: &[T; 6]) -> Vec<T> {
    (0..6).filter(|&i| mask[i]).map(|i| xs[i]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rigid_stance_is_recovered_exactly((mask, anchors, truth, _, start) in stance_instance()) {
        let feet = feet_under(&truth, &anchors, &[[0.0; 2]; 6]);
        let got = apply(&start, &mask, &anchors, &feet);
        let f2: Vec<[f64; 2]> = selected(&mask, &feet).iter().map(|f| [f[0], f[1]]).collect();
        let a2 = selected(&mask, &anchors);
        prop_assert!(slip(&got, &f2, &a2) < 1e-20);
        // A rigid instance can be degenerate only when all stance anchors coincide.
        let spread = a2.iter().any(|a| (a[0] - a2[0][0]).hypot(a[1] - a2[0][1]) > 1e-3);
        if spread {
            prop_assert!((got.x - truth.x).abs() < 1e-9 && (got.y - truth.y).abs() < 1e-9);
            prop_assert!(angle_diff(got.yaw, truth.yaw) < 1e-9);
        }
    }

    #[test]
    fn registration_matches_exhaustive_search((mask, anchors, truth, noise, start) in stance_instance()) {
        let feet = feet_under(&truth, &anchors, &noise);
        let got = apply(&start, &mask, &anchors, &feet);
        let f2: Vec<[f64; 2]> = selected(&mask, &feet).iter().map(|f| [f[0], f[1]]).collect();
        let a2 = selected(&mask, &anchors);
        let oracle = brute_registration(&f2, &a2);
        let (ours, best) = (slip(&got, &f2, &a2), slip(&oracle, &f2, &a2));
        prop_assert!(ours <= best + 1e-12, "closed form {ours} vs search {best}");
    }

    #[test]
    fn single_anchor_fixes_translation_and_holds_yaw(
        leg in 0..6usize,
        anchor in (coord(), coord()),
        foot in (coord(), coord()),
        start in (-1.0..1.0f64, -1.0..1.0f64, -3.1..3.1f64),
    ) {
        let pose = Pose2 { x: start.0, y: start.1, yaw: start.2 };
        let mut mask = [false; 6];
        mask[leg] = true;
        let mut slots = [None; 6];
        slots[leg] = Some([anchor.0, anchor.1]);
        let mut feet = [[0.0, 0.0, -0.1]; 6];
        feet[leg] = [foot.0, foot.1, -0.1];
        let d = stance_transform(&pose, &slots, &feet, &mask);
        prop_assert_eq!(d.dyaw, 0.0);
        let moved = Pose2 { x: pose.x + d.dx, y: pose.y + d.dy, yaw: pose.yaw };
        let w = moved.to_world([foot.0, foot.1]);
        prop_assert!((w[0] - anchor.0).abs() < 1e-12 && (w[1] - anchor.1).abs() < 1e-12);
    }

    #[test]
    fn joint_rate_limit_holds(actions in prop::collection::vec(prop::array::uniform18(-3.0..3.0f64), 1..40)) {
        let cfg = HexapodConfig::default();
        let max = cfg.max_step();
        let limit = cfg.joint_limit;
        let mut env = HexapodEnv::new(cfg, ControllerMode::ClosedLoop);
        let mut prev = env.reset();
        for a in &actions {
            let obs = env.step(a).unwrap().observation;
            for (q0, q1) in prev.iter().zip(&obs) {
                prop_assert!((q1 - q0).abs() <= max + 1e-15);
                prop_assert!(q1.abs() <= limit);
            }
            prev = obs;
        }
    }

    #[test]
    fn holding_the_current_pose_never_moves_the_body(
        prefix in prop::collection::vec(prop::array::uniform18(-1.0..1.0f64), 0..20),
        hold in 1..30usize,
    ) {
        let mut env = HexapodEnv::new(HexapodConfig::default(), ControllerMode::ClosedLoop);
        let mut obs = env.reset();
        for a in &prefix {
            obs = env.step(a).unwrap().observation;
        }
        let pose = env.state().pose;
        for _ in 0..hold {
            let held: [f64; NUM_JOINTS] = obs.clone().try_into().unwrap();
            let out = env.step(&held).unwrap();
            prop_assert_eq!(out.reward, 0.0);
            obs = out.observation;
        }
        prop_assert_eq!(env.state().pose, pose);
    }

    #[test]
    fn episodes_are_deterministic_with_frame_count_fractions(seed in any::<u64>(), closed in any::<bool>()) {
        let mode = if closed { ControllerMode::ClosedLoop } else { ControllerMode::OpenLoop };
        let cfg = HexapodConfig::default();
        let arch = MlpArchitecture::policy(mode.obs_size(), [4, 4], cfg.joint_limit);
        let params = ParamVector::uniform(&arch, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let policy = MlpPolicy::new(arch, params).unwrap();
        let spec = EnvSpec::Hexapod(cfg);
        let a = run_episode(&mut spec.build(mode), &policy).unwrap();
        let b = run_episode(&mut spec.build(mode), &policy).unwrap();
        prop_assert_eq!(a.fitness.to_bits(), b.fitness.to_bits());
        prop_assert_eq!(&a.contact_fraction, &b.contact_fraction);
        prop_assert_eq!(a.frames, EPISODE_FRAMES);
        for f in a.contact_fraction {
            let k = (f * EPISODE_FRAMES as f64).round();
            prop_assert_eq!(f, k / EPISODE_FRAMES as f64);
        }
    }

    #[test]
    fn oracle_reward_is_negative_squared_distance(action in prop::array::uniform18(-2.0..2.0f64)) {
        let cfg = OracleConfig::default();
        let target = cfg.target.clone();
        let mut env = Env::Oracle(hexbench::env::OracleEnv::new(cfg, ControllerMode::OpenLoop));
        env.reset();
        let r = env.step(&action).unwrap().reward;
        let d: f64 = action.iter().zip(&target).map(|(a, t)| (a - t) * (a - t)).sum();
        prop_assert!((r + d).abs() <= 1e-12 * d.max(1.0));
    }
}

#[test]
fn scripted_tripod_advances_by_the_sweep_and_stands_half_the_time() {
    let cfg = HexapodConfig::default();
    let script = TripodScript::new(cfg.clone());
    // The script must be trackable exactly, or the derivation below is void.
    let max = cfg.max_step();
    let mut prev = [0.0; NUM_JOINTS];
    for t in 0..EPISODE_FRAMES {
        let a = script.action(t);
        for (p, q) in prev.iter().zip(&a) {
            assert!((q - p).abs() < max, "frame {t}: script outruns the actuators ({} > {max})", (q - p).abs());
            assert!(q.abs() <= cfg.joint_limit);
        }
        prev = a;
    }

    let mut env = HexapodEnv::new(cfg, ControllerMode::ClosedLoop);
    env.reset();
    let mut stance = [0usize; NUM_LEGS];
    let mut fitness = 0.0;
    let mut expected_fitness = 0.0;
    for t in 0..EPISODE_FRAMES {
        let out = env.step(&script.action(t)).unwrap();
        let expected = script.expected_reward(t);
        assert!((out.reward - expected).abs() < 1e-9, "frame {t}: reward {} vs {expected}", out.reward);
        for leg in 0..NUM_LEGS {
            assert_eq!(out.contacts[leg], script.grounded(leg, t), "frame {t} leg {leg}");
            stance[leg] += out.contacts[leg] as usize;
        }
        fitness += out.reward;
        expected_fitness += expected;
    }
    assert!((fitness - expected_fitness).abs() < 1e-8);
    assert!(env.state().pose.yaw.abs() < 1e-9);

    let mut env = Env::Hexapod(HexapodEnv::new(HexapodConfig::default(), ControllerMode::OpenLoop));
    let clock = std::cell::Cell::new(0usize);
    let policy = (1usize, |_: &[f64], out: &mut [f64]| {
        out.copy_from_slice(&script.action(clock.get()));
        clock.set(clock.get() + 1);
    });
    let result = run_episode(&mut env, &policy).unwrap();
    for leg in 0..NUM_LEGS {
        let counted = (0..EPISODE_FRAMES).filter(|&t| script.grounded(leg, t)).count();
        assert_eq!(counted, stance[leg]);
        assert_eq!(result.contact_fraction[leg], counted as f64 / EPISODE_FRAMES as f64);
        // Half of every gait cycle is stance; the lifted warm-up dilutes it slightly.
        let gait_share = counted as f64 / (EPISODE_FRAMES - script.warmup) as f64;
        assert!((gait_share - 0.5).abs() < 0.02, "leg {leg}: {gait_share}");
        assert!((result.contact_fraction[leg] - 0.5).abs() < 0.05);
    }
    assert!((result.fitness - expected_fitness).abs() < 1e-8);
}

#[test]
fn forward_kinematics_hand_trigonometry() {
    use hexbench::env::forward_kinematics;
    let cfg = HexapodConfig::default();
    let [l1, l2, l3] = cfg.segment_lengths;
    for leg in 0..NUM_LEGS {
        let a = (30.0 + 60.0 * leg as f64).to_radians();
        let hip = [cfg.hip_radius * a.cos(), cfg.hip_radius * a.sin()];
        let straight = forward_kinematics(&cfg, leg, [0.0; 3]);
        let reach = l1 + l2 + l3;
        assert!((straight[0] - (hip[0] + reach * a.cos())).abs() < 1e-15);
        assert!((straight[1] - (hip[1] + reach * a.sin())).abs() < 1e-15);
        assert_eq!(straight[2], 0.0);

        // Quarter turn of the hip yaw: the radial offset rotates by 90 degrees.
        let turned = forward_kinematics(&cfg, leg, [std::f64::consts::FRAC_PI_2, 0.0, 0.0]);
        assert!((turned[0] - (hip[0] - reach * a.sin())).abs() < 1e-15);
        assert!((turned[1] - (hip[1] + reach * a.cos())).abs() < 1e-15);

        // Folding the tibia straight up lifts the foot by its length.
        let folded = forward_kinematics(&cfg, leg, [0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        assert!((folded[2] - l3).abs() < 1e-15);
    }
}
