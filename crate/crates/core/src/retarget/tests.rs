use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::hands;
use crate::hand::HUMAN_FINGERS;

fn planar(lo2: f64, hi2: f64) -> HandModel {
    planar_limits(-4.0, 4.0, lo2, hi2)
}

fn planar_limits(lo1: f64, hi1: f64, lo2: f64, hi2: f64) -> HandModel {
    let text = format!(
        r#"{{
  "name": "planar",
  "links": [
    {{"name": "base"}},
    {{"name": "l1"}},
    {{"name": "l2", "offset": {{"pos": [0.04, 0.0, 0.0], "quat": [1.0, 0.0, 0.0, 0.0]}}}}
  ],
  "joints": [
    {{"name": "j1", "type": "revolute", "axis": [0, 0, 1], "parent": "base", "child": "l1", "limits": [{lo1}, {hi1}]}},
    {{"name": "j2", "type": "revolute", "axis": [0, 0, 1], "parent": "l1", "child": "l2", "limits": [{lo2}, {hi2}]}}
  ],
  "fingertip_sites": [{{"name": "tip", "link": "l2", "position": [0.03, 0.0, 0.0]}}],
  "palm_sites": [
    {{"name": "index_mcp", "link": "base", "position": [0.08, 0.02, 0.0]}},
    {{"name": "ring_mcp", "link": "base", "position": [0.08, -0.02, 0.0]}},
    {{"name": "wrist", "link": "base", "position": [0.0, 0.0, 0.0]}}
  ],
  "correspondence": {{"1": "tip"}}
}}"#
    );
    HandModel::from_json(&text).unwrap()
}

/// Human frame whose mapped fingertips and palm normal come from the robot at `q`.
fn human_from_robot(model: &HandModel, q: &[f64]) -> HumanHand {
    let fk = model.forward_kinematics(q).unwrap();
    let mut fingertips = [Vec3::new(9.0, 9.0, 9.0); HUMAN_FINGERS];
    for (h, r) in model.correspondence() {
        fingertips[h] = fk.fingertips[r];
    }
    HumanHand {
        fingertips,
        palm_normal: model.palm_normal(&fk.palm_sites).unwrap(),
    }
}

fn planar_target(target: Vec3) -> HumanHand {
    let m = planar(-4.0, 4.0);
    let mut h = human_from_robot(&m, &[0.0, 0.0]);
    h.fingertips[1] = target;
    h
}

fn tip_error(model: &HandModel, human: &HumanHand, q: &[f64]) -> Vec<f64> {
    let fk = model.forward_kinematics(q).unwrap();
    model
        .correspondence()
        .iter()
        .map(|&(h, r)| (human.fingertips[h] - fk.fingertips[r]).norm())
        .collect()
}

fn random_q(model: &HandModel, rng: &mut impl Rng) -> Vec<f64> {
    model
        .joints()
        .iter()
        .enumerate()
        .map(|(i, j)| {
            if i < 3 && model.is_floating() {
                rng.random_range(-0.2..0.2)
            } else {
                rng.random_range(j.limits.0.max(-1.2)..j.limits.1.min(1.2))
            }
        })
        .collect()
}

#[test]
fn analytic_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in [
        hands::toy3().build().unwrap(),
        hands::allegro_like().build().unwrap(),
        hands::leap_like().build().unwrap(),
        hands::adroit_like().build().unwrap(),
    ] {
        for _ in 0..5 {
            let q_prev = random_q(&m, &mut rng);
            let h = human_from_robot(&m, &random_q(&m, &mut rng));
            let q = random_q(&m, &mut rng);
            let p = Problem {
                model: &m,
                human: &h,
                q_prev: &q_prev,
                weights: RetargetWeights::default(),
                pairs: m.correspondence(),
            };
            let a = p.jacobian(&q).unwrap();
            let n = p.numeric_jacobian(&q).unwrap();
            let err = (&a - &n).amax();
            assert!(err < 1e-5 * n.amax().max(1.0), "max deviation {err}");
        }
    }
}

#[test]
fn fixed_point_is_returned() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = hands::toy3().build().unwrap();
    let q = random_q(&m, &mut rng);
    let h = human_from_robot(&m, &q);
    let sol = retarget_frame(
        &m,
        &h,
        &q,
        &RetargetWeights::default(),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(sol.converged);
    assert_eq!(sol.iterations, 0);
    assert_eq!(sol.q, q);
}

#[test]
fn planar_reachable_target_matches_grid_search() {
    let m = planar_limits(-2.0 * PI, 2.0 * PI, -PI, PI);
    let w = RetargetWeights {
        w_s: 0.0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let r = rng.random_range(0.015..0.068);
        let a = rng.random_range(-PI..PI);
        let target = Vec3::new(r * a.cos(), r * a.sin(), 0.0);
        let h = planar_target(target);
        let sol = retarget_frame(&m, &h, &[0.3, 0.3], &w, &SolverOptions::default()).unwrap();
        let err = tip_error(&m, &h, &sol.q)[0];

        let step = 0.5f64.to_radians();
        let n = (2.0 * PI / step).round() as usize;
        let mut grid_best = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let q = [-PI + i as f64 * step, -PI + j as f64 * step];
                grid_best = grid_best.min(tip_error(&m, &h, &q)[0]);
            }
        }
        assert!(err < 1e-3, "residual {err}");
        assert!(err <= grid_best + 1e-3, "{err} vs grid {grid_best}");
    }
}

#[test]
fn unreachable_target_projects_to_boundary() {
    let m = planar(-4.0, 4.0);
    let w = RetargetWeights {
        w_s: 0.0,
        ..Default::default()
    };
    let h = planar_target(Vec3::new(0.1 * 0.6, 0.1 * 0.8, 0.0));
    let sol = retarget_frame(&m, &h, &[0.3, 0.3], &w, &SolverOptions::default()).unwrap();
    let err = tip_error(&m, &h, &sol.q)[0];
    assert!((err - 0.03).abs() < 1e-3, "error {err}");
}

#[test]
fn descent_from_previous_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = hands::allegro_like().build().unwrap();
    let w = RetargetWeights::default();
    for _ in 0..5 {
        let q_prev = random_q(&m, &mut rng);
        let target = random_q(&m, &mut rng);
        let h = human_from_robot(&m, &target);
        let sol = retarget_frame(&m, &h, &q_prev, &w, &SolverOptions::default()).unwrap();
        let before = objective(&m, &h, &q_prev, &q_prev, &w).unwrap();
        assert!(sol.objective <= before);
        let mut clamped = sol.q.clone();
        m.clamp(&mut clamped);
        assert_eq!(clamped, sol.q);
    }
}

#[test]
fn constant_trajectory_gives_constant_joints() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = hands::toy3().build().unwrap();
    let h = human_from_robot(&m, &random_q(&m, &mut rng));
    let res = retarget_sequence(
        &m,
        &[h; 6],
        &RetargetWeights::default(),
        &SolverOptions::default(),
    )
    .unwrap();
    for q in &res.q[1..] {
        for (a, b) in q.iter().zip(&res.q[0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn smooth_path_round_trip() {
    let m = planar(0.0, 2.5);
    let path: Vec<Vec<f64>> = (0..120)
        .map(|k| {
            let t = k as f64 / 120.0;
            vec![0.5 * (2.0 * t).sin() - 0.2, 0.8 + 0.4 * (3.0 * t).cos()]
        })
        .collect();
    let humans: Vec<HumanHand> = path.iter().map(|q| human_from_robot(&m, q)).collect();
    let res = retarget_sequence(
        &m,
        &humans,
        &RetargetWeights::default(),
        &SolverOptions::default(),
    )
    .unwrap();
    let worst = res
        .q
        .iter()
        .zip(&path)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(worst < 1e-2, "max deviation {worst}");
}

#[test]
fn equivariant_under_base_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = hands::toy3().build().unwrap();
    let t = Pose::new(
        Vec3::new(0.3, -0.2, 0.5),
        Rotation::from_axis_angle(&Vec3::new(1.0, 2.0, -1.0), 0.9),
    );
    let moved_model = m.with_base(t);
    let w = RetargetWeights::default();
    for _ in 0..3 {
        let q_prev = random_q(&m, &mut rng);
        let mut h = human_from_robot(&m, &random_q(&m, &mut rng));
        // Perturb so the optimum has non-zero residuals.
        h.fingertips[1] += Vec3::new(0.01, -0.02, 0.005);
        let a = retarget_frame(&m, &h, &q_prev, &w, &SolverOptions::default()).unwrap();
        let b = retarget_frame(
            &moved_model,
            &h.transformed(&t),
            &q_prev,
            &w,
            &SolverOptions::default(),
        )
        .unwrap();
        let ea = tip_error(&m, &h, &a.q);
        let eb = tip_error(&moved_model, &h.transformed(&t), &b.q);
        for (x, y) in ea.iter().zip(&eb) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

#[test]
fn first_frame_guess_aligns_wrist() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (_, file) in hands::bundled_hands() {
        let m = file.build().unwrap();
        let q = random_q(&m, &mut rng);
        let h = human_from_robot(&m, &q);
        let res = retarget_sequence(
            &m,
            &[h, h],
            &RetargetWeights::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        let err = tip_error(&m, &h, &res.q[0]).into_iter().fold(0.0, f64::max);
        assert!(err < 2e-3, "{}: fingertip error {err}", m.name());
    }
}

#[test]
fn kabsch_recovers_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = Pose::new(
        Vec3::new(0.1, 0.2, 0.3),
        Rotation::from_axis_angle(&Vec3::new(0.2, -1.0, 0.4), 2.0),
    );
    let a: Vec<Vec3> = (0..6)
        .map(|_| {
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let b: Vec<Vec3> = a.iter().map(|p| t.transform_point(p)).collect();
    let k = kabsch(&a, &b);
    assert!((k.position - t.position).norm() < 1e-12);
    assert!(crate::geom::geodesic_distance(&k.rotation, &t.rotation) < 1e-9);
}

#[test]
fn invalid_weights_are_rejected() {
    let m = planar(-4.0, 4.0);
    let h = planar_target(Vec3::new(0.05, 0.0, 0.0));
    let w = RetargetWeights {
        w_f: 0.0,
        ..Default::default()
    };
    assert!(matches!(
        retarget_frame(&m, &h, &[0.0, 0.0], &w, &SolverOptions::default()),
        Err(RetargetError::Weights(_))
    ));
}

#[test]
fn ideal_plant_controls_equal_samples() {
    let m = planar(-4.0, 4.0);
    let knots: Vec<Vec<f64>> = (0..240)
        .map(|k| vec![(k as f64 * 0.02).sin(), 0.3])
        .collect();
    let plan = ControlPlan::build(
        &m,
        knots,
        120.0,
        &ActuatorModel::ideal(2, 50.0),
        120.0,
        &Vec3::new(0.0, 0.0, -9.81),
    )
    .unwrap();
    assert_eq!(plan.len(), 240);
    for (a, r) in plan.a_primary.iter().zip(&plan.reference) {
        assert_eq!(a, &r.q);
    }
}

#[test]
fn control_rate_sets_sample_count() {
    let m = hands::toy3().build().unwrap();
    let knots = vec![m.mid_range(); 240];
    let act = ActuatorModel::default_for(&m);
    let g = Vec3::new(0.0, 0.0, -9.81);
    assert_eq!(
        ControlPlan::build(&m, knots.clone(), 120.0, &act, 120.0, &g)
            .unwrap()
            .len(),
        240
    );
    assert_eq!(
        ControlPlan::build(&m, knots.clone(), 120.0, &act, 60.0, &g)
            .unwrap()
            .len(),
        120
    );
    let mut zero = act.clone();
    zero.kp[4] = 0.0;
    assert!(matches!(
        ControlPlan::build(&m, knots.clone(), 120.0, &zero, 120.0, &g),
        Err(ControlError::ZeroGain { joint: 4, .. })
    ));
    assert!(matches!(
        ControlPlan::build(&m, knots, 120.0, &act, 0.0, &g),
        Err(ControlError::Frequency(_))
    ));
}

#[test]
fn plan_json_round_trip() {
    let m = planar(-4.0, 4.0);
    let knots: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64 * 0.01, 0.3]).collect();
    let plan = ControlPlan::build(
        &m,
        knots,
        120.0,
        &ActuatorModel::ideal(2, 50.0),
        120.0,
        &Vec3::zeros(),
    )
    .unwrap();
    let text = serde_json::to_string(&plan).unwrap();
    let back: ControlPlan = serde_json::from_str(&text).unwrap();
    assert_eq!(back, plan);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn objective_never_increases(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = hands::toy3().build().unwrap();
        let w = RetargetWeights::default();
        let q_prev = random_q(&m, &mut rng);
        let mut h = human_from_robot(&m, &random_q(&m, &mut rng));
        for p in h.fingertips.iter_mut() {
            *p += Vec3::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03));
        }
        let sol = retarget_frame(&m, &h, &q_prev, &w, &SolverOptions::default()).unwrap();
        let before = objective(&m, &h, &q_prev, &q_prev, &w).unwrap();
        prop_assert!(sol.objective <= before);
        let after = objective(&m, &h, &sol.q, &q_prev, &w).unwrap();
        prop_assert!((after - sol.objective).abs() <= 1e-15 * after.max(1.0));
    }
}
