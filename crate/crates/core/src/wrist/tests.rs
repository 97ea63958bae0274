use proptest::prelude::*;

use super::*;
use crate::fixtures::{demos, hands};
use crate::geom::{Rotation, Vec3};
use crate::hand::HandState;
use crate::retarget::ActuatorModel;
use crate::sim::SimConfig;

fn pose(p: [f64; 3], r: [f64; 3]) -> Pose {
    Pose::new(Vec3::from(p), Rotation::from_scaled_axis(&Vec3::from(r)))
}

fn max_grip_deviation(plan: &ManipulationPlan) -> f64 {
    let reference = plan.t_grasp.inverse().compose(&plan.o_grasp);
    plan.targets
        .iter()
        .zip(&plan.object)
        .map(|(t, o)| {
            let rel = t.inverse().compose(o);
            (rel.position - reference.position)
                .norm()
                .max(geodesic_distance(&rel.rotation, &reference.rotation))
        })
        .fold(0.0, f64::max)
}

#[test]
fn grasp_frame_maps_to_grasp_wrist_exactly() {
    let o = pose([0.1, -0.2, 0.05], [0.3, 0.1, -0.4]);
    let t = pose([0.0, 0.1, 0.2], [-0.2, 0.5, 0.1]);
    let plan = plan_wrist(&[o, o], t, vec![]).unwrap();
    assert_eq!(plan.targets[0], t);
    assert_eq!(plan.targets[1], t);
}

#[test]
fn pure_translation_moves_the_wrist_by_the_same_vector() {
    let o = pose([0.0, 0.0, 0.03], [0.0, 0.0, 0.2]);
    let t = pose([0.01, 0.02, 0.1], [0.1, -0.3, 0.0]);
    let d = Vec3::new(0.05, -0.02, 0.1);
    let moved = Pose::new(o.position + d, o.rotation);
    let plan = plan_wrist(&[o, moved], t, vec![]).unwrap();
    assert!((plan.targets[1].position - (t.position + d)).norm() < 1e-15);
    assert!(geodesic_distance(&plan.targets[1].rotation, &t.rotation) < 1e-15);
}

#[test]
fn rotation_about_the_object_keeps_the_grip() {
    let o = pose([0.0, 0.0, 0.03], [0.0, 0.0, 0.0]);
    let t = pose([0.0, 0.0, 0.095], [0.0, 0.0, 0.0]);
    let turned = Pose::new(o.position, Rotation::rot_x(30f64.to_radians()));
    let plan = plan_wrist(&[o, turned], t, vec![]).unwrap();
    assert!(max_grip_deviation(&plan) < 1e-9);
    // The wrist swings on a circle around the object center.
    let r = (plan.targets[1].position - o.position).norm();
    assert!((r - 0.065).abs() < 1e-12);
}

#[test]
fn empty_trajectory_is_rejected() {
    assert!(matches!(
        plan_wrist(&[], Pose::identity(), vec![]),
        Err(WristError::EmptyTrajectory)
    ));
}

proptest! {
    #[test]
    fn planned_grip_is_constant(
        poses in prop::collection::vec((prop::array::uniform3(-1.0f64..1.0), prop::array::uniform3(-3.0f64..3.0)), 1..30),
        tp in prop::array::uniform3(-1.0f64..1.0),
        tr in prop::array::uniform3(-3.0f64..3.0),
    ) {
        let object: Vec<Pose> = poses.iter().map(|(p, r)| pose(*p, *r)).collect();
        let plan = plan_wrist(&object, pose(tp, tr), vec![]).unwrap();
        prop_assert!(max_grip_deviation(&plan) < 1e-9);
    }

    #[test]
    fn planning_is_equivariant(
        poses in prop::collection::vec((prop::array::uniform3(-1.0f64..1.0), prop::array::uniform3(-3.0f64..3.0)), 1..10),
        tp in prop::array::uniform3(-1.0f64..1.0),
        tr in prop::array::uniform3(-3.0f64..3.0),
        wp in prop::array::uniform3(-1.0f64..1.0),
        wr in prop::array::uniform3(-3.0f64..3.0),
    ) {
        let object: Vec<Pose> = poses.iter().map(|(p, r)| pose(*p, *r)).collect();
        let t = pose(tp, tr);
        let w = pose(wp, wr);
        let moved: Vec<Pose> = object.iter().map(|o| w.compose(o)).collect();
        let a = plan_wrist(&object, t, vec![]).unwrap();
        let b = plan_wrist(&moved, w.compose(&t), vec![]).unwrap();
        for (x, y) in a.targets.iter().zip(&b.targets) {
            let x = w.compose(x);
            prop_assert!((x.position - y.position).norm() < 1e-9);
            prop_assert!(geodesic_distance(&x.rotation, &y.rotation) < 1e-9);
        }
    }
}

#[test]
fn rebased_trajectory_starts_at_the_grasp_pose() {
    let goal = pose([0.0, 0.0, 0.13], [0.0, 0.0, 0.0]);
    let grasp = pose([0.002, -0.001, 0.12], [0.0, 0.05, 0.0]);
    let demo = [
        pose([0.0, 0.0, 0.14], [0.0, 0.0, 0.0]),
        pose([0.0, 0.0, 0.15], [0.0, 0.0, 0.3]),
    ];
    let out = rebase_object_trajectory(&demo, &goal, &grasp);
    assert_eq!(out.len(), 3);
    assert_eq!(out[0], grasp);
    assert!((out[1].position - (demo[0].position + grasp.position - goal.position)).norm() < 1e-15);
    assert!(geodesic_distance(&out[1].rotation, &grasp.rotation) < 1e-12);
    let expected = Rotation::rot_z(0.3) * grasp.rotation;
    assert!(geodesic_distance(&out[2].rotation, &expected) < 1e-12);
}

fn free_hand_world() -> (World, WorldState) {
    let model = hands::toy3().build().unwrap();
    let act = ActuatorModel::default_for(&model);
    let world = World::new(model.clone(), demos::cube(), SimConfig::default(), act).unwrap();
    let mut q = model.mid_range();
    q[..WRIST_DOF].copy_from_slice(&[0.3, 0.3, 0.3, 0.0, 0.0, 0.0]);
    let cube = Pose::from_translation(Vec3::new(0.0, 0.0, demos::CUBE_SIDE / 2.0));
    let start = world.initial_state(HandState::at_rest(q), cube);
    (world, start)
}

#[test]
fn free_wrist_follows_a_stationary_object_plan() {
    let (world, start) = free_hand_world();
    let t_grasp = world.model().wrist_pose(&start.hand.q).unwrap();
    let o = start.object.pose;
    let plan = plan_wrist(&vec![o; 120], t_grasp, start.hand.q.clone()).unwrap();
    let run = track_manipulation(&plan, &world, &start, &TrackingConfig::default()).unwrap();
    assert_eq!(run.object.len(), plan.len());
    let end = world
        .model()
        .wrist_pose(&run.states.last().unwrap().hand.q)
        .unwrap();
    assert!((end.position - t_grasp.position).norm() < 1e-3);
    // Never touching the object counts as a drop from the first step.
    assert!(run.dropped);
    assert_eq!(run.drop_step, Some(1));
}

#[test]
fn start_mismatch_and_bad_hold_are_rejected() {
    let (world, start) = free_hand_world();
    let t_grasp = world.model().wrist_pose(&start.hand.q).unwrap();
    let shifted = Pose::from_translation(start.object.pose.position + Vec3::new(0.01, 0.0, 0.0));
    let plan = plan_wrist(&[shifted; 3], t_grasp, start.hand.q.clone()).unwrap();
    assert!(matches!(
        track_manipulation(&plan, &world, &start, &TrackingConfig::default()),
        Err(WristError::StartMismatch { .. })
    ));
    let plan = plan_wrist(&[start.object.pose; 3], t_grasp, vec![0.0; 2]).unwrap();
    assert!(matches!(
        track_manipulation(&plan, &world, &start, &TrackingConfig::default()),
        Err(WristError::HoldDimension { .. })
    ));
}
