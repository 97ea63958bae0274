use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Matrix4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::hands;

const PLANAR: &str = r#"{
  "name": "planar",
  "links": [
    {"name": "base"},
    {"name": "l1"},
    {"name": "l2", "offset": {"pos": [0.04, 0.0, 0.0], "quat": [1.0, 0.0, 0.0, 0.0]}}
  ],
  "joints": [
    {"name": "j1", "type": "revolute", "axis": [0, 0, 1], "parent": "base", "child": "l1", "limits": [-4, 4]},
    {"name": "j2", "type": "revolute", "axis": [0, 0, 1], "parent": "l1", "child": "l2", "limits": [-4, 4]}
  ],
  "fingertip_sites": [{"name": "tip", "link": "l2", "position": [0.03, 0.0, 0.0]}],
  "palm_sites": [
    {"name": "index_mcp", "link": "base", "position": [0.08, 0.02, 0.0]},
    {"name": "ring_mcp", "link": "base", "position": [0.08, -0.02, 0.0]},
    {"name": "wrist", "link": "base", "position": [0.0, 0.0, 0.0]}
  ],
  "correspondence": {"1": "tip"}
}"#;

fn random_q(model: &HandModel, rng: &mut impl Rng) -> Vec<f64> {
    model
        .joints()
        .iter()
        .map(|j| rng.random_range(j.limits.0.max(-3.0)..=j.limits.1.min(3.0)))
        .collect()
}

// Rodrigues rotation matrix, independent of the quaternion code.
fn rodrigues(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
    let a = Vec3::from(axis).normalize();
    let k = Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

fn homogeneous(r: Matrix3<f64>, t: Vec3) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

fn pose_matrix(p: &Pose) -> Matrix4<f64> {
    let [w, x, y, z] = p.rotation.wxyz();
    let r = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    );
    homogeneous(r, p.position)
}

/// Chain-multiplication oracle working directly on the file description.
fn oracle_site(file: &HandFile, q: &[f64], site_link: &str, site_pos: [f64; 3]) -> Vec3 {
    let offsets: HashMap<&str, Pose> = file
        .links
        .iter()
        .map(|l| (l.name.as_str(), l.offset))
        .collect();
    let wrist = if file.floating_base.is_some() {
        WRIST_DOF
    } else {
        0
    };
    let incoming: HashMap<&str, (usize, &file::JointFile)> = file
        .joints
        .iter()
        .enumerate()
        .map(|(i, j)| (j.child.as_str(), (i + wrist, j)))
        .collect();
    let mut chain = Vec::new();
    let mut cur = site_link;
    loop {
        chain.push(cur);
        match incoming.get(cur) {
            Some((_, j)) => cur = j.parent.as_str(),
            None => break,
        }
    }
    chain.reverse();
    let mut m = Matrix4::identity();
    if wrist > 0 {
        m = homogeneous(Matrix3::identity(), Vec3::new(q[0], q[1], q[2]))
            * homogeneous(rodrigues([1.0, 0.0, 0.0], q[3]), Vec3::zeros())
            * homogeneous(rodrigues([0.0, 1.0, 0.0], q[4]), Vec3::zeros())
            * homogeneous(rodrigues([0.0, 0.0, 1.0], q[5]), Vec3::zeros());
    }
    for link in chain {
        m *= pose_matrix(&offsets[link]);
        if let Some((i, j)) = incoming.get(link) {
            m *= match j.kind {
                JointKind::Revolute => homogeneous(rodrigues(j.axis, q[*i]), Vec3::zeros()),
                JointKind::Prismatic => {
                    homogeneous(Matrix3::identity(), Vec3::from(j.axis).normalize() * q[*i])
                }
            };
        }
    }
    let p = m * nalgebra::Vector4::new(site_pos[0], site_pos[1], site_pos[2], 1.0);
    Vec3::new(p.x, p.y, p.z)
}

#[test]
fn straight_planar_finger() {
    let m = HandModel::from_json(PLANAR).unwrap();
    assert_eq!(m.dof(), 2);
    let fk = m.forward_kinematics(&[0.0, 0.0]).unwrap();
    assert!((fk.fingertips[0] - Vec3::new(0.07, 0.0, 0.0)).norm() < 1e-15);
}

#[test]
fn rotated_planar_finger() {
    let m = HandModel::from_json(PLANAR).unwrap();
    let fk = m.forward_kinematics(&[FRAC_PI_2, 0.0]).unwrap();
    assert!((fk.fingertips[0] - Vec3::new(0.0, 0.07, 0.0)).norm() < 1e-12);
}

#[test]
fn bundled_hands_match_chain_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (_, file) in hands::bundled_hands() {
        let m = file.build().unwrap();
        for _ in 0..50 {
            let q = random_q(&m, &mut rng);
            let fk = m.forward_kinematics(&q).unwrap();
            for (site, got) in file.fingertip_sites.iter().zip(&fk.fingertips) {
                let want = oracle_site(&file, &q, &site.link, site.position);
                assert!((got - want).norm() < 1e-9, "{}: {got} vs {want}", site.name);
            }
            for (site, got) in file.palm_sites.iter().zip(&fk.palm_sites) {
                let want = oracle_site(&file, &q, &site.link, site.position);
                assert!((got - want).norm() < 1e-9);
            }
        }
    }
}

#[test]
fn bundled_dof_counts() {
    let dofs: Vec<(&str, usize)> = hands::bundled_hands()
        .into_iter()
        .map(|(n, f)| (n, f.build().unwrap().dof()))
        .collect();
    assert_eq!(
        dofs,
        vec![
            ("toy3", 12),
            ("allegro_like", 16),
            ("leap_like", 16),
            ("adroit_like", 24)
        ]
    );
}

#[test]
fn bundled_correspondence_is_injective_and_thumb_first() {
    for (_, file) in hands::bundled_hands() {
        let m = file.build().unwrap();
        let pairs = m.correspondence();
        let mut robots: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        robots.sort_unstable();
        robots.dedup();
        assert_eq!(robots.len(), pairs.len());
        assert_eq!(
            m.fingertips()[m.robot_finger(THUMB).unwrap()].name,
            "thumb_tip"
        );
        assert!(m.fingertips().len() <= HUMAN_FINGERS);
    }
}

#[test]
fn json_round_trip_preserves_model() {
    let file = hands::allegro_like();
    let text = file.to_json();
    let back: HandFile = serde_json::from_str(&text).unwrap();
    assert_eq!(back.to_json(), text);
    let a = file.build().unwrap();
    let b = HandModel::from_json(&text).unwrap();
    let q = a.mid_range();
    let fa = a.forward_kinematics(&q).unwrap();
    let fb = b.forward_kinematics(&q).unwrap();
    assert_eq!(fa.fingertips, fb.fingertips);
}

#[test]
fn cyclic_tree_is_rejected_naming_joint() {
    let mut file = hands::toy3();
    // Make the palm a child of the thumb's distal link.
    file.joints.push(file::JointFile {
        name: "loop_joint".into(),
        kind: JointKind::Revolute,
        axis: [1.0, 0.0, 0.0],
        parent: "thumb_1".into(),
        child: "palm".into(),
        limits: [-1.0, 1.0],
    });
    let err = file.build().unwrap_err();
    match &err {
        HandError::Joint { joint, .. } => {
            assert!(joint == "loop_joint" || joint.starts_with("thumb"))
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("cycle"));
}

#[test]
fn structural_errors() {
    let mut f = hands::toy3();
    f.joints[0].parent = "nowhere".into();
    assert!(matches!(f.build(), Err(HandError::Joint { joint, .. }) if joint == "thumb_j0"));

    let mut f = hands::toy3();
    f.joints[1].child = "thumb_0".into();
    assert!(matches!(f.build(), Err(HandError::Joint { joint, .. }) if joint == "thumb_j1"));

    let mut f = hands::toy3();
    f.correspondence.insert("3".into(), "thumb_tip".into());
    assert!(matches!(f.build(), Err(HandError::Correspondence(_))));

    let mut f = hands::toy3();
    f.correspondence.insert("7".into(), "index_tip".into());
    assert!(matches!(f.build(), Err(HandError::Correspondence(_))));

    assert!(matches!(
        HandModel::from_json("{\"name\": 3}"),
        Err(HandError::Parse(_))
    ));
}

#[test]
fn dimension_mismatch() {
    let m = hands::toy3().build().unwrap();
    assert!(matches!(
        m.forward_kinematics(&[0.0; 5]),
        Err(HandError::Dimension {
            expected: 12,
            got: 5
        })
    ));
}

#[test]
fn flat_palm_normal() {
    let m = HandModel::from_json(PLANAR).unwrap();
    let n = m.palm_orientation(&[0.0, 0.0]).unwrap();
    assert!((n.z.abs() - 1.0).abs() < 1e-12 && n.x == 0.0 && n.y == 0.0);
}

#[test]
fn rotated_palm_normal() {
    let m = HandModel::from_json(PLANAR).unwrap();
    let r = Rotation::rot_x(FRAC_PI_2);
    let sites = [
        r.rotate(&Vec3::new(0.08, 0.02, 0.0)),
        r.rotate(&Vec3::new(0.08, -0.02, 0.0)),
        Vec3::zeros(),
    ];
    let n = m.palm_normal(&sites).unwrap();
    assert!((n.y.abs() - 1.0).abs() < 1e-12 && n.x.abs() < 1e-12 && n.z.abs() < 1e-12);
}

#[test]
fn collinear_palm_is_degenerate() {
    let m = HandModel::from_json(PLANAR).unwrap();
    let sites = [
        Vec3::new(0.1, 0.0, 0.0),
        Vec3::new(0.2, 0.0, 0.0),
        Vec3::zeros(),
    ];
    assert!(matches!(
        m.palm_normal(&sites),
        Err(HandError::DegeneratePalm)
    ));
}

#[test]
fn bundled_palms_face_down_at_rest() {
    for (_, file) in hands::bundled_hands() {
        let m = file.build().unwrap();
        let n = m.palm_orientation(&vec![0.0; m.dof()]).unwrap();
        assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }
}

#[test]
fn point_jacobian_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = hands::adroit_like().build().unwrap();
    for _ in 0..10 {
        let q = random_q(&m, &mut rng);
        let kin = m.kinematics(&q).unwrap();
        for (k, site) in m.fingertips().iter().enumerate() {
            let p = kin.link_frames[site.link].transform_point(&site.position);
            let jac = m.point_jacobian(&kin, site.link, &p);
            let h = 1e-6;
            for j in 0..m.dof() {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[j] += h;
                qm[j] -= h;
                let fp = m.forward_kinematics(&qp).unwrap().fingertips[k];
                let fm = m.forward_kinematics(&qm).unwrap().fingertips[k];
                let fd = (fp - fm) / (2.0 * h);
                let col = Vec3::new(jac[(0, j)], jac[(1, j)], jac[(2, j)]);
                assert!((fd - col).norm() < 1e-7, "joint {j}: {fd} vs {col}");
            }
        }
    }
}

#[test]
fn gravity_load_is_potential_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m = hands::toy3().build().unwrap();
    let g = Vec3::new(0.0, 0.0, -9.81);
    let potential = |q: &[f64]| -> f64 {
        let kin = m.kinematics(q).unwrap();
        m.links()
            .iter()
            .enumerate()
            .map(|(l, link)| -link.mass * g.dot(&kin.link_frames[l].transform_point(&link.com)))
            .sum()
    };
    for _ in 0..10 {
        let q = random_q(&m, &mut rng);
        let load = m.gravity_load(&q, &g).unwrap();
        for j in 0..m.dof() {
            let h = 1e-6;
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += h;
            qm[j] -= h;
            let fd = (potential(&qp) - potential(&qm)) / (2.0 * h);
            assert!(
                (fd - load[j]).abs() < 1e-6,
                "joint {j}: {fd} vs {}",
                load[j]
            );
        }
    }
    // The vertical wrist joint carries the whole weight.
    let load = m.gravity_load(&vec![0.0; m.dof()], &g).unwrap();
    assert!((load[2] - 9.81 * m.total_mass()).abs() < 1e-12);
}

#[test]
fn wrist_joints_invert_wrist_pose() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = hands::leap_like().build().unwrap();
    for _ in 0..200 {
        let mut q = random_q(&m, &mut rng);
        q[4] = rng.random_range(-1.4..1.4);
        let pose = m.wrist_pose(&q).unwrap();
        let hint: Vec<f64> = q.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        let w = m.wrist_joints(&pose, &hint).unwrap();
        for k in 0..WRIST_DOF {
            assert!((w[k] - q[k]).abs() < 1e-9, "slot {k}: {} vs {}", w[k], q[k]);
        }
    }
}

#[test]
fn wrist_joints_follow_hint_across_wrap() {
    let m = hands::toy3().build().unwrap();
    let mut q = vec![0.0; m.dof()];
    q[5] = PI - 0.01;
    let mut next = q.clone();
    next[5] = PI + 0.01;
    let pose = m.wrist_pose(&next).unwrap();
    let w = m.wrist_joints(&pose, &q).unwrap();
    assert!((w[5] - (PI + 0.01)).abs() < 1e-9);
}

proptest! {
    #[test]
    fn fk_invariant_under_full_turns(seed in 0u64..1000, joint in 0usize..24, turns in -2i32..=2) {
        let m = hands::adroit_like().build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_q(&m, &mut rng);
        if m.joints()[joint].kind == JointKind::Revolute {
            let mut q2 = q.clone();
            q2[joint] += 2.0 * PI * turns as f64;
            let a = m.forward_kinematics(&q).unwrap();
            let b = m.forward_kinematics(&q2).unwrap();
            for (x, y) in a.fingertips.iter().zip(&b.fingertips) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn palm_normal_is_unit_and_orthogonal(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, file) in hands::bundled_hands() {
            let m = file.build().unwrap();
            let q = random_q(&m, &mut rng);
            let fk = m.forward_kinematics(&q).unwrap();
            let n = m.palm_normal(&fk.palm_sites).unwrap();
            let [i, r, w] = fk.palm_sites;
            prop_assert!((n.norm() - 1.0).abs() < 1e-12);
            prop_assert!(n.dot(&(i - w)).abs() < 1e-9);
            prop_assert!(n.dot(&(r - w)).abs() < 1e-9);
        }
    }
}
