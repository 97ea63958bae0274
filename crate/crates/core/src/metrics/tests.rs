use proptest::prelude::*;

use super::*;
use crate::geom::Rotation;

fn lifted(z: f64) -> Pose {
    Pose::from_translation(Vec3::new(0.0, 0.0, z))
}

fn trace_angle(a: &Rotation, b: &Rotation) -> f64 {
    let m = a.to_matrix().transpose() * b.to_matrix();
    ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

#[test]
fn identical_trajectories_have_zero_error() {
    let o: Vec<Pose> = (0..20).map(|i| lifted(0.01 * i as f64)).collect();
    assert_eq!(ep_er(&o, &o).unwrap(), (0.0, 0.0));
}

#[test]
fn constant_offset_gives_that_position_error() {
    let o: Vec<Pose> = (0..20).map(|i| lifted(0.01 * i as f64)).collect();
    let shifted: Vec<Pose> = o
        .iter()
        .map(|p| Pose::new(p.position + Vec3::new(0.01, 0.0, 0.0), p.rotation))
        .collect();
    let (ep, er) = ep_er(&o, &shifted).unwrap();
    assert!((ep - 0.01).abs() < 1e-15);
    assert_eq!(er, 0.0);
}

#[test]
fn errors_resample_by_nearest_index() {
    let reference: Vec<Pose> = (0..5).map(|i| lifted(i as f64)).collect();
    let executed: Vec<Pose> = (0..9).map(|i| lifted(i as f64 / 2.0)).collect();
    assert_eq!(ep_er(&reference, &executed).unwrap().0, 0.0);
    assert!(matches!(
        ep_er(&[], &executed),
        Err(MetricError::EmptyTrajectory)
    ));
}

proptest! {
    #[test]
    fn errors_match_per_frame_recomputation(
        pairs in prop::collection::vec(
            (prop::array::uniform3(-1.0f64..1.0), prop::array::uniform3(-3.0f64..3.0),
             prop::array::uniform3(-1.0f64..1.0), prop::array::uniform3(-3.0f64..3.0)),
            1..40,
        )
    ) {
        let pose = |p: [f64; 3], r: [f64; 3]| Pose::new(Vec3::from(p), Rotation::from_scaled_axis(&Vec3::from(r)));
        let a: Vec<Pose> = pairs.iter().map(|(p, r, _, _)| pose(*p, *r)).collect();
        let b: Vec<Pose> = pairs.iter().map(|(_, _, p, r)| pose(*p, *r)).collect();
        let (ep, er) = ep_er(&a, &b).unwrap();
        let n = a.len() as f64;
        let ep_ref = a.iter().zip(&b).map(|(x, y)| (x.position - y.position).norm()).sum::<f64>() / n;
        let er_ref = a.iter().zip(&b).map(|(x, y)| trace_angle(&x.rotation, &y.rotation).to_degrees()).sum::<f64>() / n;
        prop_assert!((ep - ep_ref).abs() < 1e-9);
        prop_assert!((er - er_ref).abs() < 1e-6);
    }
}

#[test]
fn static_trajectory_has_no_semantics() {
    let o = vec![lifted(0.03); 40];
    assert!(encode_semantics(&o, &SemanticsConfig::default())
        .unwrap()
        .is_empty());
}

#[test]
fn window_thresholds() {
    let cfg = SemanticsConfig::default();
    let base = lifted(0.03);
    let m = |p: Pose| WindowMotion::between(&base, &p).classify(&cfg);
    assert_eq!(m(lifted(0.08)), LIFT);
    assert_eq!(m(lifted(-0.02)), FALL);
    assert_eq!(
        m(Pose::new(Vec3::new(0.04, 0.0, 0.03), Rotation::identity())),
        TRANSLATION
    );
    assert_eq!(
        m(Pose::new(Vec3::new(0.04, 0.0, 0.08), Rotation::identity())),
        LIFT
    );
    assert_eq!(
        m(Pose::new(
            base.position,
            Rotation::rot_z(10f64.to_radians())
        )),
        ROTATION
    );
    assert_eq!(
        m(Pose::new(base.position, Rotation::rot_z(4f64.to_radians()))),
        MOTIONLESS
    );
    assert_eq!(
        m(Pose::new(
            base.position,
            Rotation::rot_y(20f64.to_radians())
        )),
        TILT
    );
    assert_eq!(
        m(Pose::new(
            base.position,
            Rotation::rot_x(10f64.to_radians())
        )),
        MOTIONLESS
    );
    // Translation outranks a simultaneous tilt.
    assert_eq!(
        m(Pose::new(Vec3::new(0.0, 0.05, 0.03), Rotation::rot_x(0.5))),
        TRANSLATION
    );
}

#[test]
fn single_window_labels() {
    let cfg = SemanticsConfig::default();
    let lift: Vec<Pose> = (0..=10).map(|i| lifted(0.03 + 0.005 * i as f64)).collect();
    assert_eq!(encode_semantics(&lift, &cfg).unwrap(), vec![LIFT]);
    let spin = |deg: f64| -> Vec<Pose> {
        (0..=10)
            .map(|i| Pose::from_rotation(Rotation::rot_z((deg * i as f64 / 10.0).to_radians())))
            .collect()
    };
    assert_eq!(encode_semantics(&spin(10.0), &cfg).unwrap(), vec![ROTATION]);
    assert!(encode_semantics(&spin(4.0), &cfg).unwrap().is_empty());
    assert!(matches!(
        encode_semantics(&spin(4.0)[..9], &cfg),
        Err(MetricError::TooShort { .. })
    ));
}

/// Lift 0.14 m over 40 frames, tilt 36° about x over 40 frames, drop back
/// over 40 frames.
fn lift_tilt_fall() -> Vec<Pose> {
    let mut o = Vec::new();
    let top = 0.17;
    for i in 0..=40 {
        o.push(lifted(0.03 + 0.14 * i as f64 / 40.0));
    }
    for i in 1..=40 {
        o.push(Pose::new(
            Vec3::new(0.0, 0.0, top),
            Rotation::rot_x((36.0 * i as f64 / 40.0).to_radians()),
        ));
    }
    for i in 1..=40 {
        o.push(Pose::new(
            Vec3::new(0.0, 0.0, top - 0.14 * i as f64 / 40.0),
            Rotation::rot_x(36f64.to_radians()),
        ));
    }
    o
}

#[test]
fn lift_tilt_fall_is_encoded_in_order() {
    // 20-frame windows every 10 frames: a phase moves 0.07 m or turns 18°
    // per window. Windows straddling a boundary see half of each, 0.035 m
    // and 9°, so the displacement decides them.
    let cfg = SemanticsConfig {
        window: 20,
        step: 10,
        ..SemanticsConfig::default()
    };
    let raw = window_labels(&lift_tilt_fall(), &cfg).unwrap();
    assert_eq!(
        raw,
        vec![LIFT, LIFT, LIFT, LIFT, TILT, TILT, TILT, FALL, FALL, FALL, FALL]
    );
    assert_eq!(
        encode_semantics(&lift_tilt_fall(), &cfg).unwrap(),
        vec![LIFT, TILT, FALL]
    );
}

fn upsample(poses: &[Pose], k: usize) -> Vec<Pose> {
    let mut out = Vec::new();
    for w in poses.windows(2) {
        for j in 0..k {
            out.push(w[0].interpolate(&w[1], j as f64 / k as f64));
        }
    }
    out.push(*poses.last().unwrap());
    out
}

proptest! {
    #[test]
    fn semantics_survive_integer_upsampling(
        steps in prop::collection::vec((prop::array::uniform3(-0.01f64..0.01), prop::array::uniform3(-0.05f64..0.05)), 10..40),
        k in 2usize..4,
    ) {
        let mut poses = vec![Pose::identity()];
        for (d, r) in &steps {
            let last = *poses.last().unwrap();
            poses.push(Pose::new(last.position + Vec3::from(*d), Rotation::from_scaled_axis(&Vec3::from(*r)) * last.rotation));
        }
        let cfg = SemanticsConfig::default();
        let scaled = SemanticsConfig { window: cfg.window * k, step: cfg.step * k, ..cfg.clone() };
        let a = encode_semantics(&poses, &cfg).unwrap();
        let b = encode_semantics(&upsample(&poses, k), &scaled).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn dtw_examples() {
    let n = DtwNormalization::PathLength;
    assert_eq!(dtw(&[1, 4, 2], &[1, 4, 2], n), 0.0);
    assert_eq!(dtw(&[1], &[5], n), 1.0);
    assert_eq!(dtw(&[1, 4, 2], &[1, 4, 4, 2], n), 0.0);
    // Swapped order: the last cell always mismatches and the crossing
    // labels cost one more; the longest such path has four cells.
    assert_eq!(dtw(&[1, 4, 2], &[1, 2, 4], n), 0.5);
    assert_eq!(
        dtw(&[1, 4, 2], &[1, 5, 2], DtwNormalization::MaxLength),
        1.0 / 3.0
    );
}

#[test]
fn tsr_edge_cases() {
    let cfg = SemanticsConfig::default();
    assert_eq!(
        tsr(&[], &[], &cfg),
        TsrResult {
            distance: 0.0,
            success: true
        }
    );
    assert_eq!(
        tsr(&[1], &[], &cfg),
        TsrResult {
            distance: 1.0,
            success: false
        }
    );
    assert!(tsr(&[1, 4, 2], &[1, 4, 2], &cfg).success);
    assert!(!tsr(&[1, 4, 2], &[1, 2, 4], &cfg).success);
}

/// All monotone warping paths, as (cost, length).
fn all_paths(
    a: &[u8],
    b: &[u8],
    i: usize,
    j: usize,
    cost: u32,
    len: u32,
    out: &mut Vec<(u32, u32)>,
) {
    let cost = cost + u32::from(a[i] != b[j]);
    let len = len + 1;
    if i + 1 == a.len() && j + 1 == b.len() {
        out.push((cost, len));
        return;
    }
    if i + 1 < a.len() {
        all_paths(a, b, i + 1, j, cost, len, out);
    }
    if j + 1 < b.len() {
        all_paths(a, b, i, j + 1, cost, len, out);
    }
    if i + 1 < a.len() && j + 1 < b.len() {
        all_paths(a, b, i + 1, j + 1, cost, len, out);
    }
}

pub(crate) fn brute_force_dtw(a: &[u8], b: &[u8]) -> f64 {
    let mut paths = Vec::new();
    all_paths(a, b, 0, 0, 0, 0, &mut paths);
    let best = paths.iter().map(|p| p.0).min().unwrap();
    let len = paths
        .iter()
        .filter(|p| p.0 == best)
        .map(|p| p.1)
        .max()
        .unwrap();
    best as f64 / len as f64
}

proptest! {
    #[test]
    fn dtw_matches_brute_force(
        a in prop::collection::vec(1u8..=5, 1..6),
        b in prop::collection::vec(1u8..=5, 1..6),
    ) {
        let d = dtw(&a, &b, DtwNormalization::PathLength);
        prop_assert_eq!(d, brute_force_dtw(&a, &b));
        prop_assert_eq!(d, dtw(&b, &a, DtwNormalization::PathLength));
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(tsr(&a, &a, &SemanticsConfig::default()).success);
        let (fa, fb) = (filter_labels(&a), filter_labels(&b));
        prop_assert_eq!(dtw(&fa, &fb, DtwNormalization::PathLength) == 0.0, fa == fb);
    }
}

#[test]
fn success_definitions() {
    assert!(sr_grasp(0.04, true));
    assert!(!sr_grasp(0.06, true));
    assert!(!sr_grasp(0.04, false));
    assert!(sr_follow(false));
    assert!(!sr_follow(true));
}

#[test]
fn self_evaluation_is_perfect() {
    let o = lift_tilt_fall();
    let e = Evidence {
        reference: &o,
        executed: &o,
        grasp_distance: 0.01,
        held: true,
        dropped: false,
    };
    let r = evaluate(&e, &SemanticsConfig::default()).unwrap();
    assert!(r.sr_grasp && r.sr_follow && r.tsr);
    assert_eq!((r.ep, r.er, r.dtw_distance), (0.0, 0.0, 0.0));
}

#[test]
fn corpus_table_lists_columns_in_order() {
    let o = lift_tilt_fall();
    let e = Evidence {
        reference: &o,
        executed: &o,
        grasp_distance: 0.01,
        held: true,
        dropped: false,
    };
    let good = evaluate(&e, &SemanticsConfig::default()).unwrap();
    let bad = MetricReport {
        sr_grasp: false,
        ..good.clone()
    };
    let report = CorpusReport::new(vec![("b".into(), bad), ("a".into(), good)]);
    assert_eq!(report.summary.sr_grasp, 0.5);
    assert_eq!(report.entries[0].0, "a");
    let table = report.to_table();
    let header = table.lines().next().unwrap();
    let cols = ["SR Grasp", "SR Follow", "Ep", "Er", "TSR"];
    let pos: Vec<usize> = cols.iter().map(|c| header.find(c).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
    assert!(table.lines().last().unwrap().contains("50.0%"));
}
