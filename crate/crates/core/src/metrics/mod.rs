//! Transfer metrics: success rates, pose errors and semantic trajectory agreement.

#[cfg(test)]
mod tests;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{direction_angle, geodesic_distance, Pose, Vec3};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectory has {len} poses, fewer than the window of {window}")]
    TooShort { len: usize, window: usize },
    #[error("invalid semantics config: {0}")]
    Config(String),
}

pub const MOTIONLESS: u8 = 0;
pub const LIFT: u8 = 1;
pub const FALL: u8 = 2;
pub const TRANSLATION: u8 = 3;
pub const TILT: u8 = 4;
pub const ROTATION: u8 = 5;

/// Object-to-target distance bound for a successful grasp, m.
pub const GRASP_RADIUS: f64 = 0.05;
/// Normalized DTW distance below which a transfer counts as successful.
pub const TSR_THRESHOLD: f64 = 0.3;

/// Mean position error (m) and mean geodesic rotation error (degrees) of
/// `executed` against `reference`, after resampling `executed` onto the
/// reference timeline by nearest index.
pub fn ep_er(reference: &[Pose], executed: &[Pose]) -> Result<(f64, f64), MetricError> {
    if reference.is_empty() || executed.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    let resampled = resample(executed, reference.len());
    let n = reference.len() as f64;
    let ep = reference
        .iter()
        .zip(&resampled)
        .map(|(a, b)| (a.position - b.position).norm())
        .sum::<f64>()
        / n;
    let er = reference
        .iter()
        .zip(&resampled)
        .map(|(a, b)| geodesic_distance(&a.rotation, &b.rotation))
        .sum::<f64>()
        / n;
    Ok((ep, er.to_degrees()))
}

/// Nearest-index resampling of `poses` to `len` samples spanning the same interval.
pub fn resample(poses: &[Pose], len: usize) -> Vec<Pose> {
    if len == 0 || poses.is_empty() {
        return Vec::new();
    }
    if len == 1 {
        return vec![poses[0]];
    }
    let scale = (poses.len() - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|i| poses[((i as f64 * scale).round() as usize).min(poses.len() - 1)])
        .collect()
}

/// DTW normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtwNormalization {
    /// Divide by the number of cells on the optimal warping path.
    PathLength,
    /// Divide by the longer sequence length.
    MaxLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticsConfig {
    /// Window length in frames.
    pub window: usize,
    pub step: usize,
    /// Net displacement threshold, m.
    pub translation: f64,
    /// Tilt threshold about horizontal world axes, degrees.
    pub tilt_deg: f64,
    /// Rotation threshold about the vertical world axis, degrees.
    pub rotation_deg: f64,
    pub normalization: DtwNormalization,
    pub threshold: f64,
}

impl Default for SemanticsConfig {
    fn default() -> Self {
        Self {
            window: 10,
            step: 5,
            translation: 0.03,
            tilt_deg: 15.0,
            rotation_deg: 5.0,
            normalization: DtwNormalization::PathLength,
            threshold: TSR_THRESHOLD,
        }
    }
}

impl SemanticsConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.window == 0 || self.step == 0 {
            return Err(MetricError::Config(
                "window and step must be at least 1".into(),
            ));
        }
        if !(self.translation > 0.0 && self.tilt_deg > 0.0 && self.rotation_deg > 0.0) {
            return Err(MetricError::Config("thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Net motion of a window: displacement, tilt of the vertical axis and
/// twist about it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMotion {
    pub displacement: Vec3,
    /// Radians.
    pub tilt: f64,
    /// Radians, in `[0, pi]`.
    pub twist: f64,
}

impl WindowMotion {
    pub fn between(a: &Pose, b: &Pose) -> Self {
        let delta = b.rotation * a.rotation.inverse();
        let z = Vec3::z();
        let tilt = direction_angle(&delta.rotate(&z), &z);
        let [w, _, _, qz] = delta.wxyz();
        let twist = 2.0 * qz.abs().atan2(w.abs());
        Self {
            displacement: b.position - a.position,
            tilt,
            twist,
        }
    }

    pub fn classify(&self, cfg: &SemanticsConfig) -> u8 {
        let dz = self.displacement.z;
        let horizontal = self.displacement.xy().norm();
        if dz.abs().max(horizontal) >= cfg.translation {
            if dz.abs() >= horizontal {
                return if dz > 0.0 { LIFT } else { FALL };
            }
            return TRANSLATION;
        }
        if self.tilt >= cfg.tilt_deg.to_radians() {
            return TILT;
        }
        if self.twist >= cfg.rotation_deg.to_radians() {
            return ROTATION;
        }
        MOTIONLESS
    }
}

/// Raw window labels: window `i` spans frames `i·step ..= i·step + window`;
/// a trajectory shorter than one span yields a single label for its full length.
pub fn window_labels(poses: &[Pose], cfg: &SemanticsConfig) -> Result<Vec<u8>, MetricError> {
    cfg.validate()?;
    if poses.len() < cfg.window {
        return Err(MetricError::TooShort {
            len: poses.len(),
            window: cfg.window,
        });
    }
    let last = poses.len() - 1;
    let mut labels = Vec::new();
    let mut s = 0;
    while s + cfg.window <= last {
        labels.push(WindowMotion::between(&poses[s], &poses[s + cfg.window]).classify(cfg));
        s += cfg.step;
    }
    if labels.is_empty() {
        labels.push(WindowMotion::between(&poses[0], &poses[last]).classify(cfg));
    }
    Ok(labels)
}

/// Drops motionless labels and collapses repeats.
pub fn filter_labels(labels: &[u8]) -> Vec<u8> {
    let mut out: Vec<u8> = Vec::new();
    for &l in labels {
        if l != MOTIONLESS && out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

/// Semantic action sequence of an object trajectory.
pub fn encode_semantics(poses: &[Pose], cfg: &SemanticsConfig) -> Result<Vec<u8>, MetricError> {
    Ok(filter_labels(&window_labels(poses, cfg)?))
}

/// Normalized DTW distance under the 0/1 label-mismatch cost. Among
/// minimum-cost warping paths the longest one sets the path length.
pub fn dtw(a: &[u8], b: &[u8], normalization: DtwNormalization) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let (n, m) = (a.len(), b.len());
    // Cell value: (cost, -path length), minimized lexicographically.
    let mut dp = vec![vec![(u32::MAX, 0i64); m]; n];
    for i in 0..n {
        for j in 0..m {
            let c = u32::from(a[i] != b[j]);
            let prev = if i == 0 && j == 0 {
                (0, 0)
            } else {
                let mut best = (u32::MAX, 0i64);
                if i > 0 {
                    best = best.min(dp[i - 1][j]);
                }
                if j > 0 {
                    best = best.min(dp[i][j - 1]);
                }
                if i > 0 && j > 0 {
                    best = best.min(dp[i - 1][j - 1]);
                }
                best
            };
            dp[i][j] = (prev.0 + c, prev.1 - 1);
        }
    }
    let (cost, neg_len) = dp[n - 1][m - 1];
    let denom = match normalization {
        DtwNormalization::PathLength => (-neg_len) as f64,
        DtwNormalization::MaxLength => n.max(m) as f64,
    };
    cost as f64 / denom
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsrResult {
    pub distance: f64,
    pub success: bool,
}

/// Semantic agreement of a human and a robot action sequence.
pub fn tsr(human: &[u8], robot: &[u8], cfg: &SemanticsConfig) -> TsrResult {
    let distance = dtw(human, robot, cfg.normalization);
    TsrResult {
        distance,
        success: distance < cfg.threshold,
    }
}

/// The object ends within [`GRASP_RADIUS`] of the target and stayed there
/// through the hold window.
pub fn sr_grasp(final_distance: f64, held: bool) -> bool {
    final_distance <= GRASP_RADIUS && held
}

pub fn sr_follow(dropped: bool) -> bool {
    !dropped
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sr_grasp: bool,
    pub sr_follow: bool,
    pub tsr: bool,
    /// Mean position error, m.
    pub ep: f64,
    /// Mean rotation error, degrees.
    pub er: f64,
    pub dtw_distance: f64,
    pub human_semantics: Vec<u8>,
    pub robot_semantics: Vec<u8>,
}

/// Everything the metrics read from a transfer.
#[derive(Debug, Clone)]
pub struct Evidence<'a> {
    pub reference: &'a [Pose],
    pub executed: &'a [Pose],
    pub grasp_distance: f64,
    pub held: bool,
    pub dropped: bool,
}

pub fn evaluate(e: &Evidence, cfg: &SemanticsConfig) -> Result<MetricReport, MetricError> {
    let (ep, er) = ep_er(e.reference, e.executed)?;
    let human = encode_semantics(e.reference, cfg)?;
    let robot = encode_semantics(&resample(e.executed, e.reference.len()), cfg)?;
    let t = tsr(&human, &robot, cfg);
    Ok(MetricReport {
        sr_grasp: sr_grasp(e.grasp_distance, e.held),
        sr_follow: sr_follow(e.dropped),
        tsr: t.success,
        ep,
        er,
        dtw_distance: t.distance,
        human_semantics: human,
        robot_semantics: robot,
    })
}

/// Rates and mean errors over a set of tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub tasks: usize,
    pub sr_grasp: f64,
    pub sr_follow: f64,
    pub ep: f64,
    pub er: f64,
    pub tsr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub entries: Vec<(String, MetricReport)>,
    pub summary: CorpusSummary,
}

impl CorpusReport {
    pub fn new(mut entries: Vec<(String, MetricReport)>) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let n = entries.len();
        let mean = |f: &dyn Fn(&MetricReport) -> f64| {
            if n == 0 {
                0.0
            } else {
                entries.iter().map(|(_, r)| f(r)).sum::<f64>() / n as f64
            }
        };
        let rate = |b: bool| if b { 1.0 } else { 0.0 };
        let summary = CorpusSummary {
            tasks: n,
            sr_grasp: mean(&|r| rate(r.sr_grasp)),
            sr_follow: mean(&|r| rate(r.sr_follow)),
            ep: mean(&|r| r.ep),
            er: mean(&|r| r.er),
            tsr: mean(&|r| rate(r.tsr)),
        };
        Self { entries, summary }
    }

    /// Plain-text table: SR Grasp, SR Follow, Ep, Er, TSR.
    pub fn to_table(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|(n, _)| n.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>9}  {:>8}  {:>8}  {:>6}",
            "task", "SR Grasp", "SR Follow", "Ep (m)", "Er (deg)", "TSR"
        );
        let yes = |b: bool| if b { "yes" } else { "no" };
        for (name, r) in &self.entries {
            let _ = writeln!(
                out,
                "{name:<width$}  {:>8}  {:>9}  {:>8.4}  {:>8.2}  {:>6}",
                yes(r.sr_grasp),
                yes(r.sr_follow),
                r.ep,
                r.er,
                yes(r.tsr)
            );
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.1}%  {:>8.1}%  {:>8.4}  {:>8.2}  {:>5.1}%",
            format!("all ({})", s.tasks),
            100.0 * s.sr_grasp,
            100.0 * s.sr_follow,
            s.ep,
            s.er,
            100.0 * s.tsr
        );
        out
    }
}
