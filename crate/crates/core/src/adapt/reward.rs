//! Hierarchical grasp reward: an approach term followed by gated grasp and lift terms.

use serde::{Deserialize, Serialize};

use crate::geom::{geodesic_distance, Pose, Vec3};

/// How the running closest distance starts an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosestInit {
    /// Seeded with the first step's distance sum, so the first reward is 0.
    FirstStep,
    /// Seeded with `-inf`, which keeps the approach term at 0 forever.
    NegativeInfinity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConstants {
    /// Close-enough tolerance on every fingertip-to-contact distance, m.
    pub epsilon: f64,
    /// Distal phalanx contact threshold, m.
    pub phi: f64,
    pub alpha: [f64; 3],
    pub beta_con: f64,
    pub beta_sim: f64,
    /// Lift height below which the lift term rewards height alone, m.
    pub lift_switch: f64,
    pub closest_init: ClosestInit,
}

impl Default for RewardConstants {
    fn default() -> Self {
        Self {
            epsilon: 0.06,
            phi: 0.002,
            alpha: [10.0, 10.0, 20.0],
            beta_con: 0.5,
            beta_sim: 0.5,
            lift_switch: 0.02,
            closest_init: ClosestInit::FirstStep,
        }
    }
}

/// Everything the reward reads from one simulator state.
#[derive(Debug, Clone)]
pub struct RewardInput<'a> {
    /// Robot fingertip positions paired with their world contact points.
    pub tips: &'a [Vec3],
    pub contacts: &'a [Vec3],
    /// Signed distal-phalanx distance of every robot fingertip to the object.
    pub distal: &'a [f64],
    /// Fingertip index of the thumb in `distal`.
    pub thumb: Option<usize>,
    pub q: &'a [f64],
    pub q_target: &'a [f64],
    pub object: &'a Pose,
    pub target: &'a Pose,
    /// Object height at the episode start.
    pub start_height: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub approach: f64,
    pub ce: bool,
    pub con: f64,
    pub sim: f64,
    pub grasp: f64,
    pub ht: bool,
    pub lift: f64,
    pub total: f64,
}

/// Running state carried across the steps of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardState {
    pub d_closest: Option<f64>,
}

impl RewardState {
    pub fn new() -> Self {
        Self { d_closest: None }
    }
}

impl Default for RewardState {
    fn default() -> Self {
        Self::new()
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Lift term for height `h` and the pose errors to the target.
pub fn lift_reward(h: f64, switch: f64, rotation_error: f64, position_error: f64) -> f64 {
    if h <= switch {
        (100.0 * h).min(2.0)
    } else {
        15.0 - (10.0 * rotation_error).min(5.0) - (50.0 * position_error).min(5.0)
    }
}

/// Reward of one step; updates the running closest distance.
pub fn reward(
    input: &RewardInput,
    k: &RewardConstants,
    state: &mut RewardState,
) -> RewardComponents {
    let dists: Vec<f64> = input
        .tips
        .iter()
        .zip(input.contacts)
        .map(|(v, c)| (v - c).norm())
        .collect();
    let sum: f64 = dists.iter().sum();
    let closest = match (state.d_closest, k.closest_init) {
        (Some(d), _) => d,
        (None, ClosestInit::FirstStep) => sum,
        (None, ClosestInit::NegativeInfinity) => f64::NEG_INFINITY,
    };
    let approach = (closest - sum).max(0.0);
    state.d_closest = Some(closest.min(sum));

    let ce = dists.iter().all(|d| *d <= k.epsilon);
    let touching: Vec<bool> = input.distal.iter().map(|d| *d <= k.phi).collect();
    let con = touching.iter().filter(|t| **t).count() as f64;
    let sim = cosine_similarity(input.q, input.q_target);
    let grasp = k.beta_con * con + k.beta_sim * sim;

    let ht = match input.thumb {
        Some(t) => touching[t] && touching.iter().enumerate().any(|(i, c)| i != t && *c),
        None => false,
    };
    let h = input.object.position.z - input.start_height;
    let lift = lift_reward(
        h,
        k.lift_switch,
        geodesic_distance(&input.object.rotation, &input.target.rotation),
        (input.object.position - input.target.position).norm(),
    );
    let gate = |b: bool| if b { 1.0 } else { 0.0 };
    let total =
        k.alpha[0] * approach + gate(ce) * k.alpha[1] * grasp + gate(ht) * k.alpha[2] * lift;
    RewardComponents {
        approach,
        ce,
        con,
        sim,
        grasp,
        ht,
        lift,
        total,
    }
}
