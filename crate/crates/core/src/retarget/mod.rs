//! Kinematic retargeting of human fingertip/palm trajectories onto a robot
//! hand, with conversion of the smoothed result to position-target controls.

mod control;
mod spline;

pub use control::{to_control_sequence, ActuatorModel, ControlError, ControlPlan, ControlSequence};
pub use spline::{CubicSpline, SmoothTrajectory, SplineError};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demo::HumanHand;
use crate::geom::{direction_angle, Pose, Rotation, Vec3};
use crate::hand::{HandError, HandModel};

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error(transparent)]
    Hand(#[from] HandError),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("human trajectory needs at least 2 frames, got {0}")]
    TooShort(usize),
}

/// Weights of the fingertip, palm-orientation and smoothness terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetargetWeights {
    pub w_f: f64,
    pub w_o: f64,
    pub w_s: f64,
}

impl Default for RetargetWeights {
    fn default() -> Self {
        Self {
            w_f: 1.0,
            w_o: 0.1,
            w_s: 0.05,
        }
    }
}

impl RetargetWeights {
    pub fn validate(&self) -> Result<(), RetargetError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.w_f) && self.w_f > 0.0 && ok(self.w_o) && ok(self.w_s)) {
            return Err(RetargetError::Weights(format!(
                "need w_f > 0 and w_o, w_s >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSolution {
    pub q: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetResult {
    /// Joint trajectory `Q`, one row per frame.
    pub q: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
}

impl RetargetResult {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// The retargeting objective for one frame, as stacked least-squares residuals.
struct Problem<'a> {
    model: &'a HandModel,
    human: &'a HumanHand,
    q_prev: &'a [f64],
    weights: RetargetWeights,
    pairs: Vec<(usize, usize)>,
}

impl Problem<'_> {
    fn residual_len(&self) -> usize {
        3 * self.pairs.len() + 3 + self.model.dof()
    }

    fn residuals(&self, q: &[f64]) -> Result<DVector<f64>, HandError> {
        let fk = self.model.forward_kinematics(q)?;
        let mut r = DVector::zeros(self.residual_len());
        let sf = self.weights.w_f.sqrt() * POSITION_SCALE;
        for (k, &(h, rob)) in self.pairs.iter().enumerate() {
            let e = (self.human.fingertips[h] - fk.fingertips[rob]) * sf;
            r.fixed_rows_mut::<3>(3 * k).copy_from(&e);
        }
        let n_r = self.model.palm_normal(&fk.palm_sites)?;
        let off = 3 * self.pairs.len();
        r.fixed_rows_mut::<3>(off).copy_from(
            &(orientation_residual(&n_r, &self.human.palm_normal) * self.weights.w_o.sqrt()),
        );
        let ss = self.weights.w_s.sqrt();
        for (i, (a, b)) in q.iter().zip(self.q_prev).enumerate() {
            r[off + 3 + i] = ss * (a - b);
        }
        Ok(r)
    }

    /// Residual Jacobian: fingertip rows from the joint screw axes, palm
    /// rows from the palm-site Jacobians chained with a finite difference
    /// of the normal residual in site coordinates.
    fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>, HandError> {
        let fk = self.model.forward_kinematics(q)?;
        let kin = &fk.kinematics;
        let d = q.len();
        let mut jac = DMatrix::zeros(self.residual_len(), d);
        let sf = self.weights.w_f.sqrt() * POSITION_SCALE;
        let tips = self.model.fingertips();
        for (k, &(_, rob)) in self.pairs.iter().enumerate() {
            let j = self
                .model
                .point_jacobian(kin, tips[rob].link, &fk.fingertips[rob]);
            jac.view_mut((3 * k, 0), (3, d)).copy_from(&(j * -sf));
        }
        let so = self.weights.w_o.sqrt();
        let orient = |sites: &[Vec3; 3]| -> Result<Vec3, HandError> {
            Ok(orientation_residual(&self.model.palm_normal(sites)?, &self.human.palm_normal) * so)
        };
        let h = 1e-7;
        let mut rows = DMatrix::zeros(3, d);
        for (s, site) in self.model.palm_sites().iter().enumerate() {
            let js = self.model.point_jacobian(kin, site.link, &fk.palm_sites[s]);
            for a in 0..3 {
                let (mut plus, mut minus) = (fk.palm_sites, fk.palm_sites);
                plus[s][a] += h;
                minus[s][a] -= h;
                let dr = (orient(&plus)? - orient(&minus)?) / (2.0 * h);
                rows += dr * js.row(a);
            }
        }
        let off = 3 * self.pairs.len();
        jac.view_mut((off, 0), (3, d)).copy_from(&rows);
        let ss = self.weights.w_s.sqrt();
        for i in 0..d {
            jac[(off + 3 + i, i)] = ss;
        }
        Ok(jac)
    }

    #[cfg(test)]
    fn numeric_jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>, HandError> {
        let h = 1e-6;
        let mut jac = DMatrix::zeros(self.residual_len(), q.len());
        let mut work = q.to_vec();
        for j in 0..q.len() {
            work[j] = q[j] + h;
            let rp = self.residuals(&work)?;
            work[j] = q[j] - h;
            let rm = self.residuals(&work)?;
            work[j] = q[j];
            jac.set_column(j, &((rp - rm) / (2.0 * h)));
        }
        Ok(jac)
    }
}

/// Tangent-space residual whose squared norm is the squared angle between
/// the robot normal `n_r` and the human normal `n_h`.
fn orientation_residual(n_r: &Vec3, n_h: &Vec3) -> Vec3 {
    let n_h = n_h.normalize();
    let c = n_r.cross(&n_h);
    let s = c.norm();
    let angle = direction_angle(n_r, &n_h);
    if s < 1e-12 {
        if angle < 1.0 {
            return c;
        }
        // Antipodal: any perpendicular direction.
        let perp = n_r.cross(&Vec3::x());
        let perp = if perp.norm() > 0.1 {
            perp
        } else {
            n_r.cross(&Vec3::y())
        };
        return perp.normalize() * angle;
    }
    c * (angle / s)
}

/// Objective value `w_f E_f + w_o E_o + w_s E_s` at `q`.
pub fn objective(
    model: &HandModel,
    human: &HumanHand,
    q: &[f64],
    q_prev: &[f64],
    weights: &RetargetWeights,
) -> Result<f64, HandError> {
    let p = Problem {
        model,
        human,
        q_prev,
        weights: *weights,
        pairs: model.correspondence(),
    };
    Ok(p.residuals(q)?.norm_squared())
}

/// Projected gradient: components pushing against an active bound are dropped.
fn projected_gradient(model: &HandModel, q: &[f64], g: &DVector<f64>) -> DVector<f64> {
    let mut pg = g.clone();
    for (i, j) in model.joints().iter().enumerate() {
        let at_lo = q[i] <= j.limits.0 && g[i] > 0.0;
        let at_hi = q[i] >= j.limits.1 && g[i] < 0.0;
        if at_lo || at_hi {
            pg[i] = 0.0;
        }
    }
    pg
}

/// Number of palm-normal spins tried for the first frame.
const INITIAL_SPINS: usize = 12;
/// Finger joints of the first-frame guesses, as fractions of their range.
const FINGER_POSTURES: [f64; 3] = [0.5, 0.25, 0.75];
/// Iteration budget of the first-frame screening solves.
const SCREEN_ITERATIONS: usize = 25;
/// Screened guesses that are solved to convergence.
const SCREEN_SURVIVORS: usize = 4;
/// Fingertip errors enter the objective in centimeters.
const POSITION_SCALE: f64 = 100.0;

/// Largest change of any joint coordinate in one solver step.
const MAX_STEP: f64 = 0.3;

/// Solves one frame by projected Levenberg-Marquardt started at `q_prev`.
pub fn retarget_frame(
    model: &HandModel,
    human: &HumanHand,
    q_prev: &[f64],
    weights: &RetargetWeights,
    options: &SolverOptions,
) -> Result<FrameSolution, RetargetError> {
    retarget_from(model, human, q_prev, q_prev, weights, options)
}

fn retarget_from(
    model: &HandModel,
    human: &HumanHand,
    start: &[f64],
    q_prev: &[f64],
    weights: &RetargetWeights,
    options: &SolverOptions,
) -> Result<FrameSolution, RetargetError> {
    weights.validate()?;
    if start.len() != model.dof() || q_prev.len() != model.dof() {
        return Err(HandError::Dimension {
            expected: model.dof(),
            got: start.len().min(q_prev.len()),
        }
        .into());
    }
    let problem = Problem {
        model,
        human,
        q_prev,
        weights: *weights,
        pairs: model.correspondence(),
    };
    let mut q = start.to_vec();
    model.clamp(&mut q);
    let mut r = problem.residuals(&q)?;
    let mut f = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        let jac = problem.jacobian(&q)?;
        let g = jac.transpose() * &r;
        if projected_gradient(model, &q, &g).norm() <= options.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut jtj = jac.transpose() * &jac;
        // Joints held at a bound by the gradient are frozen for this step.
        let mut g_free = g.clone();
        for (i, j) in model.joints().iter().enumerate() {
            let blocked = (q[i] <= j.limits.0 && g[i] > 0.0) || (q[i] >= j.limits.1 && g[i] < 0.0);
            if blocked {
                jtj.row_mut(i).fill(0.0);
                jtj.column_mut(i).fill(0.0);
                jtj[(i, i)] = 1.0;
                g_free[i] = 0.0;
            }
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * (jtj[(i, i)] + 1e-9);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 4.0;
                continue;
            };
            let mut step = chol.solve(&(-&g_free));
            let largest = step.amax();
            if largest > MAX_STEP {
                step *= MAX_STEP / largest;
            }
            let mut trial: Vec<f64> = q.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            model.clamp(&mut trial);
            let rt = problem.residuals(&trial)?;
            let ft = rt.norm_squared();
            if ft < f {
                q = trial;
                r = rt;
                f = ft;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left at machine precision.
            converged =
                projected_gradient(model, &q, &g).norm() <= 1e3 * options.gradient_tolerance;
            break;
        }
    }
    Ok(FrameSolution {
        q,
        objective: f,
        iterations,
        converged,
    })
}

/// Rigid transform `(R, t)` minimizing `Σ |R a_i + t - b_i|²`.
pub fn kabsch(a: &[Vec3], b: &[Vec3]) -> Pose {
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vec3>() / n;
    let cb = b.iter().sum::<Vec3>() / n;
    let mut h = nalgebra::Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += (p - ca) * (q - cb).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = nalgebra::Matrix3::identity();
    if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v_t.transpose() * d * u.transpose();
    let rotation = Rotation::from_matrix(&r);
    Pose::new(cb - rotation.rotate(&ca), rotation)
}

/// First-frame initial guesses: fingers at a few fractions of their range
/// and, for floating hands, the wrist placed by aligning the robot fingertips
/// and palm normal to the human ones, then spun about the palm normal to cover
/// symmetric alignments.
pub fn initial_guesses(
    model: &HandModel,
    human: &HumanHand,
) -> Result<Vec<Vec<f64>>, RetargetError> {
    let mut guesses = Vec::new();
    for t in FINGER_POSTURES {
        let mut q: Vec<f64> = model
            .joints()
            .iter()
            .map(|j| j.limits.0 + t * (j.limits.1 - j.limits.0))
            .collect();
        if !model.is_floating() {
            guesses.push(q);
            continue;
        }
        for v in q.iter_mut().take(crate::hand::WRIST_DOF) {
            *v = 0.0;
        }
        let fk = model.forward_kinematics(&q)?;
        let n_r = model.palm_normal(&fk.palm_sites)?;
        let n_h = human.palm_normal.normalize();
        let pairs = model.correspondence();
        let mut src: Vec<Vec3> = pairs.iter().map(|&(_, r)| fk.fingertips[r]).collect();
        let mut dst: Vec<Vec3> = pairs.iter().map(|&(h, _)| human.fingertips[h]).collect();
        let cs = src.iter().sum::<Vec3>() / src.len() as f64;
        let cd = dst.iter().sum::<Vec3>() / dst.len() as f64;
        // The palm normal anchors the rotation about the fingertip axis.
        let arm = 0.05;
        src.push(cs + n_r * arm);
        dst.push(cd + n_h * arm);
        let align = kabsch(&src, &dst);
        let wrist = align.compose(&model.wrist_pose(&q)?);
        for k in 0..INITIAL_SPINS {
            let angle = std::f64::consts::TAU * k as f64 / INITIAL_SPINS as f64;
            let spin = Pose::new(cd, Rotation::from_axis_angle(&n_h, angle))
                .compose(&Pose::from_translation(-cd));
            let w = model.wrist_joints(&spin.compose(&wrist), &q)?;
            let mut g = q.clone();
            g[..crate::hand::WRIST_DOF].copy_from_slice(&w);
            model.clamp(&mut g);
            guesses.push(g);
        }
    }
    Ok(guesses)
}

/// Solves a frame without a predecessor: every initial guess gets a short
/// screening solve and the most promising ones are run to convergence.
pub fn retarget_cold(
    model: &HandModel,
    human: &HumanHand,
    weights: &RetargetWeights,
    options: &SolverOptions,
) -> Result<FrameSolution, RetargetError> {
    let weights = RetargetWeights {
        w_s: 0.0,
        ..*weights
    };
    let screen = SolverOptions {
        max_iterations: options.max_iterations.min(SCREEN_ITERATIONS),
        ..*options
    };
    let mut screened = Vec::new();
    for guess in initial_guesses(model, human)? {
        screened.push(retarget_from(
            model, human, &guess, &guess, &weights, &screen,
        )?);
    }
    screened.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    let mut best: Option<FrameSolution> = None;
    for start in screened.iter().take(SCREEN_SURVIVORS) {
        let mut sol = retarget_from(model, human, &start.q, &start.q, &weights, options)?;
        sol.iterations += start.iterations;
        if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one initial guess"))
}

/// Frame-sequential retargeting, each frame warm-started from the previous solution.
pub fn retarget_sequence(
    model: &HandModel,
    humans: &[HumanHand],
    weights: &RetargetWeights,
    options: &SolverOptions,
) -> Result<RetargetResult, RetargetError> {
    if humans.len() < 2 {
        return Err(RetargetError::TooShort(humans.len()));
    }
    let first = retarget_cold(model, &humans[0], weights, options)?;
    let mut q = vec![first.q];
    let mut converged = vec![first.converged];
    for h in &humans[1..] {
        let sol = retarget_frame(model, h, q.last().unwrap(), weights, options)?;
        q.push(sol.q);
        converged.push(sol.converged);
    }
    Ok(RetargetResult { q, converged })
}

#[cfg(test)]
mod tests;
