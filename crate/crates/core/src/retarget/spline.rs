//! Minimum-jerk C² cubic interpolation of joint trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SplineError {
    #[error("need at least 4 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot times must be strictly increasing")]
    NonIncreasing,
    #[error("all knot rows must have the same length")]
    Ragged,
}

/// Cubic interpolating spline stored as knot values and second derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Second derivative at each knot.
    pub moments: Vec<f64>,
}

/// Solves a tridiagonal system in place (Thomas algorithm).
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup.first().copied().unwrap_or(0.0) / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = sup[i] / m;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

impl CubicSpline {
    fn check(times: &[f64], values: &[f64]) -> Result<(), SplineError> {
        if times.len() != values.len() {
            return Err(SplineError::Ragged);
        }
        if times.len() < 4 {
            return Err(SplineError::TooFewKnots(times.len()));
        }
        if times
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(SplineError::NonIncreasing);
        }
        Ok(())
    }

    /// Interior moments for given end moments `m0`, `mn`.
    fn moments_with_ends(times: &[f64], values: &[f64], m0: f64, mn: f64) -> Vec<f64> {
        let n = times.len() - 1;
        let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let k = n - 1;
        let mut sub = vec![0.0; k.saturating_sub(1)];
        let mut diag = vec![0.0; k];
        let mut sup = vec![0.0; k.saturating_sub(1)];
        let mut rhs = vec![0.0; k];
        for i in 1..n {
            let r = i - 1;
            diag[r] = 2.0 * (h[i - 1] + h[i]);
            if r > 0 {
                sub[r - 1] = h[i - 1];
            }
            if r + 1 < k {
                sup[r] = h[i];
            }
            rhs[r] =
                6.0 * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
        }
        rhs[0] -= h[0] * m0;
        rhs[k - 1] -= h[n - 1] * mn;
        let inner = thomas(&sub, &diag, &sup, &rhs);
        let mut m = Vec::with_capacity(n + 1);
        m.push(m0);
        m.extend(inner);
        m.push(mn);
        m
    }

    /// Spline with prescribed end second derivatives (`0, 0` gives the natural spline).
    pub fn with_end_moments(
        times: &[f64],
        values: &[f64],
        m0: f64,
        mn: f64,
    ) -> Result<Self, SplineError> {
        Self::check(times, values)?;
        Ok(Self {
            times: times.to_vec(),
            values: values.to_vec(),
            moments: Self::moments_with_ends(times, values, m0, mn),
        })
    }

    /// Spline with prescribed end slopes.
    pub fn clamped(times: &[f64], values: &[f64], d0: f64, dn: f64) -> Result<Self, SplineError> {
        Self::check(times, values)?;
        // End slopes are affine in the end moments; solve the 2×2 system.
        let base = Self::with_end_moments(times, values, 0.0, 0.0)?;
        let a = Self::with_end_moments(times, values, 1.0, 0.0)?;
        let b = Self::with_end_moments(times, values, 0.0, 1.0)?;
        let t0 = times[0];
        let tn = *times.last().unwrap();
        let s = |sp: &Self, t: f64| sp.derivative(t);
        let (p0, pn) = (s(&base, t0), s(&base, tn));
        let m = nalgebra::Matrix2::new(
            s(&a, t0) - p0,
            s(&b, t0) - p0,
            s(&a, tn) - pn,
            s(&b, tn) - pn,
        );
        let x = m
            .lu()
            .solve(&nalgebra::Vector2::new(d0 - p0, dn - pn))
            .unwrap_or_else(nalgebra::Vector2::zeros);
        Self::with_end_moments(times, values, x[0], x[1])
    }

    /// The C² interpolating cubic with the least integrated squared jerk.
    pub fn min_jerk(times: &[f64], values: &[f64]) -> Result<Self, SplineError> {
        Self::check(times, values)?;
        let base = Self::moments_with_ends(times, values, 0.0, 0.0);
        let ua: Vec<f64> = Self::moments_with_ends(times, values, 1.0, 0.0)
            .iter()
            .zip(&base)
            .map(|(a, b)| a - b)
            .collect();
        let ub: Vec<f64> = Self::moments_with_ends(times, values, 0.0, 1.0)
            .iter()
            .zip(&base)
            .map(|(a, b)| a - b)
            .collect();
        // Jerk on segment i is ΔM_i / h_i, so the cost is Σ ΔM_i² / h_i,
        // a quadratic in the two end moments.
        let mut hess = nalgebra::Matrix2::zeros();
        let mut grad = nalgebra::Vector2::zeros();
        for i in 0..times.len() - 1 {
            let h = times[i + 1] - times[i];
            let d0 = base[i + 1] - base[i];
            let da = ua[i + 1] - ua[i];
            let db = ub[i + 1] - ub[i];
            hess += nalgebra::Matrix2::new(da * da, da * db, da * db, db * db) / h;
            grad += nalgebra::Vector2::new(da * d0, db * d0) / h;
        }
        let x = hess
            .lu()
            .solve(&(-grad))
            .unwrap_or_else(nalgebra::Vector2::zeros);
        let moments = base
            .iter()
            .zip(ua.iter().zip(&ub))
            .map(|(m, (a, b))| m + x[0] * a + x[1] * b)
            .collect();
        Ok(Self {
            times: times.to_vec(),
            values: values.to_vec(),
            moments,
        })
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.times.len() - 1;
        match self.times.partition_point(|&x| x <= t) {
            0 => 0,
            k if k > n => n - 1,
            k => (k - 1).min(n - 1),
        }
    }

    /// Polynomial coefficients `(a, b, c, d)` of segment `i` in `s = t - t_i`.
    pub fn coefficients(&self, i: usize) -> [f64; 4] {
        let h = self.times[i + 1] - self.times[i];
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        [
            y0,
            (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0,
            m0 / 2.0,
            (m1 - m0) / (6.0 * h),
        ]
    }

    pub fn value(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let [a, b, c, d] = self.coefficients(i);
        let s = t - self.times[i];
        a + s * (b + s * (c + s * d))
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let [_, b, c, d] = self.coefficients(i);
        let s = t - self.times[i];
        b + s * (2.0 * c + 3.0 * s * d)
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let [_, _, c, d] = self.coefficients(i);
        2.0 * c + 6.0 * d * (t - self.times[i])
    }

    /// Integrated squared third derivative over the whole domain.
    pub fn jerk_cost(&self) -> f64 {
        (0..self.times.len() - 1)
            .map(|i| {
                let h = self.times[i + 1] - self.times[i];
                let j = (self.moments[i + 1] - self.moments[i]) / h;
                j * j * h
            })
            .sum()
    }
}

/// Per-joint smooth trajectory `q(t)` through the frames of `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTrajectory {
    pub joints: Vec<CubicSpline>,
}

impl SmoothTrajectory {
    /// Fits knots `Q[k]` placed at `t_k = k / fps`.
    pub fn fit(q: &[Vec<f64>], fps: f64) -> Result<Self, SplineError> {
        if q.len() < 4 {
            return Err(SplineError::TooFewKnots(q.len()));
        }
        let d = q[0].len();
        if q.iter().any(|row| row.len() != d) {
            return Err(SplineError::Ragged);
        }
        let times: Vec<f64> = (0..q.len()).map(|k| k as f64 / fps).collect();
        let joints = (0..d)
            .map(|j| {
                let values: Vec<f64> = q.iter().map(|row| row[j]).collect();
                CubicSpline::min_jerk(&times, &values)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { joints })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn start_time(&self) -> f64 {
        self.joints[0].times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.joints[0].times.last().unwrap()
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        self.joints.iter().map(|s| s.value(t)).collect()
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        self.joints.iter().map(|s| s.derivative(t)).collect()
    }

    pub fn acceleration(&self, t: f64) -> Vec<f64> {
        self.joints.iter().map(|s| s.second_derivative(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 / 120.0).collect()
    }

    #[test]
    fn straight_line_is_reproduced() {
        let t = uniform(10);
        let y: Vec<f64> = t.iter().map(|t| 0.3 - 2.0 * t).collect();
        let s = CubicSpline::min_jerk(&t, &y).unwrap();
        for k in 0..=90 {
            let x = k as f64 / 90.0 * t[9];
            assert!((s.value(x) - (0.3 - 2.0 * x)).abs() < 1e-12);
            assert!(s.second_derivative(x).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolates_knots() {
        let t = uniform(30);
        let y: Vec<f64> = t.iter().map(|t| (7.0 * t).sin() + t * t).collect();
        let s = CubicSpline::min_jerk(&t, &y).unwrap();
        for (ti, yi) in t.iter().zip(&y) {
            assert!((s.value(*ti) - yi).abs() < 1e-9);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let t = uniform(25);
        let y: Vec<f64> = t.iter().map(|t| (11.0 * t).cos()).collect();
        let s = CubicSpline::min_jerk(&t, &y).unwrap();
        let h = 1e-5;
        for k in 1..200 {
            let x = t[0] + (t[24] - t[0]) * k as f64 / 200.0;
            let fd = (s.value(x + h) - s.value(x - h)) / (2.0 * h);
            let d = s.derivative(x);
            assert!((fd - d).abs() <= 1e-4 * d.abs().max(1e-3), "{fd} vs {d}");
            let fd2 = (s.derivative(x + h) - s.derivative(x - h)) / (2.0 * h);
            assert!((fd2 - s.second_derivative(x)).abs() <= 1e-4 * fd2.abs().max(1.0));
        }
    }

    #[test]
    fn second_derivative_is_continuous() {
        let t = uniform(12);
        let y: Vec<f64> = (0..12).map(|k| ((k * 7) % 5) as f64 * 0.1).collect();
        let s = CubicSpline::min_jerk(&t, &y).unwrap();
        for i in 1..11 {
            let [_, _, c, _] = s.coefficients(i);
            let [_, b0, c0, d0] = s.coefficients(i - 1);
            let h = t[i] - t[i - 1];
            assert!((2.0 * c - (2.0 * c0 + 6.0 * d0 * h)).abs() < 1e-6 * c.abs().max(1.0));
            let left = b0 + 2.0 * c0 * h + 3.0 * d0 * h * h;
            assert!((left - s.coefficients(i)[1]).abs() < 1e-8 * left.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_short_and_unsorted() {
        assert_eq!(
            CubicSpline::min_jerk(&[0.0, 1.0, 2.0], &[0.0; 3]),
            Err(SplineError::TooFewKnots(3))
        );
        assert_eq!(
            CubicSpline::min_jerk(&[0.0, 2.0, 1.0, 3.0], &[0.0; 4]),
            Err(SplineError::NonIncreasing)
        );
    }

    #[test]
    fn trajectory_fit_samples_rows() {
        let q: Vec<Vec<f64>> = (0..8).map(|k| vec![k as f64 * 0.1, 1.0]).collect();
        let tr = SmoothTrajectory::fit(&q, 120.0).unwrap();
        assert_eq!(tr.dof(), 2);
        let p = tr.position(3.0 / 120.0);
        assert!((p[0] - 0.3).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
        assert!((tr.velocity(0.01)[0] - 12.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn min_jerk_beats_natural_and_clamped(ys in proptest::collection::vec(-1.0f64..1.0, 4..40), d0 in -5.0f64..5.0) {
            let t = uniform(ys.len());
            let best = CubicSpline::min_jerk(&t, &ys).unwrap();
            let natural = CubicSpline::with_end_moments(&t, &ys, 0.0, 0.0).unwrap();
            let clamped = CubicSpline::clamped(&t, &ys, d0, -d0).unwrap();
            let tol = 1e-9 * natural.jerk_cost().max(1.0);
            prop_assert!(best.jerk_cost() <= natural.jerk_cost() + tol);
            prop_assert!(best.jerk_cost() <= clamped.jerk_cost() + tol);
            for (ti, yi) in t.iter().zip(&ys) {
                prop_assert!((best.value(*ti) - yi).abs() < 1e-9);
            }
        }
    }
}
