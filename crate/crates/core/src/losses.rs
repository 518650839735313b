//! Trajectory discrepancy and lane-keeping losses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ErrorState;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("timestamps must be strictly increasing (index {0})")]
    NonIncreasingTime(usize),
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("start index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid loss config: {0}")]
    InvalidConfig(&'static str),
    #[error("loss config mode does not match the requested loss")]
    WrongMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajPoint<T> {
    pub t: f64,
    pub x: T,
    pub y: T,
    pub v: Option<T>,
    pub errors: Option<ErrorState<T>>,
}

/// Time-ordered planar trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TrajPoint<T>>", into = "Vec<TrajPoint<T>>")]
#[serde(bound(
    serialize = "T: Serialize + Clone",
    deserialize = "T: Deserialize<'de>"
))]
pub struct Trajectory<T> {
    points: Vec<TrajPoint<T>>,
}

impl<T> Trajectory<T> {
    pub fn new(points: Vec<TrajPoint<T>>) -> Result<Self, LossError> {
        if points.is_empty() {
            return Err(LossError::EmptyTrajectory);
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(LossError::NonIncreasingTime(i + 1));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[TrajPoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl<T: Scalar> Trajectory<T> {
    /// Positions only, sampled at `t0 + i * dt`.
    pub fn from_xy(xy: &[(T, T)], dt: f64) -> Result<Self, LossError> {
        let pts = xy
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| TrajPoint {
                t: i as f64 * dt,
                x,
                y,
                v: None,
                errors: None,
            })
            .collect();
        Self::new(pts)
    }

    pub fn values(&self) -> Trajectory<f64> {
        Trajectory {
            points: self
                .points
                .iter()
                .map(|p| TrajPoint {
                    t: p.t,
                    x: p.x.re(),
                    y: p.y.re(),
                    v: p.v.map(|v| v.re()),
                    errors: p.errors.map(|e| e.values()),
                })
                .collect(),
        }
    }

    /// Every `every`-th point, always keeping the first.
    pub fn subsample(&self, every: usize) -> Self {
        let every = every.max(1);
        Self {
            points: self.points.iter().step_by(every).copied().collect(),
        }
    }
}

impl<T> TryFrom<Vec<TrajPoint<T>>> for Trajectory<T> {
    type Error = LossError;
    fn try_from(points: Vec<TrajPoint<T>>) -> Result<Self, LossError> {
        Self::new(points)
    }
}

impl<T> From<Trajectory<T>> for Vec<TrajPoint<T>> {
    fn from(t: Trajectory<T>) -> Self {
        t.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    TrajectoryMatch,
    LaneKeeping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub lambda: f64,
    /// Soft-min temperature.
    pub gamma: f64,
    /// First step of the centerline term.
    pub t_cls: usize,
    /// First step of the velocity term.
    pub t_vs: usize,
    /// Target longitudinal speed, m/s.
    pub v_x: f64,
    pub mode: LossMode,
}

impl LossConfig {
    pub fn trajectory_match() -> Self {
        Self {
            lambda: 100.0,
            gamma: 0.1,
            t_cls: 0,
            t_vs: 0,
            v_x: 1.0,
            mode: LossMode::TrajectoryMatch,
        }
    }

    pub fn lane_keeping(v_x: f64) -> Self {
        Self {
            lambda: 5000.0,
            gamma: 0.1,
            t_cls: 2000,
            t_vs: 2500,
            v_x,
            mode: LossMode::LaneKeeping,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.lambda >= 0.0) {
            return Err(LossError::InvalidConfig("lambda must be non-negative"));
        }
        if !(self.gamma > 0.0) {
            return Err(LossError::InvalidConfig("gamma must be positive"));
        }
        if !self.v_x.is_finite() {
            return Err(LossError::InvalidConfig("v_x must be finite"));
        }
        Ok(())
    }
}

fn sq_dist<T: Scalar>(a: &TrajPoint<T>, b: &TrajPoint<T>) -> T {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    dx * dx + dy * dy
}

/// `-gamma * ln(sum exp(-z / gamma))`, shifted by the smallest primal value.
fn softmin3<T: Scalar>(z: [T; 3], gamma: f64) -> T {
    let lo = z.iter().map(|v| v.re()).fold(f64::INFINITY, f64::min);
    let shift = T::cst(lo);
    let g = T::cst(gamma);
    let sum = z
        .iter()
        .fold(T::zero(), |acc, &v| acc + (-(v - shift) / g).exp());
    shift - g * sum.ln()
}

/// Soft dynamic time warping with squared Euclidean position cost.
pub fn soft_dtw<T: Scalar>(a: &Trajectory<T>, b: &Trajectory<T>, gamma: f64) -> Result<T, LossError> {
    if a.is_empty() || b.is_empty() {
        return Err(LossError::EmptyTrajectory);
    }
    if !(gamma > 0.0) {
        return Err(LossError::InvalidConfig("gamma must be positive"));
    }
    let (pa, pb) = (a.points(), b.points());
    let m = pb.len();
    let mut prev: Vec<T> = Vec::with_capacity(m);
    let mut cur: Vec<T> = Vec::with_capacity(m);
    for (i, p) in pa.iter().enumerate() {
        cur.clear();
        for (j, q) in pb.iter().enumerate() {
            let d = sq_dist(p, q);
            let r = match (i, j) {
                (0, 0) => d,
                (0, _) => d + cur[j - 1],
                (_, 0) => d + prev[0],
                _ => d + softmin3([prev[j], cur[j - 1], prev[j - 1]], gamma),
            };
            cur.push(r);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

fn mean_nearest<T: Scalar>(from: &[TrajPoint<T>], to: &[TrajPoint<T>]) -> T {
    let total = from.iter().fold(T::zero(), |acc, p| {
        let mut best = sq_dist(p, &to[0]);
        for q in &to[1..] {
            let d = sq_dist(p, q);
            if d.re() < best.re() {
                best = d;
            }
        }
        acc + best
    });
    total / T::cst(from.len() as f64)
}

/// Symmetric chamfer distance: mean nearest squared distance in each direction.
pub fn chamfer<T: Scalar>(a: &Trajectory<T>, b: &Trajectory<T>) -> Result<T, LossError> {
    if a.is_empty() || b.is_empty() {
        return Err(LossError::EmptyTrajectory);
    }
    Ok(mean_nearest(a.points(), b.points()) + mean_nearest(b.points(), a.points()))
}

/// `soft_dtw + lambda * chamfer`.
pub fn trajectory_match_loss<T: Scalar>(
    sim: &Trajectory<T>,
    reference: &Trajectory<T>,
    cfg: &LossConfig,
) -> Result<T, LossError> {
    if cfg.mode != LossMode::TrajectoryMatch {
        return Err(LossError::WrongMode);
    }
    cfg.validate()?;
    Ok(soft_dtw(sim, reference, cfg.gamma)? + T::cst(cfg.lambda) * chamfer(sim, reference)?)
}

/// Euclidean norm that has a zero derivative at the origin instead of NaN.
fn norm4<T: Scalar>(x: [T; 4]) -> T {
    let sq = x.iter().fold(T::zero(), |acc, &v| acc + v * v);
    if sq.re() == 0.0 {
        T::zero()
    } else {
        sq.sqrt()
    }
}

/// Centerline term summed from `t_cls` plus `lambda` times the mean absolute
/// speed error from `t_vs`.
pub fn lane_keeping_loss<T: Scalar>(
    errors: &[ErrorState<T>],
    velocities: &[T],
    cfg: &LossConfig,
) -> Result<T, LossError> {
    if cfg.mode != LossMode::LaneKeeping {
        return Err(LossError::WrongMode);
    }
    cfg.validate()?;
    let len = errors.len();
    if velocities.len() != len {
        return Err(LossError::LengthMismatch(len, velocities.len()));
    }
    for index in [cfg.t_cls, cfg.t_vs] {
        if index >= len {
            return Err(LossError::IndexOutOfRange { index, len });
        }
    }
    let centerline = errors[cfg.t_cls..]
        .iter()
        .fold(T::zero(), |acc, e| acc + norm4(e.as_array()));
    let target = T::cst(cfg.v_x);
    let speed = velocities[cfg.t_vs..]
        .iter()
        .fold(T::zero(), |acc, &v| acc + (target - v).abs())
        / T::cst((len - cfg.t_vs) as f64);
    Ok(centerline + T::cst(cfg.lambda) * speed)
}
