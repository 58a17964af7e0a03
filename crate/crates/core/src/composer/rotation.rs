//! Heading rotations that turn an object's canonical facing `(0, 0, 1)` toward
//! its next path point.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::PlacementParams;
use crate::error::{Error, Result};
use crate::lifting::UpAxis;

pub const DEFAULT_DIRECTION_EPSILON: f64 = 1e-6;

/// Axis-angle matrix with `c = cos θ`, `s = sin θ`, `t = 1 − c` and unit axis
/// `(x, y, z)`.
pub fn rodrigues(axis: &Vector3<f64>, c: f64, s: f64) -> Matrix3<f64> {
    let (x, y, z) = (axis.x, axis.y, axis.z);
    let t = 1.0 - c;
    Matrix3::new(
        t * x * x + c,
        t * x * y - z * s,
        t * x * z + y * s,
        t * x * y + z * s,
        t * y * y + c,
        t * y * z - x * s,
        t * x * z - y * s,
        t * y * z + x * s,
        t * z * z + c,
    )
}

/// Rotation taking `(0, 0, 1)` to the planar direction from `curr` to `next`,
/// or `None` when that planar displacement is shorter than `eps`.
pub fn heading_rotation(curr: &Vector3<f64>, next: &Vector3<f64>, up: UpAxis, eps: f64) -> Option<Matrix3<f64>> {
    let planar = up.planar(&(next - curr));
    let len = planar.norm();
    if !len.is_finite() || len <= eps {
        return None;
    }
    let h = planar / len;
    let f = Vector3::z();
    let cross = f.cross(&h);
    let sin = cross.norm();
    let cos = f.dot(&h);
    // c and s of the unsigned angle θ between f and h
    let norm = sin.hypot(cos);
    let axis = if sin > 1e-12 {
        cross / sin
    } else if cos > 0.0 {
        return Some(Matrix3::identity());
    } else {
        up.unit()
    };
    Some(rodrigues(&axis, cos / norm, sin / norm))
}

/// One heading rotation per path point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<[[f64; 3]; 3]>", into = "Vec<[[f64; 3]; 3]>")]
pub struct RotationSchedule {
    pub rotations: Vec<Matrix3<f64>>,
}

impl RotationSchedule {
    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }
}

impl From<Vec<[[f64; 3]; 3]>> for RotationSchedule {
    fn from(rows: Vec<[[f64; 3]; 3]>) -> Self {
        Self {
            rotations: rows.iter().map(|r| Matrix3::from_fn(|i, j| r[i][j])).collect(),
        }
    }
}

impl From<RotationSchedule> for Vec<[[f64; 3]; 3]> {
    fn from(s: RotationSchedule) -> Self {
        s.rotations
            .iter()
            .map(|m| std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])))
            .collect()
    }
}

/// Headings along `points`: step `i` faces `points[i + 1]`, a degenerate step
/// keeps the previous heading (identity at the start) and the last point
/// reuses the one before it.
pub fn rotation_schedule_for_points(points: &[Vector3<f64>], up: UpAxis, eps: f64) -> Result<RotationSchedule> {
    if points.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "a rotation schedule needs at least 2 points, got {}",
            points.len()
        )));
    }
    let mut rotations = Vec::with_capacity(points.len());
    let mut prev = Matrix3::identity();
    let mut any = false;
    for w in points.windows(2) {
        if let Some(r) = heading_rotation(&w[0], &w[1], up, eps) {
            prev = r;
            any = true;
        }
        rotations.push(prev);
    }
    if !any {
        return Err(Error::RotationDegenerate);
    }
    rotations.push(prev);
    Ok(RotationSchedule { rotations })
}

pub fn build_rotation_schedule(params: &PlacementParams, up: UpAxis) -> Result<RotationSchedule> {
    rotation_schedule_for_points(&params.effective_locations(), up, DEFAULT_DIRECTION_EPSILON)
}
