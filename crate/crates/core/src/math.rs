//! Scalar helpers shared by the geometry, rendering and refinement code.

use nalgebra::Matrix3;

/// Logistic sigmoid, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]; `p` must lie in (0, 1).
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `base + value` nudged toward `base` until it lies strictly inside
/// `(base - half_width, base + half_width)`.
///
/// A saturated sigmoid evaluates to exactly 0 or 1 in f64, which would put a
/// clamped offset on the excluded boundary.
pub fn strictly_within(base: f64, offset: f64, half_width: f64) -> f64 {
    if half_width <= 0.0 {
        return base;
    }
    let mut off = offset;
    while off.abs() >= half_width {
        off = if off > 0.0 { off.next_down() } else { off.next_up() };
    }
    let mut out = base + off;
    while (out - base).abs() >= half_width {
        out = if out > base { out.next_down() } else { out.next_up() };
    }
    out
}

/// Max-abs deviation of `m mᵀ` from identity.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m * m.transpose() - Matrix3::identity()).abs().max()
}

pub fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    m.iter().all(|v| v.is_finite())
        && orthonormality_error(m) <= tol
        && (m.determinant() - 1.0).abs() <= tol
}
