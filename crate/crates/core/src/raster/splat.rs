//! Perspective projection of 3D Gaussians into screen-space splats.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::RenderSettings;
use crate::camera::Camera;
use crate::gaussian::Gaussian3D;

/// Squared Mahalanobis radius of a splat's support (the 3-sigma ellipse).
pub const SUPPORT_MAHALANOBIS_SQ: f64 = 9.0;

/// A Gaussian projected onto the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    pub mean_px: Vector2<f64>,
    /// Screen-space covariance in px², low-pass floor included.
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    pub color: Vector3<f64>,
    pub base_opacity: f64,
}

impl Splat2D {
    /// Upper triangle `(a, b, c)` of the inverse covariance.
    pub fn conic(&self) -> (f64, f64, f64) {
        let (a, b, c) = (self.cov2d[(0, 0)], self.cov2d[(0, 1)], self.cov2d[(1, 1)]);
        let det = a * c - b * b;
        (c / det, -b / det, a / det)
    }

    /// Half extents of the bounding rectangle of the 3-sigma ellipse.
    pub fn radius(&self) -> (f64, f64) {
        let k = SUPPORT_MAHALANOBIS_SQ.sqrt();
        (k * self.cov2d[(0, 0)].sqrt(), k * self.cov2d[(1, 1)].sqrt())
    }
}

/// Projects a world-space mean/covariance pair. `None` means culled.
pub(crate) fn project_world(
    cam: &Camera,
    mean_world: &Vector3<f64>,
    cov_world: &Matrix3<f64>,
    color: Vector3<f64>,
    opacity: f64,
    settings: &RenderSettings,
) -> Option<Splat2D> {
    let pc = cam.to_camera(mean_world);
    if pc.z.is_nan() || pc.z <= settings.near_plane {
        return None;
    }
    let inv_z = 1.0 / pc.z;
    let j = Matrix2x3::new(
        cam.fx * inv_z,
        0.0,
        -cam.fx * pc.x * inv_z * inv_z,
        0.0,
        cam.fy * inv_z,
        -cam.fy * pc.y * inv_z * inv_z,
    );
    let t = j * cam.world_to_cam_rotation;
    let mut cov2d = t * cov_world * t.transpose();
    cov2d[(0, 1)] = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(1, 0)] = cov2d[(0, 1)];
    cov2d[(0, 0)] += settings.low_pass;
    cov2d[(1, 1)] += settings.low_pass;
    if !cov2d.iter().all(|v| v.is_finite()) || cov2d.determinant() <= 0.0 {
        return None;
    }
    let splat = Splat2D {
        mean_px: cam.pixel_of_camera_point(&pc),
        cov2d,
        depth: pc.z,
        color,
        base_opacity: opacity,
    };
    let (rx, ry) = splat.radius();
    let m = splat.mean_px;
    if m.x + rx < 0.0 || m.y + ry < 0.0 || m.x - rx > cam.width as f64 || m.y - ry > cam.height as f64 {
        return None;
    }
    Some(splat)
}

/// `project_gaussian` with explicit settings.
pub fn project_gaussian_with(cam: &Camera, g: &Gaussian3D, settings: &RenderSettings) -> Option<Splat2D> {
    project_world(cam, &g.position, &g.covariance(), g.color, g.opacity(), settings)
}

/// Projects `g` through `cam` using the default render settings.
pub fn project_gaussian(cam: &Camera, g: &Gaussian3D) -> Option<Splat2D> {
    project_gaussian_with(cam, g, &RenderSettings::default())
}
