//! Pinhole camera with world-to-camera extrinsics.
//!
//! Pixel coordinates are continuous with the origin at the top-left corner of
//! the image, +x right and +y down; pixel `(i, j)` covers `[i, i+1) × [j, j+1)`
//! and its center sits at `(i + 0.5, j + 0.5)`. The camera looks down +z in
//! camera space and depth means camera-space z.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{is_rotation, orthonormality_error};

pub const DEFAULT_DEPTH_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_cam_rotation: Matrix3<f64>,
    pub world_to_cam_translation: Vector3<f64>,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_cam_rotation: Matrix3<f64>,
        world_to_cam_translation: Vector3<f64>,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_cam_rotation,
            world_to_cam_translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at the world origin looking down +z.
    pub fn identity_pose(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        Self::new(fx, fy, cx, cy, width, height, Matrix3::identity(), Vector3::zeros())
    }

    /// Camera at `eye` looking at `target`. `up` is the world direction that
    /// should appear toward the top of the image.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fx: f64,
        fy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::InvalidCamera("eye and target coincide".into()));
        }
        let z = forward.normalize();
        let down = -up;
        let y = down - z * z.dot(&down);
        if y.norm() < 1e-9 {
            return Err(Error::InvalidCamera("up vector is parallel to the view direction".into()));
        }
        let y = y.normalize();
        let x = y.cross(&z);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let t = -(r * eye);
        Self::new(fx, fy, width as f64 / 2.0, height as f64 / 2.0, width, height, r, t)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidCamera(m));
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return fail(format!("focal lengths must be positive ({}, {})", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return fail(format!("zero-area image {}x{}", self.width, self.height));
        }
        if !(0.0..=self.width as f64).contains(&self.cx) || !(0.0..=self.height as f64).contains(&self.cy) {
            return fail(format!("principal point ({}, {}) outside image", self.cx, self.cy));
        }
        if !is_rotation(&self.world_to_cam_rotation, 1e-9) {
            return fail(format!(
                "extrinsic rotation is not orthonormal (error {:e})",
                orthonormality_error(&self.world_to_cam_rotation)
            ));
        }
        if !self.world_to_cam_translation.iter().all(|v| v.is_finite()) {
            return fail("non-finite translation".into());
        }
        Ok(())
    }

    pub fn to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.world_to_cam_rotation * p_world + self.world_to_cam_translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.world_to_cam_rotation.transpose() * self.world_to_cam_translation)
    }

    /// Pixel and depth of a world point; fails when camera-space z ≤ `DEFAULT_DEPTH_EPSILON`.
    pub fn project_point(&self, p_world: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
        self.project_point_eps(p_world, DEFAULT_DEPTH_EPSILON)
    }

    pub fn project_point_eps(&self, p_world: &Vector3<f64>, eps: f64) -> Result<(Vector2<f64>, f64)> {
        let pc = self.to_camera(p_world);
        if pc.z <= eps {
            return Err(Error::BehindCamera { z: pc.z });
        }
        Ok((self.pixel_of_camera_point(&pc), pc.z))
    }

    pub fn pixel_of_camera_point(&self, pc: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy)
    }

    /// World point seen at `pixel` with camera-space depth `depth`
    /// (`R⁻¹ (K⁻¹ [u v 1]ᵀ · depth − t)`).
    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        let ray = Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0);
        self.world_to_cam_rotation.transpose() * (ray * depth - self.world_to_cam_translation)
    }

    pub fn contains_pixel(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x <= self.width as f64 && pixel.y <= self.height as f64
    }

    /// Same pose and field of view at another resolution.
    pub fn with_resolution(&self, width: u32, height: u32) -> Result<Self> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self::new(
            self.fx * sx,
            self.fy * sy,
            self.cx * sx,
            self.cy * sy,
            width,
            height,
            self.world_to_cam_rotation,
            self.world_to_cam_translation,
        )
    }

    pub fn same_intrinsics(&self, other: &Camera) -> bool {
        self.fx == other.fx
            && self.fy == other.fy
            && self.cx == other.cx
            && self.cy == other.cy
            && self.width == other.width
            && self.height == other.height
    }
}

/// On-disk form: rotation as row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<CameraRecord> for Camera {
    type Error = Error;

    fn try_from(r: CameraRecord) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        Camera::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height, m, Vector3::from(r.translation))
    }
}

impl From<Camera> for CameraRecord {
    fn from(c: Camera) -> Self {
        let m = c.world_to_cam_rotation;
        CameraRecord {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation: c.world_to_cam_translation.into(),
        }
    }
}
