//! Similarity transforms applied to whole clouds.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian3D, GaussianCloud};
use crate::math::{is_rotation, orthonormality_error};

/// `p -> s·R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    uniform_scale: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, uniform_scale: f64) -> Result<Self> {
        if !is_rotation(&rotation, 1e-9) {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal with det +1 (orthonormality error {:e}, det {})",
                orthonormality_error(&rotation),
                rotation.determinant()
            )));
        }
        if !(uniform_scale > 0.0 && uniform_scale.is_finite()) {
            return Err(Error::InvalidTransform(format!(
                "uniform scale must be positive, got {uniform_scale}"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
            uniform_scale,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            uniform_scale: 1.0,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    pub fn from_scale(s: f64) -> Result<Self> {
        Self::new(Matrix3::identity(), Vector3::zeros(), s)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn uniform_scale(&self) -> f64 {
        self.uniform_scale
    }

    pub fn is_identity(&self) -> bool {
        self.uniform_scale == 1.0
            && self.translation == Vector3::zeros()
            && self.rotation == Matrix3::identity()
    }

    /// The transform that applies `self` first and then `outer`.
    pub fn then(&self, outer: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: outer.rotation * self.rotation,
            translation: outer.uniform_scale * (outer.rotation * self.translation) + outer.translation,
            uniform_scale: outer.uniform_scale * self.uniform_scale,
        }
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.uniform_scale * (self.rotation * p) + self.translation
    }

    pub fn apply_gaussian(&self, g: &Gaussian3D) -> Gaussian3D {
        if self.is_identity() {
            return g.clone();
        }
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        Gaussian3D {
            position: self.apply_point(&g.position),
            log_scale: g.log_scale.add_scalar(self.uniform_scale.ln()),
            rotation: q * g.rotation,
            opacity_logit: g.opacity_logit,
            color: g.color,
        }
    }
}

/// Maps every Gaussian of `cloud` through `t`; opacity and color are untouched.
pub fn apply_transform(cloud: &GaussianCloud, t: &RigidTransform) -> GaussianCloud {
    if t.is_identity() {
        return cloud.clone();
    }
    GaussianCloud {
        label: cloud.label.clone(),
        gaussians: cloud.gaussians.iter().map(|g| t.apply_gaussian(g)).collect(),
    }
}
