//! 3D Gaussian primitives and clouds.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::bbox::Aabb;
use crate::error::{Error, Result};
use crate::math::{logit, sigmoid};

/// One anisotropic Gaussian: mean, per-axis log std-dev, orientation,
/// opacity logit and DC color.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    pub position: Vector3<f64>,
    pub log_scale: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub opacity_logit: f64,
    /// Linear RGB in [0, 1].
    pub color: Vector3<f64>,
}

impl Gaussian3D {
    /// Builds a Gaussian from raw (possibly unnormalized) quaternion
    /// components and validates the result.
    pub fn new(
        position: Vector3<f64>,
        log_scale: Vector3<f64>,
        rotation: Quaternion<f64>,
        opacity_logit: f64,
        color: Vector3<f64>,
    ) -> Result<Self> {
        let norm = rotation.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidGaussian(format!(
                "quaternion norm {norm} cannot be normalized"
            )));
        }
        let g = Self {
            position,
            log_scale,
            rotation: UnitQuaternion::from_quaternion(rotation),
            opacity_logit,
            color,
        };
        g.validate()?;
        Ok(g)
    }

    /// Isotropic Gaussian with world std-dev `std` and opacity `alpha` in (0, 1).
    pub fn isotropic(position: Vector3<f64>, std: f64, alpha: f64, color: Vector3<f64>) -> Self {
        Self {
            position,
            log_scale: Vector3::repeat(std.ln()),
            rotation: UnitQuaternion::identity(),
            opacity_logit: logit(alpha),
            color,
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    /// `R diag(s)² Rᵀ`, without validation. See [`covariance_of`].
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation.to_rotation_matrix().into_inner();
        let s2 = self.log_scale.map(|l| (2.0 * l).exp());
        let rs = r * Matrix3::from_diagonal(&s2);
        let cov = rs * r.transpose();
        // exact symmetry
        (cov + cov.transpose()) * 0.5
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.position.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.color.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidGaussian("non-finite field".into()));
        }
        if (self.rotation.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidGaussian(format!(
                "quaternion norm {} is not unit",
                self.rotation.norm()
            )));
        }
        let scale = self.scale();
        if !scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidGaussian(format!(
                "scale {scale:?} must be finite and positive"
            )));
        }
        let a = self.opacity();
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidGaussian(format!(
                "opacity {a} is not in the open unit interval"
            )));
        }
        Ok(())
    }
}

/// Covariance of a validated Gaussian.
pub fn covariance_of(g: &Gaussian3D) -> Result<Matrix3<f64>> {
    g.validate()?;
    Ok(g.covariance())
}

/// An ordered set of Gaussians representing one concept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianCloud {
    pub label: String,
    pub gaussians: Vec<Gaussian3D>,
}

impl GaussianCloud {
    pub fn new(label: impl Into<String>, gaussians: Vec<Gaussian3D>) -> Self {
        Self {
            label: label.into(),
            gaussians,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gaussians.iter().enumerate() {
            g.validate()
                .map_err(|e| Error::InvalidGaussian(format!("{} #{i}: {e}", self.label)))?;
        }
        Ok(())
    }

    /// Axis-aligned bounds of the Gaussian centers.
    pub fn bounds(&self) -> Option<Aabb> {
        let mut it = self.gaussians.iter().map(|g| g.position);
        let first = it.next()?;
        Some(it.fold(Aabb::point(first), |b, p| b.including(p)))
    }

    /// Radius of the sphere around the center bound that contains every mean.
    pub fn bounding_radius(&self) -> f64 {
        let Some(b) = self.bounds() else { return 0.0 };
        let c = b.center();
        self.gaussians
            .iter()
            .map(|g| (g.position - c).norm())
            .fold(0.0, f64::max)
    }
}
