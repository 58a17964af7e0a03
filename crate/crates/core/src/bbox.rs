use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel extent of an object's bounding box on the image plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2D {
    pub height_px: f64,
    pub width_px: f64,
}

impl BBox2D {
    pub fn new(height_px: f64, width_px: f64) -> Result<Self> {
        if !(height_px > 0.0 && width_px > 0.0 && height_px.is_finite() && width_px.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bbox dimensions must be positive, got {height_px}x{width_px}"
            )));
        }
        Ok(Self {
            height_px,
            width_px,
        })
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.width_px <= width as f64 && self.height_px <= height as f64
    }
}

/// World-space height of an object (plus optional horizontal extents).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox3D {
    pub height_world: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_world: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_world: Option<f64>,
}

impl BBox3D {
    pub fn new(height_world: f64) -> Result<Self> {
        if !(height_world > 0.0 && height_world.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "3D bbox height must be positive, got {height_world}"
            )));
        }
        Ok(Self {
            height_world,
            width_world: None,
            depth_world: None,
        })
    }
}

/// Axis-aligned box over points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn point(p: Vector3<f64>) -> Self {
        Self { min: p, max: p }
    }

    pub fn including(self, p: Vector3<f64>) -> Self {
        Self {
            min: self.min.inf(&p),
            max: self.max.sup(&p),
        }
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}
