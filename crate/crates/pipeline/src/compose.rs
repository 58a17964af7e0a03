//! Per-frame placement of objects and joint rasterization with the scene.

use c3v_core::composer::{RotationSchedule, DEFAULT_DIRECTION_EPSILON};
use c3v_core::lifting::{resample_path, ResampleMode};
use c3v_core::raster::{Framebuffer, Layer, RenderSettings, Renderer};
use c3v_core::{Camera, Error as CoreError, GaussianCloud, RigidTransform};
use nalgebra::{Matrix3, Vector3};

use crate::error::Result;

/// Where one object sits at every output frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTimeline {
    pub scale: f64,
    pub positions: Vec<Vector3<f64>>,
    pub rotations: Vec<Matrix3<f64>>,
}

impl ObjectTimeline {
    /// Resamples the effective path to `frame_count` positions and gives each
    /// the heading of its nearest path segment.
    pub fn new(
        scale: f64,
        locations: &[Vector3<f64>],
        schedule: &RotationSchedule,
        frame_count: usize,
        mode: ResampleMode,
    ) -> Result<Self> {
        if locations.is_empty() || frame_count == 0 {
            return Err(CoreError::InvalidConfig("timeline needs locations and at least one frame".into()).into());
        }
        let moving = locations.len() >= 2 && locations.windows(2).any(|w| (w[1] - w[0]).norm() > DEFAULT_DIRECTION_EPSILON);
        let positions = if !moving || frame_count == 1 {
            vec![locations[0]; frame_count]
        } else {
            resample_path(locations, frame_count, mode)?
        };
        let rotations = positions
            .iter()
            .map(|p| {
                let seg = nearest_segment(locations, p);
                schedule.rotations.get(seg).copied().unwrap_or_else(Matrix3::identity)
            })
            .collect();
        Ok(Self {
            scale,
            positions,
            rotations,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn transform_at(&self, f: usize) -> Result<RigidTransform> {
        let p = self.positions.get(f).ok_or(CoreError::IndexOutOfRange {
            index: f,
            len: self.positions.len(),
        })?;
        Ok(RigidTransform::new(self.rotations[f], *p, self.scale)?)
    }
}

/// Index of the polyline segment closest to `p` (0 for a single point).
pub fn nearest_segment(points: &[Vector3<f64>], p: &Vector3<f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, w) in points.windows(2).enumerate() {
        let d = w[1] - w[0];
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 { ((p - w[0]).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let dist = (w[0] + d * t - p).norm();
        if dist < best.0 {
            best = (dist, i);
        }
    }
    best.1
}

/// One object at one frame: its (possibly animated) cloud and placement.
#[derive(Debug, Clone)]
pub struct PlacedObject {
    pub cloud: GaussianCloud,
    pub transform: RigidTransform,
}

/// Scene plus placed objects, rasterized in a single pass.
pub fn compose_frame(
    scene: &GaussianCloud,
    objects: &[PlacedObject],
    camera: &Camera,
    settings: RenderSettings,
    background: Vector3<f64>,
) -> Result<Framebuffer> {
    let mut layers = Vec::with_capacity(objects.len() + 1);
    layers.push(Layer::untransformed(scene));
    layers.extend(objects.iter().map(|o| Layer::new(&o.cloud, o.transform).masked()));
    Ok(Renderer::new(settings).rasterize(camera, &layers, background)?)
}
