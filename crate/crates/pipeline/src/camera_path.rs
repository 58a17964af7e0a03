//! Keyframed camera motion: positions linear, orientations slerped,
//! intrinsics fixed by the first keyframe.

use std::path::Path;

use c3v_core::Camera;
use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Hold,
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookAt {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeyPose {
    LookAt(LookAt),
    Camera(Camera),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub time: f64,
    #[serde(flatten)]
    pub pose: KeyPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPathFile {
    #[serde(default)]
    pub interpolation: Interpolation,
    pub keyframes: Vec<KeyframeRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraPath {
    pub keyframes: Vec<(f64, Camera)>,
    pub interpolation: Interpolation,
}

impl CameraPath {
    pub fn new(keyframes: Vec<(f64, Camera)>, interpolation: Interpolation) -> Result<Self> {
        let p = Self {
            keyframes,
            interpolation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn fixed(camera: Camera) -> Self {
        Self {
            keyframes: vec![(0.0, camera)],
            interpolation: Interpolation::Hold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Some((_, first)) = self.keyframes.first() else {
            return Err(PipelineError::Config("camera path has no keyframes".into()));
        };
        for (i, (t, cam)) in self.keyframes.iter().enumerate() {
            if !(0.0..=1.0).contains(t) {
                return Err(PipelineError::Config(format!("keyframe {i} time {t} is outside [0, 1]")));
            }
            if i > 0 && *t <= self.keyframes[i - 1].0 {
                return Err(PipelineError::Config(format!("keyframe times must increase strictly (keyframe {i})")));
            }
            if !cam.same_intrinsics(first) {
                return Err(PipelineError::Config(format!("keyframe {i} changes the camera intrinsics")));
            }
        }
        Ok(())
    }

    pub fn from_file_contents(text: &str, path: &Path) -> Result<Self> {
        let file: CameraPathFile = toml::from_str(text).map_err(|e| PipelineError::parse(path, e))?;
        let mut keys = Vec::with_capacity(file.keyframes.len());
        for k in file.keyframes {
            let cam = match k.pose {
                KeyPose::Camera(c) => c,
                KeyPose::LookAt(l) => Camera::look_at(
                    Vector3::from(l.eye),
                    Vector3::from(l.target),
                    Vector3::from(l.up),
                    l.fx,
                    l.fy,
                    l.width,
                    l.height,
                )?,
            };
            keys.push((k.time, cam));
        }
        Self::new(keys, file.interpolation)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_file_contents(&text, path)
    }

    pub fn with_resolution(&self, width: u32, height: u32) -> Result<Self> {
        let keys = self
            .keyframes
            .iter()
            .map(|(t, c)| Ok((*t, c.with_resolution(width, height)?)))
            .collect::<Result<_>>()?;
        Self::new(keys, self.interpolation)
    }

    /// Working camera used for planning and lifting.
    pub fn first(&self) -> &Camera {
        &self.keyframes[0].1
    }

    pub fn camera_at(&self, u: f64) -> Result<Camera> {
        let keys = &self.keyframes;
        let k = keys.iter().rposition(|(t, _)| *t <= u).unwrap_or(0);
        if self.interpolation == Interpolation::Hold || k + 1 >= keys.len() || u <= keys[k].0 {
            return Ok(keys[k].1.clone());
        }
        let (t0, a) = &keys[k];
        let (t1, b) = &keys[k + 1];
        let s = ((u - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(a.world_to_cam_rotation));
        let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(b.world_to_cam_rotation));
        let r = qa.slerp(&qb, s).to_rotation_matrix().into_inner();
        let center = a.center() * (1.0 - s) + b.center() * s;
        Ok(Camera::new(a.fx, a.fy, a.cx, a.cy, a.width, a.height, r, -(r * center))?)
    }

    /// Camera for output frame `f`; a single frame sits at time 0.
    pub fn camera_for_frame(&self, f: usize, frame_count: usize) -> Result<Camera> {
        self.camera_at(frame_time(f, frame_count))
    }
}

pub fn frame_time(f: usize, frame_count: usize) -> f64 {
    if frame_count <= 1 {
        0.0
    } else {
        f as f64 / (frame_count - 1) as f64
    }
}
