//! Geometry, rendering and placement math for composing Gaussian-splat assets
//! into animated scenes.

pub mod bbox;
pub mod camera;
pub mod composer;
pub mod error;
pub mod gaussian;
pub mod lifting;
pub mod math;
pub mod ply;
pub mod raster;
pub mod transform;

pub use bbox::{Aabb, BBox2D, BBox3D};
pub use camera::Camera;
pub use error::{Error, Result};
pub use gaussian::{covariance_of, Gaussian3D, GaussianCloud};
pub use raster::{DepthMap, Framebuffer, Layer, RenderSettings, Renderer};
pub use transform::{apply_transform, RigidTransform};

pub use nalgebra;
