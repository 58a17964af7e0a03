//! Scene manifests, the asset library and staged plan/lift/refine/render
//! orchestration on top of the core math and the director client.

pub mod camera_path;
pub mod clip;
pub mod compose;
pub mod error;
pub mod fixture;
pub mod job;
pub mod library;
pub mod manifest;
pub mod stamp;

pub use camera_path::{CameraPath, Interpolation};
pub use clip::{clip_frame_index, AnimationClip, ClipMode};
pub use compose::{compose_frame, ObjectTimeline, PlacedObject};
pub use error::{FailureKind, PipelineError, Result, Stage, StageFailure};
pub use job::{FrameSet, Job, LiftRecord, PlacementRecord, PlanRecord, RunManifest, StageReport};
pub use library::{AssetKind, AssetLibrary, AssetRef};
pub use manifest::{swap_asset, Edit, ObjectEntry, ResolvedManifest, SceneManifest};
