//! Staged execution of a manifest: plan, lift, refine, render.
//!
//! Every stage reads only files written by earlier stages (or referenced by
//! the manifest) and records a content stamp; a stage whose stamp is
//! unchanged and whose outputs exist is skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use c3v_core::composer::{
    refine_locations, refine_scale, rotation_schedule_for_points, GroundContactProvider, PlacementParams,
    PullToTargetProvider, RefineScene, RefineTrace, RotationSchedule, ScoreProvider, SilhouetteProvider,
    ZeroProvider, DEFAULT_DIRECTION_EPSILON,
};
use c3v_core::lifting::{lift_point, lift_trajectory, sample_depth, Trajectory2D, Trajectory3D, UpAxis};
use c3v_core::ply::read_ply;
use c3v_core::raster::DepthOrigin;
use c3v_core::{
    apply_transform, BBox2D, DepthMap, Error as CoreError, Framebuffer, GaussianCloud, Layer, RenderSettings,
    Renderer, RigidTransform,
};
use c3v_director::{
    is_static_motion, AuditLog, Director, DirectorConfig, HttpTransport, MockTransport, ModelParams, ObjectPlan,
    RemoteScoreProvider, ReplayTransport, Transport,
};
use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use crate::camera_path::CameraPath;
use crate::clip::AnimationClip;
use crate::compose::{compose_frame, ObjectTimeline, PlacedObject};
use crate::error::{PipelineError, Result, Stage, StageContext, StageFailure};
use crate::library::AssetKind;
use crate::manifest::{DirectorMode, ObjectEntry, ProviderKind, ResolvedManifest, SCHEMA_VERSION};
use crate::stamp::{file_sha256, sha256_hex, write_file, StageStamp, StampHasher};

pub const SCENE_RENDER: &str = "plan/scene.png";
pub const SCENE_DEPTH: &str = "plan/scene_depth.pfm";
pub const AUDIT_LOG: &str = "audit.ndjson";
pub const RUN_MANIFEST: &str = "run_manifest.json";

pub fn plan_file(id: &str) -> String {
    format!("plan/{id}.json")
}

pub fn lift_file(id: &str) -> String {
    format!("lift/{id}.json")
}

pub fn placement_file(id: &str) -> String {
    format!("refine/{id}.json")
}

pub fn frame_file(f: usize) -> String {
    format!("frames/frame_{f:05}.png")
}

/// Output of the plan stage for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub object_id: String,
    /// `director:<transport>` or `file`.
    pub source: String,
    pub plan: ObjectPlan,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PlanInput {
    Record(PlanRecord),
    Bare(ObjectPlan),
}

/// Output of the lift stage for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftRecord {
    pub object_id: String,
    pub is_static: bool,
    pub bbox: BBox2D,
    pub trajectory_2d: Vec<[f64; 2]>,
    /// Depth under the first anchor.
    pub start_depth: f64,
    /// `S = H_2D · z0 / f_y`.
    pub base_scale: f64,
    /// World height used to raise anchors to object centers.
    pub height: f64,
    pub trajectory: Trajectory3D,
    pub reprojection_error_px: f64,
}

/// Output of the refine stage for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub object_id: String,
    pub provider: String,
    pub is_static: bool,
    pub params: PlacementParams,
    pub effective_scale: f64,
    pub effective_locations: Vec<Vector3<f64>>,
    pub rotations: RotationSchedule,
    pub trace: RefineTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunObject {
    pub id: String,
    pub motion: String,
    pub clip: Option<String>,
    pub effective_scale: f64,
    pub path_points: usize,
}

/// Reproducibility record written next to the frames. Holds no timestamps so
/// identical runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub manifest_sha256: String,
    pub seed: u64,
    pub frame_count: usize,
    pub resolution: [u32; 2],
    pub director: DirectorMode,
    pub provider: ProviderKind,
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, String>,
    pub objects: Vec<RunObject>,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub cached: bool,
    pub stamp: String,
    pub outputs: Vec<String>,
}

/// Seed for one object's refinement stream.
pub fn object_seed(seed: u64, id: &str) -> u64 {
    let d = Sha256::digest(id.as_bytes());
    seed ^ u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Transform taking `cloud` to unit height along `up`, centered on the origin.
pub fn canonical_transform(cloud: &GaussianCloud, up: UpAxis) -> Result<RigidTransform> {
    let bounds = cloud
        .bounds()
        .ok_or_else(|| PipelineError::Config(format!("object {:?} has no Gaussians", cloud.label)))?;
    let height = bounds.extent().dot(&up.unit()).abs();
    if !(height > 0.0 && height.is_finite()) {
        return Err(PipelineError::Config(format!("object {:?} has zero height", cloud.label)));
    }
    Ok(RigidTransform::new(Matrix3::identity(), -bounds.center() / height, 1.0 / height)?)
}

/// Identity headings for a stationary object, otherwise headings along the
/// path (identity when every step is vertical).
fn schedule_for(points: &[Vector3<f64>], up: UpAxis) -> RotationSchedule {
    if points.len() < 2 {
        return RotationSchedule {
            rotations: vec![Matrix3::identity(); points.len()],
        };
    }
    match rotation_schedule_for_points(points, up, DEFAULT_DIRECTION_EPSILON) {
        Ok(s) => s,
        Err(_) => {
            warn!("path has no horizontal motion; keeping the canonical heading");
            RotationSchedule {
                rotations: vec![Matrix3::identity(); points.len()],
            }
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, needs: Stage) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::MissingInput {
            path: path.to_path_buf(),
            needs,
        },
        _ => PipelineError::io(path, e),
    })?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::parse(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("records serialize");
    bytes.push(b'\n');
    write_file(path, &bytes)
}

/// A manifest bound to an output directory.
pub struct Job {
    pub resolved: ResolvedManifest,
    pub out_dir: PathBuf,
    force: bool,
    transport: Option<Arc<dyn Transport>>,
    provider: Option<Arc<dyn ScoreProvider>>,
}

impl Job {
    pub fn new(resolved: ResolvedManifest, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            resolved,
            out_dir: out_dir.into(),
            force: false,
            transport: None,
            provider: None,
        }
    }

    /// Re-run stages even when their stamps match.
    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    /// Replaces the transport chosen by the manifest's director mode.
    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    /// Replaces the score provider chosen by the manifest.
    pub fn with_provider(mut self, provider: Arc<dyn ScoreProvider>) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn out(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    fn objects(&self) -> &[ObjectEntry] {
        &self.resolved.manifest.objects
    }

    pub fn camera_path(&self) -> Result<CameraPath> {
        let m = &self.resolved.manifest;
        CameraPath::load(&self.resolved.path(&m.camera))?.with_resolution(m.output.width, m.output.height)
    }

    fn scene_path(&self) -> Result<PathBuf> {
        self.resolved.asset_path(&self.resolved.manifest.scene.asset, AssetKind::Scene)
    }

    fn object_path(&self, o: &ObjectEntry) -> Result<PathBuf> {
        self.resolved.asset_path(&o.asset, AssetKind::Object)
    }

    fn background(&self) -> Vector3<f64> {
        Vector3::from(self.resolved.manifest.output.background)
    }

    /// Checks references and parses the camera path and pre-computed files.
    pub fn validate(&self) -> std::result::Result<(), StageFailure> {
        let at = |e: PipelineError| StageFailure::new(Stage::Validate, None, e);
        self.resolved.validate().map_err(at)?;
        self.camera_path().map_err(at)?;
        for o in self.objects() {
            if let Some(p) = &o.plan {
                self.load_plan_input(o, &self.resolved.path(p)).at(Stage::Validate, Some(&o.id))?;
            }
            if let Some(p) = &o.placement {
                read_json::<PlacementRecord>(&self.resolved.path(p), Stage::Refine).at(Stage::Validate, Some(&o.id))?;
            }
        }
        Ok(())
    }

    pub fn run(&self, stage: Stage) -> std::result::Result<StageReport, StageFailure> {
        match stage {
            Stage::Validate => self.validate().map(|_| StageReport {
                stage,
                cached: false,
                stamp: String::new(),
                outputs: Vec::new(),
            }),
            Stage::Plan => self.plan(),
            Stage::Lift => self.lift(),
            Stage::Refine => self.refine(),
            Stage::Render => self.render(),
        }
    }

    /// All four stages in order.
    pub fn compose(&self) -> std::result::Result<Vec<StageReport>, StageFailure> {
        Stage::ALL.iter().map(|&s| self.run(s)).collect()
    }

    fn cached(&self, stage: Stage, stamp: &str) -> Option<StageReport> {
        if self.force {
            return None;
        }
        let s = StageStamp::read(&self.out_dir, stage)?;
        if !s.is_current(&self.out_dir, stamp) {
            return None;
        }
        info!(stage = stage.as_str(), "cached");
        Some(StageReport {
            stage,
            cached: true,
            stamp: s.stamp,
            outputs: s.outputs,
        })
    }

    fn finish(&self, stage: Stage, stamp: String, outputs: Vec<String>) -> Result<StageReport> {
        StageStamp {
            stage,
            stamp: stamp.clone(),
            outputs: outputs.clone(),
        }
        .write(&self.out_dir)?;
        Ok(StageReport {
            stage,
            cached: false,
            stamp,
            outputs,
        })
    }

    // ---- plan -------------------------------------------------------------

    fn plan_stamp(&self) -> Result<String> {
        let m = &self.resolved.manifest;
        let mut h = StampHasher::new(Stage::Plan);
        h.file("scene", &self.scene_path()?, Stage::Validate)?;
        h.file("camera", &self.resolved.path(&m.camera), Stage::Validate)?;
        h.json("resolution", &[m.output.width, m.output.height]);
        h.json("background", &m.output.background);
        h.json("director", &m.director);
        h.text("transport", if self.transport.is_some() { "override" } else { "manifest" });
        if let Some(f) = &m.director.fixtures {
            h.file("fixtures", &self.resolved.path(f), Stage::Validate)?;
        }
        if let Some(f) = &m.director.replay {
            h.file("replay", &self.resolved.path(f), Stage::Validate)?;
        }
        for o in self.objects() {
            h.text("id", &o.id).text("prompt", &o.prompt).text("motion", o.planning_motion());
            if let Some(p) = &o.plan {
                h.file("plan", &self.resolved.path(p), Stage::Validate)?;
            }
        }
        Ok(h.finish())
    }

    fn director(&self) -> Result<Director> {
        let d = &self.resolved.manifest.director;
        let transport: Arc<dyn Transport> = match (&self.transport, d.mode) {
            (Some(t), _) => t.clone(),
            (None, DirectorMode::Mock) => {
                let mut t = MockTransport::embedded();
                if let Some(f) = &d.fixtures {
                    t = t.merged(MockTransport::from_file(&self.resolved.path(f))?);
                }
                Arc::new(t)
            }
            (None, DirectorMode::Live) => Arc::new(HttpTransport::from_env(Duration::from_secs(d.timeout_secs))?),
            (None, DirectorMode::Replay) => {
                let f = d
                    .replay
                    .as_ref()
                    .ok_or_else(|| PipelineError::Config("replay mode needs director.replay".into()))?;
                Arc::new(ReplayTransport::from_file(&self.resolved.path(f))?)
            }
        };
        let config = DirectorConfig {
            retry_limit: d.retry_limit,
            n_path_points: d.n_path_points,
            templates: d.templates.clone().unwrap_or_default(),
            model: ModelParams {
                timeout_secs: d.timeout_secs,
                ..ModelParams::default()
            },
        };
        let audit = AuditLog::open(self.out(AUDIT_LOG))?;
        Ok(Director::new(transport, config).with_audit(audit))
    }

    fn load_plan_input(&self, o: &ObjectEntry, path: &Path) -> Result<ObjectPlan> {
        let plan = match read_json::<PlanInput>(path, Stage::Plan)? {
            PlanInput::Record(r) => r.plan,
            PlanInput::Bare(p) => p,
        };
        let m = &self.resolved.manifest;
        if plan.image_size != [m.output.width, m.output.height] {
            return Err(PipelineError::Config(format!(
                "plan for {:?} was made at {}x{}, the output is {}x{}",
                o.id, plan.image_size[0], plan.image_size[1], m.output.width, m.output.height
            )));
        }
        if plan.trajectory.is_empty() {
            return Err(PipelineError::parse(path, "plan has no trajectory points"));
        }
        Ok(plan)
    }

    pub fn plan(&self) -> std::result::Result<StageReport, StageFailure> {
        let stage = Stage::Plan;
        let stamp = self.plan_stamp().at(stage, None)?;
        if let Some(r) = self.cached(stage, &stamp) {
            return Ok(r);
        }
        let cam = self.camera_path().at(stage, None)?;
        let scene = read_ply(self.scene_path().at(stage, None)?).at(stage, None)?;
        let out = Renderer::new(RenderSettings::default())
            .render(cam.first(), &[Layer::untransformed(&scene)], self.background())
            .at(stage, None)?;
        write_file(&self.out(SCENE_RENDER), &out.image.to_png().at(stage, None)?).at(stage, None)?;
        write_file(&self.out(SCENE_DEPTH), &out.depth.to_pfm()).at(stage, None)?;

        let mut director = None;
        let mut outputs = vec![SCENE_RENDER.to_string(), SCENE_DEPTH.to_string()];
        for o in self.objects() {
            let id = Some(o.id.as_str());
            let record = match &o.plan {
                Some(p) => PlanRecord {
                    object_id: o.id.clone(),
                    source: "file".into(),
                    plan: self.load_plan_input(o, &self.resolved.path(p)).at(stage, id)?,
                },
                None => {
                    if director.is_none() {
                        director = Some(self.director().at(stage, id)?);
                    }
                    let d = director.as_ref().expect("director was just created");
                    let plan = d.plan_object(&o.prompt, o.planning_motion(), &out.image).at(stage, id)?;
                    for f in &plan.flags {
                        info!(object = %o.id, flag = ?f, "plan flag");
                    }
                    PlanRecord {
                        object_id: o.id.clone(),
                        source: format!("director:{}", d.transport().name()),
                        plan,
                    }
                }
            };
            let rel = plan_file(&o.id);
            write_json(&self.out(&rel), &record).at(stage, id)?;
            outputs.push(rel);
        }
        self.finish(stage, stamp, outputs).at(stage, None)
    }

    // ---- lift -------------------------------------------------------------

    fn depth_path(&self) -> PathBuf {
        match &self.resolved.manifest.lift.depth {
            Some(d) => self.resolved.path(d),
            None => self.out(SCENE_DEPTH),
        }
    }

    fn lift_stamp(&self) -> Result<String> {
        let m = &self.resolved.manifest;
        let mut h = StampHasher::new(Stage::Lift);
        h.file("depth", &self.depth_path(), Stage::Plan)?;
        h.file("camera", &self.resolved.path(&m.camera), Stage::Validate)?;
        h.json("resolution", &[m.output.width, m.output.height]);
        h.json("lift", &m.lift);
        for o in self.objects() {
            h.text("id", &o.id).json("height", &o.height);
            h.file("plan", &self.out(&plan_file(&o.id)), Stage::Plan)?;
        }
        Ok(h.finish())
    }

    fn load_depth(&self) -> Result<DepthMap> {
        let m = &self.resolved.manifest;
        let depth = match &m.lift.depth {
            Some(d) => DepthMap::read_pfm(self.resolved.path(d), DepthOrigin::External)?.scaled(m.lift.depth_scale),
            None => DepthMap::read_pfm(self.out(SCENE_DEPTH), DepthOrigin::Rendered)?,
        };
        if (depth.width, depth.height) != (m.output.width, m.output.height) {
            return Err(PipelineError::Config(format!(
                "depth map is {}x{}, the output is {}x{}",
                depth.width, depth.height, m.output.width, m.output.height
            )));
        }
        Ok(depth)
    }

    pub fn lift(&self) -> std::result::Result<StageReport, StageFailure> {
        let stage = Stage::Lift;
        let stamp = self.lift_stamp().at(stage, None)?;
        if let Some(r) = self.cached(stage, &stamp) {
            return Ok(r);
        }
        let cam = self.camera_path().at(stage, None)?;
        let cam = cam.first();
        let depth = self.load_depth().at(stage, None)?;
        let opts = self.resolved.manifest.lift.options;
        let mut outputs = Vec::new();
        for o in self.objects() {
            let id = Some(o.id.as_str());
            let record: PlanRecord = read_json(&self.out(&plan_file(&o.id)), Stage::Plan).at(stage, id)?;
            let plan = record.plan;
            let bbox = BBox2D::new(plan.scale.height, plan.scale.width).at(stage, id)?;
            let points: Vec<Vector2<f64>> = plan.trajectory.iter().map(|p| Vector2::new(p[0], p[1])).collect();
            let anchor0 = opts.anchor_rule.anchor(&points[0], &bbox);
            let (z0, _) = sample_depth(&depth, &anchor0, opts.search_radius)
                .ok_or(PipelineError::DepthMissing { index: 0 })
                .at(stage, id)?;
            let base_scale = bbox.height_px * z0 / cam.fy;
            let height = o.height.unwrap_or(base_scale);
            let trajectory = if points.len() >= 2 {
                let t2 = Trajectory2D::new(points.clone(), bbox).at(stage, id)?;
                lift_trajectory(cam, &t2, &depth, height, &opts)
                    .map_err(|e| match e {
                        CoreError::DepthMissingAt { index } => PipelineError::DepthMissing { index },
                        other => other.into(),
                    })
                    .at(stage, id)?
            } else {
                let (_, src) = sample_depth(&depth, &anchor0, opts.search_radius).expect("sampled above");
                let p = lift_point(cam, &points[0], &depth, &bbox, height, &opts).at(stage, id)?;
                Trajectory3D {
                    points: vec![p],
                    up_axis: opts.up_axis,
                    height,
                    anchors: vec![anchor0],
                    depth_sources: vec![src],
                }
            };
            let mut err: f64 = 0.0;
            for (b, a) in trajectory.base_points().iter().zip(&trajectory.anchors) {
                let (px, _) = cam.project_point(b).at(stage, id)?;
                err = err.max((px - a).norm());
            }
            info!(object = %o.id, z0, base_scale, height, reprojection_px = err, "lifted");
            let lifted = LiftRecord {
                object_id: o.id.clone(),
                is_static: plan.is_static || trajectory.points.len() < 2,
                bbox,
                trajectory_2d: plan.trajectory.clone(),
                start_depth: z0,
                base_scale,
                height,
                trajectory,
                reprojection_error_px: err,
            };
            let rel = lift_file(&o.id);
            write_json(&self.out(&rel), &lifted).at(stage, id)?;
            outputs.push(rel);
        }
        self.finish(stage, stamp, outputs).at(stage, None)
    }

    // ---- refine -----------------------------------------------------------

    fn refine_stamp(&self) -> Result<String> {
        let m = &self.resolved.manifest;
        let mut h = StampHasher::new(Stage::Refine);
        h.file("scene", &self.scene_path()?, Stage::Validate)?;
        h.file("camera", &self.resolved.path(&m.camera), Stage::Validate)?;
        h.json("resolution", &[m.output.width, m.output.height]);
        h.json("background", &m.output.background);
        h.json("refine", &m.refine);
        h.json("up", &m.lift.options.up_axis);
        h.json("seed", &m.seed);
        h.text("provider", if self.provider.is_some() { "override" } else { "manifest" });
        if let Some(t) = &m.refine.pull_target {
            h.file("pull_target", &self.resolved.path(t), Stage::Validate)?;
        }
        for o in self.objects() {
            h.text("id", &o.id).text("prompt", &o.prompt).text("motion", &o.motion);
            h.file("asset", &self.object_path(o)?, Stage::Validate)?;
            match &o.placement {
                Some(p) => h.file("placement", &self.resolved.path(p), Stage::Validate)?,
                None => h.file("lift", &self.out(&lift_file(&o.id)), Stage::Lift)?,
            };
        }
        Ok(h.finish())
    }

    fn provider_for(&self, lift: &LiftRecord) -> Result<Arc<dyn ScoreProvider>> {
        if let Some(p) = &self.provider {
            return Ok(p.clone());
        }
        let m = &self.resolved.manifest;
        let r = &m.refine;
        let (w, h) = (m.output.width, m.output.height);
        let a = lift.trajectory.anchors[0];
        Ok(match r.provider {
            ProviderKind::Zero => Arc::new(ZeroProvider),
            ProviderKind::Pull => {
                let path = self.resolved.path(r.pull_target.as_deref().unwrap_or_default());
                let target = Framebuffer::read_png(&path)?;
                if (target.width, target.height) != (w, h) {
                    return Err(PipelineError::Config(format!(
                        "pull target is {}x{}, the output is {w}x{h}",
                        target.width, target.height
                    )));
                }
                Arc::new(PullToTargetProvider::new(target).with_gain(r.gain))
            }
            ProviderKind::Silhouette => {
                let b = &lift.bbox;
                let half = b.width_px / 2.0;
                Arc::new(
                    SilhouetteProvider::rectangle(w, h, a.x - half, a.y - b.height_px, a.x + half, a.y).with_gain(r.gain),
                )
            }
            ProviderKind::Ground => {
                let lowest = lift.trajectory.anchors.iter().map(|a| a.y).fold(f64::MIN, f64::max);
                let row = (lowest.floor() + 1.0).clamp(0.0, h as f64) as u32;
                let mut p = GroundContactProvider::new(row);
                p.gain = r.gain;
                Arc::new(p)
            }
            ProviderKind::Remote => {
                let t = HttpTransport::from_env(Duration::from_secs(m.director.timeout_secs))?;
                Arc::new(RemoteScoreProvider::new(Arc::new(t)))
            }
        })
    }

    fn refine_object(&self, o: &ObjectEntry, scene: &GaussianCloud) -> Result<PlacementRecord> {
        let m = &self.resolved.manifest;
        let lift: LiftRecord = read_json(&self.out(&lift_file(&o.id)), Stage::Lift)?;
        let up = lift.trajectory.up_axis;
        let cam = self.camera_path()?.first().clone();
        let raw = read_ply(self.object_path(o)?)?;
        let object = apply_transform(&raw, &canonical_transform(&raw, up)?);

        let mut locations = lift.trajectory.deduplicated();
        if lift.is_static {
            locations.truncate(1);
        }
        let r = &m.refine;
        let tau_s = r.tau_s.unwrap_or(r.tau_s_factor * lift.base_scale);
        let tau_l = r.tau_l.unwrap_or(r.tau_l_factor * lift.height);
        let params = PlacementParams::new(lift.base_scale, locations.clone(), tau_s, tau_l)?;
        let provider = self.provider_for(&lift)?;

        let mut refine_scene = RefineScene::new(cam, &object);
        refine_scene.background = vec![Layer::untransformed(scene)];
        refine_scene.rotations = schedule_for(&locations, up).rotations;
        refine_scene.background_color = self.background();
        refine_scene.prompt = format!("{} {}", o.prompt, o.motion).trim().to_string();
        let mut config = r.optimizer;
        config.seed = object_seed(m.seed, &o.id);

        let (params, mut trace) = refine_scale(&params, &refine_scene, provider.as_ref(), &config)?;
        let params = if r.refine_locations && r.provider != ProviderKind::Silhouette {
            let (p, t) = refine_locations(&params, &refine_scene, provider.as_ref(), &config)?;
            trace.extend(t);
            p
        } else {
            params
        };
        let effective_locations = params.effective_locations();
        let rotations = if lift.is_static {
            RotationSchedule {
                rotations: vec![Matrix3::identity()],
            }
        } else {
            schedule_for(&effective_locations, up)
        };
        info!(
            object = %o.id,
            provider = provider.name(),
            scale = params.effective_scale(),
            iterations = ?trace.iterations,
            "refined"
        );
        Ok(PlacementRecord {
            object_id: o.id.clone(),
            provider: provider.name().to_string(),
            is_static: lift.is_static,
            effective_scale: params.effective_scale(),
            effective_locations,
            rotations,
            params,
            trace,
        })
    }

    pub fn refine(&self) -> std::result::Result<StageReport, StageFailure> {
        let stage = Stage::Refine;
        let stamp = self.refine_stamp().at(stage, None)?;
        if let Some(r) = self.cached(stage, &stamp) {
            return Ok(r);
        }
        let scene = read_ply(self.scene_path().at(stage, None)?).at(stage, None)?;
        let mut outputs = Vec::new();
        for o in self.objects() {
            let id = Some(o.id.as_str());
            let record = match &o.placement {
                Some(p) => read_json::<PlacementRecord>(&self.resolved.path(p), Stage::Refine).at(stage, id)?,
                None => self.refine_object(o, &scene).at(stage, id)?,
            };
            let rel = placement_file(&o.id);
            write_json(&self.out(&rel), &record).at(stage, id)?;
            outputs.push(rel);
        }
        self.finish(stage, stamp, outputs).at(stage, None)
    }

    // ---- render -----------------------------------------------------------

    /// Clip directory for `o`: the explicit reference, else the best tag match
    /// in the library. Stationary motions without a match get no clip.
    pub fn resolve_clip(&self, o: &ObjectEntry) -> Result<Option<(String, PathBuf)>> {
        if let Some(c) = &o.clip {
            return Ok(Some((c.clone(), self.resolved.asset_path(c, AssetKind::Motion)?)));
        }
        let Some(lib) = self.resolved.library() else {
            return Ok(None);
        };
        if lib.motion_tags().is_empty() || o.motion.trim().is_empty() {
            return Ok(None);
        }
        match lib.best_motion(&o.motion) {
            Ok((id, _)) => {
                let dir = lib.get(AssetKind::Motion, &id)?.to_path_buf();
                Ok(Some((format!("motion:{id}"), dir)))
            }
            Err(PipelineError::MotionNotFound(_)) if is_static_motion(&o.motion) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn load_clips(&self) -> Result<Vec<Option<(String, AnimationClip)>>> {
        self.objects()
            .iter()
            .map(|o| {
                self.resolve_clip(o)?
                    .map(|(label, dir)| Ok((label, AnimationClip::load(&dir)?)))
                    .transpose()
            })
            .collect()
    }

    fn render_stamp(&self, clips: &[Option<(String, AnimationClip)>]) -> Result<String> {
        let m = &self.resolved.manifest;
        let mut h = StampHasher::new(Stage::Render);
        h.file("scene", &self.scene_path()?, Stage::Validate)?;
        h.file("camera", &self.resolved.path(&m.camera), Stage::Validate)?;
        h.json("output", &m.output);
        h.json("frames", &m.frame_count);
        h.json("up", &m.lift.options.up_axis);
        for (o, clip) in self.objects().iter().zip(clips) {
            h.text("id", &o.id);
            h.file("asset", &self.object_path(o)?, Stage::Validate)?;
            h.file("placement", &self.out(&placement_file(&o.id)), Stage::Refine)?;
            if let Some((label, c)) = clip {
                h.text("clip", label);
                for s in &c.sources {
                    h.file("clip_file", s, Stage::Validate)?;
                }
            }
        }
        Ok(h.finish())
    }

    /// Scene, placed objects and cameras for every output frame, read from
    /// the refine outputs.
    pub fn frame_set(&self) -> std::result::Result<FrameSet, StageFailure> {
        let clips = self.load_clips().at(Stage::Render, None)?;
        Ok(self.frame_set_with(clips)?.0)
    }

    fn frame_set_with(
        &self,
        clips: Vec<Option<(String, AnimationClip)>>,
    ) -> std::result::Result<(FrameSet, Vec<RunObject>), StageFailure> {
        let stage = Stage::Render;
        let m = &self.resolved.manifest;
        let up = m.lift.options.up_axis;
        let cameras = self.camera_path().at(stage, None)?;
        let scene = read_ply(self.scene_path().at(stage, None)?).at(stage, None)?;
        let mut tracks = Vec::new();
        let mut run_objects = Vec::new();
        for (o, clip) in self.objects().iter().zip(clips) {
            let id = Some(o.id.as_str());
            let placement: PlacementRecord =
                read_json(&self.out(&placement_file(&o.id)), Stage::Refine).at(stage, id)?;
            let appearance = read_ply(self.object_path(o).at(stage, id)?).at(stage, id)?;
            let normalize = canonical_transform(&appearance, up).at(stage, id)?;
            let timeline = ObjectTimeline::new(
                placement.effective_scale,
                &placement.effective_locations,
                &placement.rotations,
                m.frame_count,
                m.output.resample,
            )
            .at(stage, id)?;
            run_objects.push(RunObject {
                id: o.id.clone(),
                motion: o.motion.clone(),
                clip: clip.as_ref().map(|(l, _)| l.clone()),
                effective_scale: placement.effective_scale,
                path_points: placement.effective_locations.len(),
            });
            tracks.push(Track {
                id: o.id.clone(),
                appearance,
                normalize,
                clip: clip.map(|(_, c)| c),
                timeline,
            });
        }
        let set = FrameSet {
            scene,
            tracks,
            cameras,
            frame_count: m.frame_count,
            settings: RenderSettings::default(),
            background: self.background(),
        };
        Ok((set, run_objects))
    }

    pub fn render(&self) -> std::result::Result<StageReport, StageFailure> {
        let stage = Stage::Render;
        let clips = self.load_clips().at(stage, None)?;
        let stamp = self.render_stamp(&clips).at(stage, None)?;
        if let Some(r) = self.cached(stage, &stamp) {
            return Ok(r);
        }
        let m = &self.resolved.manifest;
        let (set, run_objects) = self.frame_set_with(clips)?;
        let frames: Vec<std::result::Result<Vec<u8>, StageFailure>> = (0..m.frame_count)
            .into_par_iter()
            .map(|f| set.render(f, false)?.to_png().at(stage, None))
            .collect();

        let frames_dir = self.out("frames");
        if frames_dir.exists() {
            std::fs::remove_dir_all(&frames_dir).map_err(|e| PipelineError::io(&frames_dir, e)).at(stage, None)?;
        }
        let mut outputs = Vec::new();
        let mut records = Vec::new();
        for (f, png) in frames.into_iter().enumerate() {
            let png = png?;
            let rel = frame_file(f);
            write_file(&self.out(&rel), &png).at(stage, None)?;
            records.push(FrameRecord {
                file: rel.clone(),
                sha256: sha256_hex(&png),
            });
            outputs.push(rel);
        }

        let run = self.run_manifest(run_objects, records, &stamp).at(stage, None)?;
        write_json(&self.out(RUN_MANIFEST), &run).at(stage, None)?;
        outputs.push(RUN_MANIFEST.to_string());
        info!(frames = m.frame_count, "rendered");
        self.finish(stage, stamp, outputs).at(stage, None)
    }

    fn run_manifest(&self, objects: Vec<RunObject>, frames: Vec<FrameRecord>, render_stamp: &str) -> Result<RunManifest> {
        let m = &self.resolved.manifest;
        let mut inputs = BTreeMap::new();
        let mut add = |key: String, path: &Path| -> Result<()> {
            inputs.insert(key, file_sha256(path)?);
            Ok(())
        };
        add("scene".into(), &self.scene_path()?)?;
        add("camera".into(), &self.resolved.path(&m.camera))?;
        for o in &m.objects {
            add(format!("object:{}", o.id), &self.object_path(o)?)?;
        }
        let mut stages = BTreeMap::new();
        for s in [Stage::Plan, Stage::Lift, Stage::Refine] {
            if let Some(st) = StageStamp::read(&self.out_dir, s) {
                stages.insert(s.as_str().to_string(), st.stamp);
            }
        }
        stages.insert(Stage::Render.as_str().to_string(), render_stamp.to_string());
        Ok(RunManifest {
            schema_version: SCHEMA_VERSION,
            manifest_sha256: m.content_hash(),
            seed: m.seed,
            frame_count: m.frame_count,
            resolution: [m.output.width, m.output.height],
            director: m.director.mode,
            provider: m.refine.provider,
            inputs,
            stages,
            objects,
            frames,
        })
    }
}

struct Track {
    id: String,
    appearance: GaussianCloud,
    normalize: RigidTransform,
    clip: Option<AnimationClip>,
    timeline: ObjectTimeline,
}

/// Everything needed to draw any output frame of a job.
pub struct FrameSet {
    scene: GaussianCloud,
    tracks: Vec<Track>,
    cameras: CameraPath,
    frame_count: usize,
    settings: RenderSettings,
    background: Vector3<f64>,
}

impl FrameSet {
    pub fn len(&self) -> usize {
        self.frame_count
    }

    pub fn is_empty(&self) -> bool {
        self.frame_count == 0
    }

    /// Frame `f`, drawn by the tiled rasterizer or, with `reference`, by the
    /// brute-force one.
    pub fn render(&self, f: usize, reference: bool) -> std::result::Result<Framebuffer, StageFailure> {
        let stage = Stage::Render;
        let cam = self.cameras.camera_for_frame(f, self.frame_count).at(stage, None)?;
        let mut placed = Vec::with_capacity(self.tracks.len());
        for t in &self.tracks {
            let id = Some(t.id.as_str());
            let cloud = match &t.clip {
                Some(c) => c.cloud_at(c.frame_index(f, self.frame_count), &t.appearance).at(stage, id)?,
                None => t.appearance.clone(),
            };
            let transform = t.normalize.then(&t.timeline.transform_at(f).at(stage, id)?);
            placed.push(PlacedObject { cloud, transform });
        }
        let image = if reference {
            let mut layers = vec![Layer::untransformed(&self.scene)];
            layers.extend(placed.iter().map(|o| Layer::new(&o.cloud, o.transform).masked()));
            Renderer::new(self.settings)
                .rasterize_reference(&cam, &layers, self.background)
                .map_err(PipelineError::from)
        } else {
            compose_frame(&self.scene, &placed, &cam, self.settings, self.background)
        };
        image.at(stage, None)
    }
}
