//! Declarative composition job, stored as TOML.

use std::path::{Path, PathBuf};

use c3v_core::composer::RefineConfig;
use c3v_core::lifting::{LiftOptions, ResampleMode};
use c3v_director::Templates;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};
use crate::library::{AssetKind, AssetLibrary, AssetRef};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub schema_version: u32,
    /// Full text prompt; informational, the director works from the
    /// per-object sub-prompts below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frames")]
    pub frame_count: usize,
    /// Asset library root, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<String>,
    pub scene: SceneEntry,
    /// Camera path file, relative to the manifest.
    pub camera: String,
    #[serde(default)]
    pub objects: Vec<ObjectEntry>,
    #[serde(default)]
    pub output: OutputSettings,
    #[serde(default)]
    pub director: DirectorSettings,
    #[serde(default)]
    pub lift: LiftSettings,
    #[serde(default)]
    pub refine: RefineSettings,
}

fn default_frames() -> usize {
    24
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub asset: String,
    #[serde(default)]
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub id: String,
    pub asset: String,
    pub prompt: String,
    #[serde(default)]
    pub motion: String,
    /// Motion prompt the trajectory was planned for, when it differs from
    /// `motion` (set by motion swaps that keep the plan).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planning_motion: Option<String>,
    /// Explicit clip reference; when absent the clip is retrieved by `motion`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<String>,
    /// World height H_3D; defaults to the scale estimated from the plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    /// Pre-computed plan file used instead of querying the director.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    /// Pre-computed placement file used instead of refining.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<String>,
}

impl ObjectEntry {
    pub fn planning_motion(&self) -> &str {
        self.planning_motion.as_deref().unwrap_or(&self.motion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSettings {
    pub width: u32,
    pub height: u32,
    pub background: [f64; 3],
    pub resample: ResampleMode,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            background: [0.0; 3],
            resample: ResampleMode::ConstantSpeed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectorMode {
    #[default]
    Mock,
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirectorSettings {
    pub mode: DirectorMode,
    pub n_path_points: usize,
    pub retry_limit: u32,
    pub timeout_secs: u64,
    /// Extra fixture table merged over the built-in one (mock mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<String>,
    /// Audit log to answer from (replay mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<Templates>,
}

impl Default for DirectorSettings {
    fn default() -> Self {
        Self {
            mode: DirectorMode::Mock,
            n_path_points: 8,
            retry_limit: 2,
            timeout_secs: 60,
            fixtures: None,
            replay: None,
            templates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiftSettings {
    #[serde(flatten)]
    pub options: LiftOptions,
    /// External depth map (PFM) used instead of the rendered scene depth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    /// Multiplies external depth values.
    pub depth_scale: f64,
}

impl Default for LiftSettings {
    fn default() -> Self {
        Self {
            options: LiftOptions::default(),
            depth: None,
            depth_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Zero,
    Pull,
    Silhouette,
    Ground,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSettings {
    pub provider: ProviderKind,
    /// Absolute thresholds; when absent they follow the factors below.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_l: Option<f64>,
    /// τ_s = factor · S.
    pub tau_s_factor: f64,
    /// τ_L = factor · H_3D.
    pub tau_l_factor: f64,
    /// Target image for the pull provider.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pull_target: Option<String>,
    pub gain: f64,
    pub refine_locations: bool,
    pub optimizer: RefineConfig,
}

impl Default for RefineSettings {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Zero,
            tau_s: None,
            tau_l: None,
            tau_s_factor: 0.4,
            tau_l_factor: 0.3,
            pull_target: None,
            gain: 1.0,
            refine_locations: true,
            optimizer: RefineConfig::default(),
        }
    }
}

impl SceneManifest {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let m: SceneManifest = toml::from_str(text).map_err(|e| PipelineError::parse(path, e))?;
        m.check()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifests serialize")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| PipelineError::io(path, e))
    }

    /// Structural checks that need no file access.
    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.frame_count < 1 {
            return fail("frame_count must be at least 1".into());
        }
        if self.output.width == 0 || self.output.height == 0 {
            return fail(format!("resolution must be positive, got {}x{}", self.output.width, self.output.height));
        }
        if self.director.n_path_points < 2 {
            return fail("director.n_path_points must be at least 2".into());
        }
        let mut ids: Vec<&str> = self.objects.iter().map(|o| o.id.as_str()).collect();
        if ids.iter().any(|id| id.is_empty() || !id.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-')) {
            return fail("object ids must be non-empty and use only letters, digits, '_' or '-'".into());
        }
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return fail("duplicate object id".into());
        }
        for o in &self.objects {
            if o.prompt.trim().is_empty() {
                return fail(format!("object {:?} has an empty prompt", o.id));
            }
            if o.height.is_some_and(|h| !(h > 0.0 && h.is_finite())) {
                return fail(format!("object {:?} height must be positive", o.id));
            }
        }
        let r = &self.refine;
        for (name, v) in [("tau_s", r.tau_s), ("tau_l", r.tau_l)] {
            if v.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
                return fail(format!("refine.{name} must be finite and non-negative"));
            }
        }
        if !(r.tau_s_factor >= 0.0 && r.tau_l_factor >= 0.0) {
            return fail("threshold factors must be non-negative".into());
        }
        if r.provider == ProviderKind::Pull && r.pull_target.is_none() {
            return fail("the pull provider needs refine.pull_target".into());
        }
        r.optimizer.validate()?;
        Ok(())
    }

    pub fn object(&self, id: &str) -> Result<&ObjectEntry> {
        self.objects
            .iter()
            .find(|o| o.id == id)
            .ok_or_else(|| PipelineError::UnknownObject(id.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("manifests serialize")))
    }
}

/// A manifest plus the directory its relative references resolve against.
#[derive(Debug, Clone)]
pub struct ResolvedManifest {
    pub manifest: SceneManifest,
    pub base_dir: PathBuf,
    library: Option<AssetLibrary>,
}

impl ResolvedManifest {
    pub fn new(manifest: SceneManifest, base_dir: impl Into<PathBuf>) -> Result<Self> {
        manifest.check()?;
        let base_dir = base_dir.into();
        let library = match &manifest.library {
            Some(l) => Some(AssetLibrary::open(base_dir.join(l))?),
            None => None,
        };
        Ok(Self {
            manifest,
            base_dir,
            library,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest = SceneManifest::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(manifest, base)
    }

    pub fn library(&self) -> Option<&AssetLibrary> {
        self.library.as_ref()
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    /// File behind an asset reference of the expected kind.
    pub fn asset_path(&self, reference: &str, expected: AssetKind) -> Result<PathBuf> {
        match AssetRef::parse(reference)? {
            AssetRef::Path(p) => Ok(self.base_dir.join(p)),
            AssetRef::Library { kind, id } => {
                if kind != expected {
                    return Err(PipelineError::Config(format!("{reference:?} is a {kind} reference, expected {expected}")));
                }
                let lib = self
                    .library
                    .as_ref()
                    .ok_or_else(|| PipelineError::Config(format!("{reference:?} needs a library in the manifest")))?;
                Ok(lib.get(kind, &id)?.to_path_buf())
            }
        }
    }

    /// Every reference resolves to an existing file.
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        let check = |p: PathBuf, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("{what} {} does not exist", p.display())))
            }
        };
        check(self.asset_path(&m.scene.asset, AssetKind::Scene)?, "scene asset")?;
        check(self.path(&m.camera), "camera path")?;
        for o in &m.objects {
            check(self.asset_path(&o.asset, AssetKind::Object)?, "object asset")?;
            if let Some(c) = &o.clip {
                check(self.asset_path(c, AssetKind::Motion)?, "motion clip")?;
            }
            for f in [&o.plan, &o.placement].into_iter().flatten() {
                check(self.path(f), "pre-computed file")?;
            }
        }
        if let Some(t) = &m.refine.pull_target {
            check(self.path(t), "pull target")?;
        }
        if let Some(d) = &m.lift.depth {
            check(self.path(d), "depth map")?;
        }
        if let Some(f) = &m.director.fixtures {
            check(self.path(f), "fixture table")?;
        }
        Ok(())
    }
}

/// One concept edit.
#[derive(Debug, Clone, PartialEq)]
pub enum Edit {
    Scene { asset: String },
    Appearance { id: String, asset: String },
    Motion { id: String, prompt: String },
}

/// Applies `edit`. Scene changes clear every object's plan and placement
/// references; appearance and motion changes keep the plan unless `replan`.
pub fn swap_asset(manifest: &SceneManifest, edit: Edit, replan: bool) -> Result<SceneManifest> {
    let mut m = manifest.clone();
    match edit {
        Edit::Scene { asset } => {
            m.scene.asset = asset;
            for o in &mut m.objects {
                o.plan = None;
                o.placement = None;
            }
        }
        Edit::Appearance { id, asset } => {
            let o = object_mut(&mut m, &id)?;
            o.asset = asset;
            o.placement = None;
            if replan {
                o.plan = None;
                o.planning_motion = None;
            }
        }
        Edit::Motion { id, prompt } => {
            let o = object_mut(&mut m, &id)?;
            if replan {
                o.planning_motion = None;
                o.plan = None;
            } else {
                o.planning_motion = Some(o.planning_motion().to_string());
            }
            o.motion = prompt;
            o.clip = None;
            o.placement = None;
        }
    }
    Ok(m)
}

fn object_mut<'a>(m: &'a mut SceneManifest, id: &str) -> Result<&'a mut ObjectEntry> {
    m.objects
        .iter_mut()
        .find(|o| o.id == id)
        .ok_or_else(|| PipelineError::UnknownObject(id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
schema_version = 1
camera = "camera.toml"

[scene]
asset = "scene:courtyard"

[[objects]]
id = "avatar"
asset = "object:cube_avatar"
prompt = "a cube avatar"
motion = "walking"
plan = "plans/avatar.json"
placement = "placements/avatar.json"
"#;

    fn manifest() -> SceneManifest {
        SceneManifest::from_toml(TEXT, Path::new("m.toml")).unwrap()
    }

    #[test]
    fn defaults() {
        let m = manifest();
        assert_eq!((m.output.width, m.output.height), (512, 512));
        assert_eq!(m.frame_count, 24);
        assert_eq!(m.director.n_path_points, 8);
        assert_eq!(m.refine.tau_s_factor, 0.4);
        assert_eq!(m.refine.tau_l_factor, 0.3);
        assert_eq!(m.seed, 0);
    }

    #[test]
    fn toml_round_trip() {
        let m = manifest();
        let back = SceneManifest::from_toml(&m.to_toml(), Path::new("m.toml")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.content_hash(), m.content_hash());
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        assert!(SceneManifest::from_toml(&format!("{TEXT}\nbogus = 1\n"), Path::new("m")).is_err());
        let mut m = manifest();
        m.frame_count = 0;
        assert!(m.check().is_err());
        let mut m = manifest();
        m.objects.push(m.objects[0].clone());
        assert!(m.check().is_err());
    }

    #[test]
    fn appearance_swap_keeps_plan() {
        let m = swap_asset(
            &manifest(),
            Edit::Appearance {
                id: "avatar".into(),
                asset: "object:robot".into(),
            },
            false,
        )
        .unwrap();
        assert_eq!(m.objects[0].plan.as_deref(), Some("plans/avatar.json"));
        assert_eq!(m.objects[0].asset, "object:robot");
    }

    #[test]
    fn scene_swap_clears_plans() {
        let m = swap_asset(&manifest(), Edit::Scene { asset: "scene:park".into() }, false).unwrap();
        assert!(m.objects.iter().all(|o| o.plan.is_none() && o.placement.is_none()));
    }

    #[test]
    fn motion_swap_without_replan_keeps_trajectory() {
        let m = swap_asset(
            &manifest(),
            Edit::Motion {
                id: "avatar".into(),
                prompt: "dancing".into(),
            },
            false,
        )
        .unwrap();
        let o = &m.objects[0];
        assert_eq!(o.motion, "dancing");
        assert_eq!(o.planning_motion(), "walking");
        assert_eq!(o.plan.as_deref(), Some("plans/avatar.json"));
        assert!(o.clip.is_none());

        let m = swap_asset(&m, Edit::Motion { id: "avatar".into(), prompt: "running".into() }, true).unwrap();
        assert_eq!(m.objects[0].planning_motion(), "running");
        assert!(m.objects[0].plan.is_none());
    }

    #[test]
    fn unknown_id() {
        let e = swap_asset(&manifest(), Edit::Motion { id: "ghost".into(), prompt: "x".into() }, false).unwrap_err();
        assert!(matches!(e, PipelineError::UnknownObject(_)));
    }
}
