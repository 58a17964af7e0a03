//! Placement refinement: sigmoid-clamped scale and location offsets driven by
//! image-space guidance, plus closed-form heading rotations.

mod providers;
mod rotation;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use self::providers::{
    GroundContactProvider, GuidanceSample, PullToTargetProvider, ScoreProvider, SilhouetteProvider, ZeroProvider,
};
pub use self::rotation::{
    build_rotation_schedule, heading_rotation, rodrigues, rotation_schedule_for_points, RotationSchedule,
    DEFAULT_DIRECTION_EPSILON,
};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::math::{sigmoid, strictly_within};
use crate::raster::{Framebuffer, Layer, RenderSettings, Renderer};
use crate::transform::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineStage {
    #[default]
    Initial,
    ScaleRefined,
    LocationsRefined,
}

/// Raw optimizable placement of one object along its path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementParams {
    pub scale_raw: f64,
    pub location_raw: Vec<Vector3<f64>>,
    pub tau_s: f64,
    pub tau_l: f64,
    pub base_scale: f64,
    pub base_locations: Vec<Vector3<f64>>,
    #[serde(default)]
    pub stage: RefineStage,
}

impl PlacementParams {
    pub fn new(base_scale: f64, base_locations: Vec<Vector3<f64>>, tau_s: f64, tau_l: f64) -> Result<Self> {
        let p = Self {
            scale_raw: 0.0,
            location_raw: vec![Vector3::zeros(); base_locations.len()],
            tau_s,
            tau_l,
            base_scale,
            base_locations,
            stage: RefineStage::Initial,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_scale > 0.0 && self.base_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("base scale must be positive, got {}", self.base_scale)));
        }
        if !(self.tau_s >= 0.0 && self.tau_s.is_finite() && self.tau_l >= 0.0 && self.tau_l.is_finite()) {
            return Err(Error::InvalidConfig("thresholds must be finite and non-negative".into()));
        }
        if self.base_locations.is_empty() {
            return Err(Error::InvalidConfig("placement needs at least one location".into()));
        }
        if self.location_raw.len() != self.base_locations.len() {
            return Err(Error::InvalidConfig("raw and base location counts differ".into()));
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        if !self.scale_raw.is_finite()
            || !self.location_raw.iter().all(finite)
            || !self.base_locations.iter().all(finite)
        {
            return Err(Error::InvalidConfig("placement parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.base_locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_locations.is_empty()
    }

    /// `S + σ(Ŝ)·τ_s − τ_s/2`, strictly inside `(S − τ_s/2, S + τ_s/2)`.
    pub fn effective_scale(&self) -> f64 {
        clamped(self.base_scale, self.scale_raw, self.tau_s)
    }

    /// `L_i + σ(L̂_i)·τ_L − τ_L/2` per component.
    pub fn effective_location(&self, i: usize) -> Result<Vector3<f64>> {
        let base = self.base_locations.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.len(),
        })?;
        let raw = &self.location_raw[i];
        Ok(Vector3::from_fn(|k, _| clamped(base[k], raw[k], self.tau_l)))
    }

    pub fn effective_locations(&self) -> Vec<Vector3<f64>> {
        (0..self.len()).map(|i| self.effective_location(i).unwrap()).collect()
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Scale => self.scale_raw,
            Param::Location { index, axis } => self.location_raw[index][axis],
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::Scale => self.scale_raw = v,
            Param::Location { index, axis } => self.location_raw[index][axis] = v,
        }
    }

    fn check_param(&self, p: Param) -> Result<()> {
        if let Param::Location { index, axis } = p {
            if index >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index,
                    len: self.len(),
                });
            }
            if axis > 2 {
                return Err(Error::IndexOutOfRange { index: axis, len: 3 });
            }
        }
        Ok(())
    }
}

fn clamped(base: f64, raw: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        return base;
    }
    strictly_within(base, sigmoid(raw) * tau - tau / 2.0, tau / 2.0)
}

/// One scalar of [`PlacementParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Param {
    Scale,
    Location { index: usize, axis: usize },
}

impl Param {
    pub fn location(index: usize) -> [Param; 3] {
        [0, 1, 2].map(|axis| Param::Location { index, axis })
    }

    /// Path point at which the object is rendered when this scalar moves.
    /// Scale is judged at the first point.
    pub fn focus(self) -> usize {
        match self {
            Param::Scale => 0,
            Param::Location { index, .. } => index,
        }
    }

    pub fn label(self) -> String {
        match self {
            Param::Scale => "scale".into(),
            Param::Location { index, axis } => format!("location[{index}].{}", ["x", "y", "z"][axis]),
        }
    }
}

/// Everything needed to render the object at a candidate placement.
///
/// The object cloud is expected in its canonical frame: unit height, centered
/// on the origin. It is scaled by the effective scale, turned by the heading
/// rotation of the focus point and moved to the effective location.
#[derive(Debug, Clone)]
pub struct RefineScene<'a> {
    pub camera: Camera,
    pub background: Vec<Layer<'a>>,
    pub object: &'a GaussianCloud,
    /// Heading per path point; identity when empty.
    pub rotations: Vec<Matrix3<f64>>,
    pub background_color: Vector3<f64>,
    pub settings: RenderSettings,
    pub prompt: String,
}

impl<'a> RefineScene<'a> {
    pub fn new(camera: Camera, object: &'a GaussianCloud) -> Self {
        Self {
            camera,
            background: Vec::new(),
            object,
            rotations: Vec::new(),
            background_color: Vector3::zeros(),
            settings: RenderSettings::default(),
            prompt: String::new(),
        }
    }

    pub fn object_transform(&self, scale: f64, location: Vector3<f64>, focus: usize) -> Result<RigidTransform> {
        let rot = self.rotations.get(focus).copied().unwrap_or_else(Matrix3::identity);
        RigidTransform::new(rot, location, scale)
    }

    pub fn render(&self, scale: f64, location: Vector3<f64>, focus: usize) -> Result<Framebuffer> {
        let mut layers = self.background.clone();
        layers.push(Layer::new(self.object, self.object_transform(scale, location, focus)?).masked());
        Renderer::new(self.settings).rasterize(&self.camera, &layers, self.background_color)
    }

    pub fn render_params(&self, params: &PlacementParams, focus: usize) -> Result<Framebuffer> {
        self.render(params.effective_scale(), params.effective_location(focus)?, focus)
    }
}

/// `g_k = Σ_pixels ⟨residual, (x(θ_k + h) − x(θ_k − h)) / 2h⟩` for each selected
/// scalar, one guidance sample per focus point shared by both perturbations.
pub fn sds_gradient(
    params: &PlacementParams,
    selected: &[Param],
    scene: &RefineScene<'_>,
    provider: &dyn ScoreProvider,
    fd_step: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = rng.random_range(0.05..0.95);
    let sample_seed = rng.random::<u64>();
    Ok(sds_gradient_at(params, selected, scene, provider, fd_step, t, sample_seed)?.0)
}

fn sds_gradient_at(
    params: &PlacementParams,
    selected: &[Param],
    scene: &RefineScene<'_>,
    provider: &dyn ScoreProvider,
    fd_step: f64,
    noise_level: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<GuidanceSample>)> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {fd_step}")));
    }
    params.validate()?;
    if provider.is_null() {
        for &p in selected {
            params.check_param(p)?;
        }
        return Ok((vec![0.0; selected.len()], Vec::new()));
    }
    let mut samples: Vec<(usize, GuidanceSample)> = Vec::new();
    let mut grad = Vec::with_capacity(selected.len());
    for &p in selected {
        params.check_param(p)?;
        let focus = p.focus();
        let idx = match samples.iter().position(|(f, _)| *f == focus) {
            Some(i) => i,
            None => {
                let image = scene.render_params(params, focus)?;
                let s = provider.guidance(&image, &scene.prompt, noise_level, seed)?;
                s.validate(image.width, image.height)?;
                samples.push((focus, s));
                samples.len() - 1
            }
        };
        let sample = &samples[idx].1;
        if sample.is_zero() {
            grad.push(0.0);
            continue;
        }
        let raw = params.get(p);
        let perturbed = |v: f64| {
            let mut q = params.clone();
            q.set(p, v);
            scene.render_params(&q, focus)
        };
        let (plus, minus) = rayon::join(|| perturbed(raw + fd_step), || perturbed(raw - fd_step));
        let (plus, minus) = (plus?, minus?);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::GradientInvalid { param: p.label() });
        }
        let g = sample.contract(&plus, &minus) / (2.0 * fd_step);
        if !g.is_finite() {
            return Err(Error::GradientInvalid { param: p.label() });
        }
        grad.push(g);
    }
    Ok((grad, samples.into_iter().map(|(_, s)| s).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationMode {
    /// Optimize one path point at a time, in path order.
    #[default]
    Sequential,
    /// Step every path point in the same iteration.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub step_size: f64,
    pub max_iterations: usize,
    /// Early stop once every raw change stays below this for `patience` steps.
    pub tolerance: f64,
    pub patience: usize,
    pub divergence_limit: f64,
    /// Finite-difference step on the raw parameters.
    pub fd_step: f64,
    pub noise_min: f64,
    pub noise_max: f64,
    pub seed: u64,
    pub location_mode: LocationMode,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            max_iterations: 200,
            tolerance: 1e-5,
            patience: 10,
            divergence_limit: 50.0,
            fd_step: 1e-3,
            noise_min: 0.05,
            noise_max: 0.95,
            seed: 0,
            location_mode: LocationMode::Sequential,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step_size > 0.0
            && self.step_size.is_finite()
            && self.tolerance >= 0.0
            && self.divergence_limit > 0.0
            && self.fd_step > 0.0
            && self.fd_step.is_finite()
            && 0.0 < self.noise_min
            && self.noise_min <= self.noise_max
            && self.noise_max < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid refinement config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: RefineStage,
    pub point: Option<usize>,
    pub iteration: usize,
    pub noise_level: f64,
    pub raw: Vec<f64>,
    pub gradient: Vec<f64>,
    /// First-order change of the guided objective predicted for this step.
    pub proxy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineTrace {
    pub entries: Vec<TraceEntry>,
    /// Iterations actually run per optimized group (scale, or one path point).
    pub iterations: Vec<usize>,
}

impl RefineTrace {
    pub fn extend(&mut self, other: RefineTrace) {
        self.entries.extend(other.entries);
        self.iterations.extend(other.iterations);
    }
}

/// Seed for one optimized group, so each path point gets its own stream.
fn group_seed(seed: u64, stage: RefineStage, point: Option<usize>) -> u64 {
    let tag: u64 = match stage {
        RefineStage::Initial | RefineStage::ScaleRefined => 0x5CA1E,
        RefineStage::LocationsRefined => 0x10C,
    };
    let p = point.map_or(u64::MAX, |p| p as u64);
    seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ p.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Plain gradient descent over `groups`; each inner slice is stepped together.
fn descend(
    params: &mut PlacementParams,
    groups: &[Vec<Param>],
    scene: &RefineScene<'_>,
    provider: &dyn ScoreProvider,
    config: &RefineConfig,
    stage: RefineStage,
    point: Option<usize>,
) -> Result<RefineTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(group_seed(config.seed, stage, point));
    let mut trace = RefineTrace::default();
    let all: Vec<Param> = groups.iter().flatten().copied().collect();
    let mut quiet = 0;
    let mut iterations = 0;
    for iteration in 0..config.max_iterations {
        let t = if config.noise_min == config.noise_max {
            config.noise_min
        } else {
            rng.random_range(config.noise_min..config.noise_max)
        };
        let sample_seed = rng.random::<u64>();
        let (grad, _) = sds_gradient_at(params, &all, scene, provider, config.fd_step, t, sample_seed)?;
        let mut max_change: f64 = 0.0;
        let mut proxy = 0.0;
        for (&p, &g) in all.iter().zip(&grad) {
            let old = params.get(p);
            let new = old - config.step_size * g;
            if !new.is_finite() || new.abs() > config.divergence_limit {
                return Err(Error::RefinementDiverged(format!(
                    "{} reached {new} after {} iterations",
                    p.label(),
                    iteration + 1
                )));
            }
            params.set(p, new);
            max_change = max_change.max((new - old).abs());
            proxy += g * (new - old);
        }
        iterations = iteration + 1;
        trace.entries.push(TraceEntry {
            stage,
            point,
            iteration,
            noise_level: t,
            raw: all.iter().map(|&p| params.get(p)).collect(),
            gradient: grad,
            proxy,
        });
        if max_change < config.tolerance {
            quiet += 1;
            if quiet >= config.patience {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    trace.iterations.push(iterations);
    Ok(trace)
}

/// Optimizes the scale offset with the object placed at the first path point.
pub fn refine_scale(
    params: &PlacementParams,
    scene: &RefineScene<'_>,
    provider: &dyn ScoreProvider,
    config: &RefineConfig,
) -> Result<(PlacementParams, RefineTrace)> {
    config.validate()?;
    params.validate()?;
    let mut out = params.clone();
    let trace = descend(
        &mut out,
        &[vec![Param::Scale]],
        scene,
        provider,
        config,
        RefineStage::ScaleRefined,
        None,
    )?;
    out.stage = RefineStage::ScaleRefined;
    Ok((out, trace))
}

/// Optimizes every location offset. Requires a completed scale pass.
pub fn refine_locations(
    params: &PlacementParams,
    scene: &RefineScene<'_>,
    provider: &dyn ScoreProvider,
    config: &RefineConfig,
) -> Result<(PlacementParams, RefineTrace)> {
    config.validate()?;
    params.validate()?;
    if params.stage == RefineStage::Initial {
        return Err(Error::StageOrder("locations are refined only after the scale".into()));
    }
    let mut out = params.clone();
    let mut trace = RefineTrace::default();
    match config.location_mode {
        LocationMode::Sequential => {
            for i in 0..out.len() {
                let t = descend(
                    &mut out,
                    &[Param::location(i).to_vec()],
                    scene,
                    provider,
                    config,
                    RefineStage::LocationsRefined,
                    Some(i),
                )?;
                trace.extend(t);
            }
        }
        LocationMode::Joint => {
            let groups: Vec<Vec<Param>> = (0..out.len()).map(|i| Param::location(i).to_vec()).collect();
            let t = descend(
                &mut out,
                &groups,
                scene,
                provider,
                config,
                RefineStage::LocationsRefined,
                None,
            )?;
            trace.extend(t);
        }
    }
    out.stage = RefineStage::LocationsRefined;
    Ok((out, trace))
}
