//! The director conversation: decomposition, then per object scale,
//! endpoints and path, in that order.

use std::collections::BTreeMap;
use std::sync::Arc;

use base64::Engine as _;
use c3v_core::Framebuffer;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use crate::audit::{AuditLog, AuditRecord};
use crate::error::{DirectorError, Result};
use crate::protocol::{
    DirectorRequest, DirectorResponse, EndpointEstimate, ModelParams, PathEstimate, PromptDecomposition,
    ScaleEstimate, Task,
};
use crate::transport::Transport;
use crate::validate::{clamp_endpoints, clamp_scale, framed_trajectory, validate_trajectory, Bounds, Flag};

pub const DECOMPOSE_SEED: &str = "Please decompose this prompt into several sub-prompts, each describing the scene, \
objects in the scene, and the objects' motion.";

/// Query text per task. `{name}` placeholders are filled from the request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Templates {
    pub decompose: String,
    pub scale: String,
    pub endpoints: String,
    pub path: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            decompose: format!(
                "{DECOMPOSE_SEED}\nPrompt: \"{{prompt}}\"\nAnswer with a fenced json block of the form \
                 {{\"scene\": \"...\", \"objects\": [{{\"id\": \"...\", \"object\": \"...\", \"motion\": \"...\"}}]}}."
            ),
            scale: "The image is a {width}x{height} render of the scene. If \"{object}\" were placed in it, \
                    how large would its bounding box be in pixels? Answer with a fenced json block \
                    {\"height\": H, \"width\": W}."
                .into(),
            endpoints: "The image is a {width}x{height} render of the scene, pixel origin at the top left, \
                        x to the right and y down. \"{object}\" is {motion} and occupies a {bbox_w}x{bbox_h} \
                        bounding box. Where does the center of the lower edge of that box start and where does \
                        it end? Answer with a fenced json block {\"start\": [x, y], \"end\": [x, y]}."
                .into(),
            path: "The image is a {width}x{height} render of the scene, pixel origin at the top left. \
                   \"{object}\" is {motion} with a {bbox_w}x{bbox_h} bounding box, starting at {start} and ending \
                   at {end}. Give {n} points along its path, first near the start and last near the end. Answer \
                   with a fenced json block {\"points\": [[x, y], ...]}."
                .into(),
        }
    }
}

pub fn fill_template(template: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectorConfig {
    /// Extra attempts after the first for unparseable answers.
    pub retry_limit: u32,
    pub n_path_points: usize,
    pub templates: Templates,
    pub model: ModelParams,
}

impl Default for DirectorConfig {
    fn default() -> Self {
        Self {
            retry_limit: 2,
            n_path_points: 8,
            templates: Templates::default(),
            model: ModelParams::default(),
        }
    }
}

const STATIC_WORDS: [&str; 8] = [
    "still",
    "static",
    "stationary",
    "idle",
    "motionless",
    "standing",
    "sitting",
    "resting",
];

/// Motion prompts that describe no displacement get a single location.
pub fn is_static_motion(motion: &str) -> bool {
    let lower = motion.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
    words.is_empty() || words.iter().any(|w| STATIC_WORDS.contains(w))
}

pub struct Director {
    transport: Arc<dyn Transport>,
    audit: Option<AuditLog>,
    pub config: DirectorConfig,
}

impl Director {
    pub fn new(transport: Arc<dyn Transport>, config: DirectorConfig) -> Self {
        Self {
            transport,
            audit: None,
            config,
        }
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }

    fn record(&self, request: &DirectorRequest, attempt: u32, outcome: &Result<DirectorResponse>) -> Result<Option<u64>> {
        let Some(log) = &self.audit else {
            return Ok(None);
        };
        let mut rec = AuditRecord::for_request(request, self.transport.name(), attempt);
        match outcome {
            Ok(r) => rec.response = Some(r.content.clone()),
            Err(e) => rec.error = Some(e.to_string()),
        }
        log.append(rec).map(Some)
    }

    /// Sends with retries; each answer is logged before it is parsed.
    /// Returns the parsed value and the audit sequence numbers consulted.
    pub fn query<T>(&self, request: &DirectorRequest, parse: impl Fn(&str) -> Result<T>) -> Result<(T, Vec<u64>)> {
        let mut refs = Vec::new();
        let mut last_err = None;
        for attempt in 0..=self.config.retry_limit {
            let outcome = self.transport.send(request);
            refs.extend(self.record(request, attempt, &outcome)?);
            let response = match outcome {
                Ok(r) => r,
                Err(e @ (DirectorError::Unreachable(_) | DirectorError::Malformed { .. })) => {
                    warn!(task = %request.task, attempt, "director attempt failed: {e}");
                    last_err = Some(e);
                    continue;
                }
                Err(e) => return Err(e),
            };
            match parse(&response.content) {
                Ok(v) => {
                    debug!(task = %request.task, attempt, "director answer accepted");
                    return Ok((v, refs));
                }
                Err(e) => {
                    warn!(task = %request.task, attempt, "director answer rejected: {e}");
                    last_err = Some(e);
                }
            }
        }
        Err(last_err.expect("at least one attempt is made"))
    }

    fn request(&self, task: Task, prompt: &str, instruction: String) -> DirectorRequest {
        let mut r = DirectorRequest::new(task, prompt, instruction);
        r.model = self.config.model.clone();
        r
    }

    pub fn decompose(&self, prompt: &str) -> Result<(PromptDecomposition, Vec<u64>)> {
        if prompt.trim().is_empty() {
            return Err(DirectorError::Config("cannot decompose an empty prompt".into()));
        }
        let vars = BTreeMap::from([("prompt", prompt.to_string())]);
        let req = self.request(Task::Decompose, prompt, fill_template(&self.config.templates.decompose, &vars));
        self.query(&req, PromptDecomposition::parse)
    }

    pub fn session(&self, object: &str, motion: &str, image: &Framebuffer) -> Result<PlanSession<'_>> {
        let png = image
            .to_png()
            .map_err(|e| DirectorError::Config(format!("cannot encode scene render: {e}")))?;
        Ok(PlanSession {
            director: self,
            object: object.to_string(),
            motion: motion.to_string(),
            image_png: base64::engine::general_purpose::STANDARD.encode(png),
            bounds: Bounds::new(image.width, image.height),
            scale: None,
            endpoints: None,
            path: None,
            flags: Vec::new(),
            audit_refs: Vec::new(),
        })
    }

    /// Runs the whole step-by-step protocol for one object.
    pub fn plan_object(&self, object: &str, motion: &str, image: &Framebuffer) -> Result<ObjectPlan> {
        let mut s = self.session(object, motion, image)?;
        s.estimate_scale()?;
        s.estimate_endpoints()?;
        if !s.is_static() {
            s.estimate_path(self.config.n_path_points)?;
        }
        s.finish()
    }
}

/// Director output for one object, as persisted by the plan stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPlan {
    pub object_prompt: String,
    pub motion_prompt: String,
    pub is_static: bool,
    pub image_size: [u32; 2],
    pub scale: ScaleEstimate,
    pub endpoints: EndpointEstimate,
    /// Validated director path, before framing.
    pub path: Vec<[f64; 2]>,
    /// Pixel trajectory to lift: the path framed by its endpoints, or the
    /// single start location of a static object.
    pub trajectory: Vec<[f64; 2]>,
    pub flags: Vec<Flag>,
    pub audit_refs: Vec<u64>,
}

pub struct PlanSession<'a> {
    director: &'a Director,
    object: String,
    motion: String,
    image_png: String,
    bounds: Bounds,
    scale: Option<ScaleEstimate>,
    endpoints: Option<EndpointEstimate>,
    path: Option<PathEstimate>,
    flags: Vec<Flag>,
    audit_refs: Vec<u64>,
}

impl PlanSession<'_> {
    pub fn is_static(&self) -> bool {
        is_static_motion(&self.motion)
    }

    pub fn flags(&self) -> &[Flag] {
        &self.flags
    }

    fn motion_prompt(&self) -> String {
        if self.motion.trim().is_empty() {
            self.object.clone()
        } else {
            format!("{} {}", self.object, self.motion)
        }
    }

    fn vars(&self) -> BTreeMap<&'static str, String> {
        let mut v = BTreeMap::from([
            ("object", self.object.clone()),
            ("motion", self.motion.clone()),
            ("width", self.bounds.width.to_string()),
            ("height", self.bounds.height.to_string()),
        ]);
        if let Some(s) = self.scale {
            v.insert("bbox_w", format!("{}", s.width));
            v.insert("bbox_h", format!("{}", s.height));
        }
        if let Some(e) = self.endpoints {
            v.insert("start", format!("({}, {})", e.start[0], e.start[1]));
            v.insert("end", format!("({}, {})", e.end[0], e.end[1]));
        }
        v
    }

    fn request(&self, task: Task, prompt: String, template: &str, context: Value) -> DirectorRequest {
        let mut r = self.director.request(task, &prompt, fill_template(template, &self.vars()));
        r.image_png = Some(self.image_png.clone());
        r.image_size = Some([self.bounds.width, self.bounds.height]);
        r.context = context;
        r
    }

    pub fn estimate_scale(&mut self) -> Result<ScaleEstimate> {
        let t = &self.director.config.templates;
        let req = self.request(Task::Scale, self.object.clone(), &t.scale, json!({}));
        let (raw, refs) = self.director.query(&req, ScaleEstimate::parse)?;
        self.audit_refs.extend(refs);
        let s = clamp_scale(raw, self.bounds, &mut self.flags);
        self.scale = Some(s);
        self.endpoints = None;
        self.path = None;
        Ok(s)
    }

    pub fn estimate_endpoints(&mut self) -> Result<EndpointEstimate> {
        let scale = self
            .scale
            .ok_or_else(|| DirectorError::Protocol("endpoints requested before the scale estimate".into()))?;
        let t = &self.director.config.templates;
        let req = self.request(
            Task::Endpoints,
            self.motion_prompt(),
            &t.endpoints,
            json!({ "bbox": scale }),
        );
        let moving = !self.is_static();
        let mut requeried = false;
        let e = loop {
            let (raw, refs) = self.director.query(&req, EndpointEstimate::parse)?;
            self.audit_refs.extend(refs);
            let e = clamp_endpoints(raw, self.bounds, &mut self.flags);
            if !moving || e.start != e.end {
                break e;
            }
            if requeried {
                return Err(DirectorError::Validation(format!(
                    "start and end coincide at ({}, {}) for a moving object",
                    e.start[0], e.start[1]
                )));
            }
            self.flags.push(Flag::EndpointsRequeried);
            requeried = true;
        };
        self.endpoints = Some(e);
        self.path = None;
        Ok(e)
    }

    pub fn estimate_path(&mut self, n: usize) -> Result<PathEstimate> {
        let scale = self
            .scale
            .ok_or_else(|| DirectorError::Protocol("path requested before the scale estimate".into()))?;
        let endpoints = self
            .endpoints
            .ok_or_else(|| DirectorError::Protocol("path requested before the endpoints".into()))?;
        if n < 2 {
            return Err(DirectorError::Config(format!("a path needs at least 2 points, got {n}")));
        }
        let mut vars_n = self.vars();
        vars_n.insert("n", n.to_string());
        let instruction = fill_template(&self.director.config.templates.path, &vars_n);
        let mut req = self.request(
            Task::Path,
            self.motion_prompt(),
            "",
            json!({ "bbox": scale, "start": endpoints.start, "end": endpoints.end, "n": n }),
        );
        req.instruction = instruction;
        let (raw, refs) = self.director.query(&req, |c| PathEstimate::parse(c, n))?;
        self.audit_refs.extend(refs);
        let p = validate_trajectory(&raw, self.bounds, scale, endpoints, &mut self.flags)?;
        self.path = Some(p.clone());
        Ok(p)
    }

    pub fn finish(mut self) -> Result<ObjectPlan> {
        let scale = self.scale.ok_or_else(|| DirectorError::Protocol("plan has no scale estimate".into()))?;
        let endpoints = self
            .endpoints
            .ok_or_else(|| DirectorError::Protocol("plan has no endpoints".into()))?;
        let is_static = self.is_static();
        let (path, trajectory) = if is_static {
            (Vec::new(), vec![endpoints.start])
        } else {
            let p = self
                .path
                .take()
                .ok_or_else(|| DirectorError::Protocol("moving object has no path estimate".into()))?;
            let framed = framed_trajectory(&p, endpoints, &mut self.flags);
            (p.points, framed)
        };
        Ok(ObjectPlan {
            object_prompt: self.object,
            motion_prompt: self.motion,
            is_static,
            image_size: [self.bounds.width, self.bounds.height],
            scale,
            endpoints,
            path,
            trajectory,
            flags: self.flags,
            audit_refs: self.audit_refs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::MockTransport;

    #[test]
    fn static_words() {
        assert!(is_static_motion("standing still"));
        assert!(is_static_motion("idle"));
        assert!(is_static_motion(""));
        assert!(!is_static_motion("walking"));
        assert!(!is_static_motion("dancing slowly"));
    }

    #[test]
    fn template_fill() {
        let vars = BTreeMap::from([("object", "a dog".to_string()), ("n", "8".to_string())]);
        assert_eq!(fill_template("{n} points for {object} {missing}", &vars), "8 points for a dog {missing}");
        assert!(Templates::default().decompose.starts_with(DECOMPOSE_SEED));
    }

    #[test]
    fn ordering_is_enforced() {
        let d = Director::new(Arc::new(MockTransport::embedded()), DirectorConfig::default());
        let img = Framebuffer::new(512, 512);
        let mut s = d.session("an alien", "walking", &img).unwrap();
        assert!(matches!(s.estimate_endpoints(), Err(DirectorError::Protocol(_))));
        assert!(matches!(s.estimate_path(4), Err(DirectorError::Protocol(_))));
        s.estimate_scale().unwrap();
        assert!(matches!(s.estimate_path(4), Err(DirectorError::Protocol(_))));
        s.estimate_endpoints().unwrap();
        assert_eq!(s.estimate_path(4).unwrap().len(), 4);
    }
}
