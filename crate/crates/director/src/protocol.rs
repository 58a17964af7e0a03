//! Wire types and payload parsing.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{DirectorError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Decompose,
    Scale,
    Endpoints,
    Path,
    Score,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Decompose => "decompose",
            Task::Scale => "scale",
            Task::Endpoints => "endpoints",
            Task::Path => "path",
            Task::Score => "score",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            model: "default".into(),
            temperature: 0.0,
            timeout_secs: 60,
        }
    }
}

/// One query to the director. `prompt` is the sub-prompt being asked about
/// and is the lookup key for mock fixtures; `instruction` is the filled-in
/// template text a live model reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectorRequest {
    pub task: Task,
    pub prompt: String,
    pub instruction: String,
    /// Base64 PNG of the current scene render.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[u32; 2]>,
    #[serde(default)]
    pub context: Value,
    pub model: ModelParams,
}

impl DirectorRequest {
    pub fn new(task: Task, prompt: impl Into<String>, instruction: impl Into<String>) -> Self {
        Self {
            task,
            prompt: prompt.into(),
            instruction: instruction.into(),
            image_png: None,
            image_size: None,
            context: Value::Null,
            model: ModelParams::default(),
        }
    }
}

/// Raw answer text. The structured payload sits in a fenced block; anything
/// around it is ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectorResponse {
    pub content: String,
}

impl DirectorResponse {
    pub fn fenced_json(payload: &Value) -> Self {
        let body = serde_json::to_string_pretty(payload).expect("json values always serialize");
        Self {
            content: format!("```json\n{body}\n```"),
        }
    }
}

/// Text of the first fenced block, or the whole answer when there is none.
pub fn extract_block(content: &str) -> &str {
    let Some(open) = content.find("```") else {
        return content.trim();
    };
    let rest = &content[open + 3..];
    let body = match rest.find('\n') {
        Some(nl) if !rest[..nl].trim().contains(char::is_whitespace) => &rest[nl + 1..],
        _ => rest,
    };
    match body.find("```") {
        Some(close) => body[..close].trim(),
        None => body.trim(),
    }
}

pub fn parse_json<T: serde::de::DeserializeOwned>(task: Task, content: &str) -> Result<T> {
    let block = extract_block(content);
    serde_json::from_str(block).map_err(|e| DirectorError::malformed(task, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub id: String,
    pub object: String,
    pub motion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DecompositionWire {
    scene: String,
    objects: Vec<ObjectEntry>,
}

/// Scene, object and motion sub-prompts, aligned by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDecomposition {
    pub scene_prompt: String,
    pub object_ids: Vec<String>,
    pub object_prompts: Vec<String>,
    pub motion_prompts: Vec<String>,
}

impl PromptDecomposition {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.scene_prompt.trim().is_empty() {
            return Err("scene prompt is empty".into());
        }
        let n = self.object_ids.len();
        if self.object_prompts.len() != n || self.motion_prompts.len() != n {
            return Err(format!(
                "{} ids, {} object prompts and {} motion prompts",
                n,
                self.object_prompts.len(),
                self.motion_prompts.len()
            ));
        }
        let mut ids = self.object_ids.clone();
        ids.sort();
        ids.dedup();
        if ids.len() != n {
            return Err("duplicate object id".into());
        }
        if self.object_prompts.iter().any(|p| p.trim().is_empty()) {
            return Err("empty object prompt".into());
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.object_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.object_ids.is_empty()
    }

    pub fn parse(content: &str) -> Result<Self> {
        let wire: DecompositionWire = parse_json(Task::Decompose, content)?;
        let d = Self {
            scene_prompt: wire.scene,
            object_ids: wire.objects.iter().map(|o| o.id.clone()).collect(),
            object_prompts: wire.objects.iter().map(|o| o.object.clone()).collect(),
            motion_prompts: wire.objects.iter().map(|o| o.motion.clone()).collect(),
        };
        d.validate().map_err(|e| DirectorError::malformed(Task::Decompose, e))?;
        Ok(d)
    }
}

/// Pixel bounding box of the object, height then width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub height: f64,
    pub width: f64,
}

impl ScaleEstimate {
    /// Accepts `{"height": h, "width": w}` or the terse `H:h,W:w` form.
    pub fn parse(content: &str) -> Result<Self> {
        let block = extract_block(content);
        let s = match serde_json::from_str::<ScaleEstimate>(block) {
            Ok(s) => s,
            Err(json_err) => parse_terse_scale(block)
                .ok_or_else(|| DirectorError::malformed(Task::Scale, json_err.to_string()))?,
        };
        if !(s.height.is_finite() && s.width.is_finite()) || s.height <= 0.0 || s.width <= 0.0 {
            return Err(DirectorError::malformed(
                Task::Scale,
                format!("dimensions must be positive, got H={} W={}", s.height, s.width),
            ));
        }
        Ok(s)
    }

    pub fn max_side(&self) -> f64 {
        self.height.max(self.width)
    }
}

fn parse_terse_scale(text: &str) -> Option<ScaleEstimate> {
    let mut height = None;
    let mut width = None;
    for part in text.split([',', ';', '\n']) {
        let (k, v) = part.split_once([':', '='])?;
        let v: f64 = v.trim().parse().ok()?;
        match k.trim().to_ascii_lowercase().as_str() {
            "h" | "height" => height = Some(v),
            "w" | "width" => width = Some(v),
            _ => return None,
        }
    }
    Some(ScaleEstimate {
        height: height?,
        width: width?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointEstimate {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl EndpointEstimate {
    pub fn parse(content: &str) -> Result<Self> {
        let e: EndpointEstimate = parse_json(Task::Endpoints, content)?;
        if !e.start.iter().chain(&e.end).all(|v| v.is_finite()) {
            return Err(DirectorError::malformed(Task::Endpoints, "non-finite coordinate"));
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub points: Vec<[f64; 2]>,
}

impl PathEstimate {
    pub fn parse(content: &str, expected: usize) -> Result<Self> {
        let p: PathEstimate = parse_json(Task::Path, content)?;
        if p.points.len() != expected {
            return Err(DirectorError::malformed(
                Task::Path,
                format!("expected {expected} points, got {}", p.points.len()),
            ));
        }
        if !p.points.iter().flatten().all(|v| v.is_finite()) {
            return Err(DirectorError::malformed(Task::Path, "non-finite coordinate"));
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
