//! Pre-baked motion clips: a directory of per-frame PLYs plus `clip.toml`.

use std::path::{Path, PathBuf};

use c3v_core::ply::{read_ply, write_ply};
use c3v_core::GaussianCloud;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Each frame is a complete cloud.
    #[default]
    Full,
    /// Each frame PLY stores per-Gaussian position offsets in x, y, z that
    /// are added to a base cloud; its other properties are ignored.
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDescriptor {
    pub tags: Vec<String>,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub mode: ClipMode,
    pub frames: Vec<String>,
    /// Delta mode only; when absent the deltas apply to the object's asset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
}

fn default_fps() -> f64 {
    24.0
}

impl ClipDescriptor {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let d: ClipDescriptor = toml::from_str(&text).map_err(|e| PipelineError::parse(path, e))?;
        if d.frames.is_empty() {
            return Err(PipelineError::Config(format!("{}: a clip needs at least one frame", path.display())));
        }
        if d.fps.is_nan() || d.fps <= 0.0 {
            return Err(PipelineError::Config(format!("{}: fps must be positive", path.display())));
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClipFrames {
    Full(Vec<GaussianCloud>),
    Delta {
        base: Option<GaussianCloud>,
        offsets: Vec<Vec<Vector3<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnimationClip {
    pub tags: Vec<String>,
    pub fps: f64,
    pub frames: ClipFrames,
    /// Files read, for content hashing.
    pub sources: Vec<PathBuf>,
}

impl AnimationClip {
    /// Loads the clip stored in `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let desc_path = dir.join("clip.toml");
        let desc = ClipDescriptor::load(&desc_path)?;
        let mut sources = vec![desc_path];
        let mut read = |name: &str| -> Result<GaussianCloud> {
            let p = dir.join(name);
            let cloud = read_ply(&p)?;
            sources.push(p);
            Ok(cloud)
        };
        let frames = match desc.mode {
            ClipMode::Full => ClipFrames::Full(desc.frames.iter().map(|f| read(f)).collect::<Result<_>>()?),
            ClipMode::Delta => {
                let base = desc.base.as_deref().map(&mut read).transpose()?;
                let offsets: Vec<Vec<Vector3<f64>>> = desc
                    .frames
                    .iter()
                    .map(|f| read(f).map(|c| c.gaussians.iter().map(|g| g.position).collect()))
                    .collect::<Result<_>>()?;
                let n = offsets[0].len();
                if offsets.iter().any(|o| o.len() != n) || base.as_ref().is_some_and(|b| b.len() != n) {
                    return Err(PipelineError::Config(format!(
                        "{}: delta frames have inconsistent Gaussian counts",
                        dir.display()
                    )));
                }
                ClipFrames::Delta { base, offsets }
            }
        };
        let clip = Self {
            tags: desc.tags,
            fps: desc.fps,
            frames,
            sources,
        };
        Ok(clip)
    }

    pub fn len(&self) -> usize {
        match &self.frames {
            ClipFrames::Full(f) => f.len(),
            ClipFrames::Delta { offsets, .. } => offsets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Clip frame shown at output frame `f`: `⌊f · len / frame_count⌋`,
    /// holding the last frame on overrun.
    pub fn frame_index(&self, f: usize, frame_count: usize) -> usize {
        clip_frame_index(f, frame_count, self.len())
    }

    /// Cloud for clip frame `index`; delta clips without their own base
    /// animate `appearance`.
    pub fn cloud_at(&self, index: usize, appearance: &GaussianCloud) -> Result<GaussianCloud> {
        let index = index.min(self.len().saturating_sub(1));
        match &self.frames {
            ClipFrames::Full(f) => Ok(f[index].clone()),
            ClipFrames::Delta { base, offsets } => {
                let base = base.as_ref().unwrap_or(appearance);
                let off = &offsets[index];
                if off.len() != base.len() {
                    return Err(PipelineError::Config(format!(
                        "delta clip has {} offsets but the base cloud has {} Gaussians",
                        off.len(),
                        base.len()
                    )));
                }
                let mut out = base.clone();
                for (g, d) in out.gaussians.iter_mut().zip(off) {
                    g.position += d;
                }
                Ok(out)
            }
        }
    }

    /// Writes a delta clip with the given tags and offsets into `dir`.
    pub fn write_delta(dir: &Path, tags: &[&str], fps: f64, template: &GaussianCloud, offsets: &[Vec<Vector3<f64>>]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let mut names = Vec::new();
        for (k, off) in offsets.iter().enumerate() {
            let mut c = template.clone();
            for (g, d) in c.gaussians.iter_mut().zip(off) {
                g.position = *d;
            }
            let name = format!("frame_{k:03}.ply");
            write_ply(dir.join(&name), &c)?;
            names.push(name);
        }
        let desc = ClipDescriptor {
            tags: tags.iter().map(|t| t.to_string()).collect(),
            fps,
            mode: ClipMode::Delta,
            frames: names,
            base: None,
        };
        let path = dir.join("clip.toml");
        let text = toml::to_string_pretty(&desc).map_err(|e| PipelineError::Config(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))
    }
}

pub fn clip_frame_index(f: usize, frame_count: usize, clip_len: usize) -> usize {
    if clip_len == 0 || frame_count == 0 {
        return 0;
    }
    (f * clip_len / frame_count).min(clip_len - 1)
}
