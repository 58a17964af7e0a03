//! Directory-backed asset registry and tag-overlap motion retrieval.
//!
//! Layout under the library root: `scenes/<id>.ply`, `objects/<id>.ply` and
//! `motions/<id>/clip.toml`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::clip::{AnimationClip, ClipDescriptor};
use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    Scene,
    Object,
    Motion,
}

impl AssetKind {
    fn dir(self) -> &'static str {
        match self {
            AssetKind::Scene => "scenes",
            AssetKind::Object => "objects",
            AssetKind::Motion => "motions",
        }
    }
}

impl fmt::Display for AssetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssetKind::Scene => "scene",
            AssetKind::Object => "object",
            AssetKind::Motion => "motion",
        })
    }
}

impl FromStr for AssetKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scene" => Ok(AssetKind::Scene),
            "object" => Ok(AssetKind::Object),
            "motion" => Ok(AssetKind::Motion),
            other => Err(PipelineError::Config(format!("unknown asset kind {other:?}"))),
        }
    }
}

/// `kind:id` reference into a library, or a plain file path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssetRef {
    Library { kind: AssetKind, id: String },
    Path(PathBuf),
}

impl AssetRef {
    pub fn parse(s: &str) -> Result<Self> {
        if let Some((kind, id)) = s.split_once(':') {
            if let Ok(kind) = kind.parse::<AssetKind>() {
                if id.is_empty() {
                    return Err(PipelineError::Config(format!("asset reference {s:?} has no id")));
                }
                return Ok(AssetRef::Library { kind, id: id.into() });
            }
        }
        Ok(AssetRef::Path(PathBuf::from(s)))
    }
}

#[derive(Debug, Clone)]
pub struct AssetLibrary {
    root: PathBuf,
    entries: BTreeMap<(AssetKind, String), PathBuf>,
    tags: BTreeMap<String, Vec<String>>,
}

impl AssetLibrary {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let mut entries = BTreeMap::new();
        let mut tags = BTreeMap::new();
        for kind in [AssetKind::Scene, AssetKind::Object, AssetKind::Motion] {
            let dir = root.join(kind.dir());
            if !dir.is_dir() {
                continue;
            }
            let mut listing: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| PipelineError::io(&dir, e))?
                .map(|e| e.map(|e| e.path()).map_err(|err| PipelineError::io(&dir, err)))
                .collect::<Result<_>>()?;
            listing.sort();
            for path in listing {
                let (id, file) = match kind {
                    AssetKind::Motion => {
                        let desc = path.join("clip.toml");
                        if !desc.is_file() {
                            continue;
                        }
                        let id = file_id(&path);
                        tags.insert(id.clone(), ClipDescriptor::load(&desc)?.tags);
                        (id, path.clone())
                    }
                    _ => {
                        let is_ply = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
                        if !is_ply || !path.is_file() {
                            continue;
                        }
                        (file_id(&path), path.clone())
                    }
                };
                if entries.insert((kind, id.clone()), file).is_some() {
                    return Err(PipelineError::Config(format!("duplicate {kind} id {id:?} in {}", dir.display())));
                }
            }
        }
        Ok(Self { root, entries, tags })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn get(&self, kind: AssetKind, id: &str) -> Result<&Path> {
        self.entries
            .get(&(kind, id.to_string()))
            .map(PathBuf::as_path)
            .ok_or_else(|| PipelineError::Config(format!("no {kind} asset {id:?} in library {}", self.root.display())))
    }

    pub fn ids(&self, kind: AssetKind) -> impl Iterator<Item = &str> {
        self.entries.keys().filter(move |(k, _)| *k == kind).map(|(_, id)| id.as_str())
    }

    pub fn motion_tags(&self) -> &BTreeMap<String, Vec<String>> {
        &self.tags
    }

    /// Best tag-overlap motion id for `prompt`.
    pub fn best_motion(&self, prompt: &str) -> Result<(String, f64)> {
        best_match(prompt, &self.tags).ok_or_else(|| PipelineError::MotionNotFound(prompt.to_string()))
    }

    pub fn retrieve_motion(&self, prompt: &str) -> Result<(String, AnimationClip)> {
        let (id, _) = self.best_motion(prompt)?;
        let clip = AnimationClip::load(self.get(AssetKind::Motion, &id)?)?;
        Ok((id, clip))
    }
}

fn file_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Lowercased, stemmed word set.
pub fn stem_tokens(text: &str) -> BTreeSet<String> {
    let stemmer = Stemmer::create(Algorithm::English);
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| stemmer.stem(w).into_owned())
        .collect()
}

/// `|tokens(prompt) ∩ tags| / |tags|`, over stemmed distinct tags.
pub fn tag_score(prompt: &str, tags: &[String]) -> f64 {
    let tokens = stem_tokens(prompt);
    let tag_set: BTreeSet<String> = tags.iter().flat_map(|t| stem_tokens(t)).collect();
    if tag_set.is_empty() {
        return 0.0;
    }
    tag_set.intersection(&tokens).count() as f64 / tag_set.len() as f64
}

/// Highest positive score; ties go to the lexicographically smallest id.
pub fn best_match(prompt: &str, tags: &BTreeMap<String, Vec<String>>) -> Option<(String, f64)> {
    let mut best: Option<(String, f64)> = None;
    for (id, t) in tags {
        let s = tag_score(prompt, t);
        if s > 0.0 && best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((id.clone(), s));
        }
    }
    best
}
