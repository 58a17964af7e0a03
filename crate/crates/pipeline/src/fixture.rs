//! Synthetic courtyard scene used by tests, benchmarks and the quick-start:
//! a checkered ground plane, two cube characters with a face marker, a walk
//! and a dance clip, a two-keyframe camera and a manifest tying them together.

use std::path::{Path, PathBuf};

use c3v_core::ply::write_ply;
use c3v_core::{Gaussian3D, GaussianCloud};
use nalgebra::{Quaternion, Vector3};

use crate::clip::AnimationClip;
use crate::error::{PipelineError, Result};

pub const PROMPT: &str = "a cube avatar walking across a checkered courtyard";

/// Ground grid resolution per side; 141² ≈ 20k Gaussians.
pub const GROUND_SIDE: usize = 141;

/// Cube body lattice: 6 × 12 × 6 = 432 Gaussians.
const BODY: [usize; 3] = [6, 12, 6];

pub const CAMERA_TOML: &str = r#"interpolation = "linear"

[[keyframes]]
time = 0.0
eye = [0.0, -2.5, -3.0]
target = [0.0, 0.0, 6.0]
up = [0.0, -1.0, 0.0]
fx = 480.0
fy = 480.0
width = 512
height = 512

[[keyframes]]
time = 1.0
eye = [0.8, -2.6, -2.8]
target = [0.2, 0.0, 6.0]
up = [0.0, -1.0, 0.0]
fx = 480.0
fy = 480.0
width = 512
height = 512
"#;

pub const MANIFEST_TOML: &str = r#"schema_version = 1
prompt = "a cube avatar walking across a checkered courtyard"
seed = 7
frame_count = 24
library = "library"
camera = "camera.toml"

[scene]
asset = "scene:courtyard"
prompt = "a checkered courtyard"

[[objects]]
id = "avatar"
asset = "object:cube_avatar"
prompt = "a cube avatar"
motion = "walking"
"#;

fn flat(position: Vector3<f64>, std: f64, color: Vector3<f64>) -> Gaussian3D {
    Gaussian3D::new(
        position,
        Vector3::new(std.ln(), (std * 0.08).ln(), std.ln()),
        Quaternion::identity(),
        3.0,
        color,
    )
    .expect("fixture gaussians are valid")
}

/// Ground plane `y = 0` over `x ∈ [−7, 7]`, `z ∈ [−1.5, 14]`, in 1-unit checks.
pub fn courtyard(side: usize) -> GaussianCloud {
    let (x0, x1, z0, z1) = (-7.0, 7.0, -1.5, 14.0);
    let n = side.max(2);
    let step = ((x1 - x0) / (n - 1) as f64).max((z1 - z0) / (n - 1) as f64);
    let light = Vector3::new(0.78, 0.74, 0.66);
    let dark = Vector3::new(0.28, 0.32, 0.30);
    let mut gs = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            let x = x0 + (x1 - x0) * i as f64 / (n - 1) as f64;
            let z = z0 + (z1 - z0) * k as f64 / (n - 1) as f64;
            let check = (x.floor() as i64 + z.floor() as i64).rem_euclid(2) == 0;
            gs.push(flat(Vector3::new(x, 0.0, z), step * 0.7, if check { light } else { dark }));
        }
    }
    GaussianCloud::new("courtyard", gs)
}

/// Box character 0.5 wide and 1 tall, feet at `y = 0` (up is −y), facing +z.
/// The front face carries a darker visor so headings are visible.
pub fn cube_character(label: &str, body: Vector3<f64>, visor: Vector3<f64>) -> GaussianCloud {
    let [nx, ny, nz] = BODY;
    let (w, h) = (0.5, 1.0);
    let mut gs = Vec::with_capacity(nx * ny * nz);
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..nz {
                let x = -w / 2.0 + w * (i as f64 + 0.5) / nx as f64;
                let y = -h * (j as f64 + 0.5) / ny as f64;
                let z = -w / 2.0 + w * (k as f64 + 0.5) / nz as f64;
                let is_visor = k == nz - 1 && (8..10).contains(&j) && (1..nx - 1).contains(&i);
                let color = if is_visor { visor } else { body * (0.85 + 0.15 * j as f64 / ny as f64) };
                gs.push(Gaussian3D::isotropic(Vector3::new(x, y, z), 0.05, 0.9, color));
            }
        }
    }
    GaussianCloud::new(label, gs)
}

pub fn cube_avatar() -> GaussianCloud {
    cube_character("cube_avatar", Vector3::new(0.90, 0.45, 0.12), Vector3::new(0.05, 0.10, 0.35))
}

pub fn cube_robot() -> GaussianCloud {
    cube_character("cube_robot", Vector3::new(0.55, 0.60, 0.68), Vector3::new(0.85, 0.10, 0.10))
}

/// Per-Gaussian displacement of `template`.
fn displaced(template: &GaussianCloud, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Vec<Vector3<f64>> {
    template.gaussians.iter().map(|g| f(&g.position)).collect()
}

/// Four-frame stride: the lower half swings forward and back, legs opposite.
pub fn walk_offsets(template: &GaussianCloud) -> Vec<Vec<Vector3<f64>>> {
    (0..4)
        .map(|k| {
            let phase = (k as f64 * std::f64::consts::FRAC_PI_2).sin();
            displaced(template, |p| {
                let leg = if p.x < 0.0 { 1.0 } else { -1.0 };
                let low = (p.y + 0.5).max(0.0) * 2.0;
                Vector3::new(0.0, 0.0, 0.12 * phase * leg * low)
            })
        })
        .collect()
}

/// Six-frame sway of the upper body.
pub fn dance_offsets(template: &GaussianCloud) -> Vec<Vec<Vector3<f64>>> {
    (0..6)
        .map(|k| {
            let phase = (k as f64 * std::f64::consts::PI / 3.0).sin();
            displaced(template, |p| {
                let high = (-p.y - 0.4).max(0.0) / 0.6;
                Vector3::new(0.15 * phase * high, 0.0, 0.0)
            })
        })
        .collect()
}

/// Files written by [`write_fixture`].
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub camera: PathBuf,
    pub library: PathBuf,
}

/// Writes the fixture under `root` with a ground grid of `side`² Gaussians.
pub fn write_fixture_with(root: &Path, side: usize) -> Result<FixturePaths> {
    let lib = root.join("library");
    for d in ["scenes", "objects", "motions"] {
        let p = lib.join(d);
        std::fs::create_dir_all(&p).map_err(|e| PipelineError::io(&p, e))?;
    }
    write_ply(lib.join("scenes/courtyard.ply"), &courtyard(side))?;
    let avatar = cube_avatar();
    write_ply(lib.join("objects/cube_avatar.ply"), &avatar)?;
    write_ply(lib.join("objects/cube_robot.ply"), &cube_robot())?;
    AnimationClip::write_delta(&lib.join("motions/walk"), &["walk", "stroll"], 12.0, &avatar, &walk_offsets(&avatar))?;
    AnimationClip::write_delta(
        &lib.join("motions/dance"),
        &["dance", "groove"],
        12.0,
        &avatar,
        &dance_offsets(&avatar),
    )?;
    let write = |name: &str, text: &str| -> Result<PathBuf> {
        let p = root.join(name);
        std::fs::write(&p, text).map_err(|e| PipelineError::io(&p, e))?;
        Ok(p)
    };
    Ok(FixturePaths {
        root: root.to_path_buf(),
        camera: write("camera.toml", CAMERA_TOML)?,
        manifest: write("manifest.toml", MANIFEST_TOML)?,
        library: lib,
    })
}

pub fn write_fixture(root: &Path) -> Result<FixturePaths> {
    write_fixture_with(root, GROUND_SIDE)
}
