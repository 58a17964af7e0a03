#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use c3v_pipeline::fixture::{write_fixture_with, FixturePaths};
use c3v_pipeline::SceneManifest;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

pub const BIN: &str = env!("CARGO_BIN_EXE_c3v");

pub struct Run {
    pub code: i32,
    pub stderr: String,
    pub stdout: String,
}

impl Run {
    /// Last stderr line, the machine-readable status.
    pub fn status(&self) -> &str {
        self.stderr.lines().last().unwrap_or_default()
    }
}

pub fn c3v(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("C3V_DIRECTOR_URL")
        .env_remove("C3V_DIRECTOR_KEY")
        .env_remove("RUST_LOG")
        .output()
        .expect("c3v runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
    }
}

pub fn fixture(side: usize) -> (TempDir, FixturePaths) {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture_with(dir.path(), side).unwrap();
    (dir, paths)
}

pub fn edit_manifest(paths: &FixturePaths, f: impl FnOnce(&mut SceneManifest)) {
    let mut m = SceneManifest::load(&paths.manifest).unwrap();
    f(&mut m);
    m.save(&paths.manifest).unwrap();
}

pub fn sha256_file(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

pub fn golden_file() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/fixture_frames.sha256")
}

/// `(file name, digest)` for every PNG in `frames`, sorted by name.
pub fn frame_digests(frames: &Path) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = std::fs::read_dir(frames)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), sha256_file(&p)))
        .collect();
    v.sort();
    v
}

pub fn format_digests(d: &[(String, String)]) -> String {
    d.iter().map(|(n, h)| format!("{h}  {n}\n")).collect()
}

pub fn read_goldens() -> Option<Vec<(String, String)>> {
    let text = std::fs::read_to_string(golden_file()).ok()?;
    Some(
        text.lines()
            .filter_map(|l| l.split_once("  "))
            .map(|(h, n)| (n.to_string(), h.to_string()))
            .collect(),
    )
}
