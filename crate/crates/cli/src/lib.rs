//! Argument parsing, manifest overrides and exit-code mapping for `c3v`.

use std::fmt;
use std::path::PathBuf;

use c3v_director::is_static_motion;
use c3v_pipeline::fixture::{write_fixture_with, GROUND_SIDE};
use c3v_pipeline::manifest::{DirectorMode, ProviderKind};
use c3v_pipeline::{
    swap_asset, Edit, FailureKind, Job, PipelineError, ResolvedManifest, SceneManifest, Stage, StageFailure,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::{debug, info};

/// Exit codes. Stable; documented in the README.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DIRECTOR: i32 = 3;
    pub const VALIDATION: i32 = 4;
    pub const DEPTH_MISSING: i32 = 5;
    pub const DIVERGED: i32 = 6;
    pub const RENDER: i32 = 7;
}

pub fn exit_code(kind: FailureKind) -> i32 {
    match kind {
        FailureKind::Config => exit::CONFIG,
        FailureKind::Director => exit::DIRECTOR,
        FailureKind::Validation => exit::VALIDATION,
        FailureKind::DepthMissing => exit::DEPTH_MISSING,
        FailureKind::Diverged => exit::DIVERGED,
        FailureKind::Render => exit::RENDER,
    }
}

fn kind_name(kind: FailureKind) -> &'static str {
    match kind {
        FailureKind::Config => "config",
        FailureKind::Director => "director",
        FailureKind::Validation => "validation",
        FailureKind::DepthMissing => "depth_missing",
        FailureKind::Diverged => "diverged",
        FailureKind::Render => "render",
    }
}

#[derive(Debug, Parser)]
#[command(name = "c3v", version, about = "Compose Gaussian-splat scenes, objects and motions into rendered 4D sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the scene and ask the director for each object's scale and path.
    Plan(JobArgs),
    /// Lift planned pixel paths into world space using scene depth.
    Lift(JobArgs),
    /// Refine object scale and locations against the score provider.
    Refine(JobArgs),
    /// Render the frame sequence and run manifest.
    Render(JobArgs),
    /// Run plan, lift, refine and render, skipping stages whose inputs are unchanged.
    Compose(JobArgs),
    /// Check that the manifest and everything it references load.
    Validate(JobArgs),
    /// Write the synthetic courtyard fixture (scene, objects, clips, camera, manifest).
    Fixture(FixtureArgs),
    /// Apply a scene, appearance or motion edit and write the edited manifest.
    Swap(SwapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectorArg {
    Mock,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Zero,
    Pull,
    Silhouette,
    Ground,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

fn parse_resolution(s: &str) -> Result<Resolution, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("{v:?}: {e}"));
    let (width, height) = (parse(w)?, parse(h)?);
    if width == 0 || height == 0 {
        return Err("resolution must be positive".into());
    }
    Ok(Resolution { width, height })
}

#[derive(Debug, Clone, Args)]
pub struct JobArgs {
    /// Scene manifest (TOML).
    #[arg(long, default_value = "manifest.toml")]
    pub manifest: PathBuf,

    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Director backend; live reads C3V_DIRECTOR_URL and C3V_DIRECTOR_KEY.
    #[arg(long, value_enum)]
    pub director: Option<DirectorArg>,

    /// Score provider used by the refine stage.
    #[arg(long, value_enum)]
    pub provider: Option<ProviderArg>,

    /// Base random seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Number of output frames.
    #[arg(long)]
    pub frames: Option<usize>,

    /// Output resolution as WxH.
    #[arg(long, value_parser = parse_resolution)]
    pub res: Option<Resolution>,

    /// Path points requested from the director.
    #[arg(long)]
    pub n_path_points: Option<usize>,

    /// Absolute scale threshold (default 0.4·S).
    #[arg(long)]
    pub tau_s: Option<f64>,

    /// Absolute location threshold (default 0.3·H_3D).
    #[arg(long)]
    pub tau_l: Option<f64>,

    /// Re-run stages even when cached.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FixtureArgs {
    /// Directory to write into.
    pub dir: PathBuf,

    /// Ground grid Gaussians per side.
    #[arg(long, default_value_t = GROUND_SIDE)]
    pub ground_side: usize,
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("edit").required(true).args(["scene", "appearance", "motion"])))]
pub struct SwapArgs {
    #[arg(long, default_value = "manifest.toml")]
    pub manifest: PathBuf,

    /// Where to write the edited manifest; defaults to overwriting --manifest.
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// New scene asset reference.
    #[arg(long)]
    pub scene: Option<String>,

    /// Object appearance edit as ID=ASSET.
    #[arg(long, value_name = "ID=ASSET")]
    pub appearance: Option<String>,

    /// Object motion edit as ID=PROMPT.
    #[arg(long, value_name = "ID=PROMPT")]
    pub motion: Option<String>,

    /// Also drop the object's plan so its trajectory is estimated again.
    #[arg(long)]
    pub replan: bool,
}

/// How a command ended, rendered as the final stderr line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stage: String,
    pub kind: Option<&'static str>,
    pub object: Option<String>,
    pub message: Option<String>,
}

impl Outcome {
    fn ok(stage: impl Into<String>) -> Self {
        Self {
            code: exit::OK,
            stage: stage.into(),
            kind: None,
            object: None,
            message: None,
        }
    }

    fn failure(f: &StageFailure) -> Self {
        let kind = f.kind();
        Self {
            code: exit_code(kind),
            stage: f.stage.to_string(),
            kind: Some(kind_name(kind)),
            object: f.object.clone(),
            message: Some(f.to_string()),
        }
    }

    pub fn config_error(stage: &str, message: impl fmt::Display) -> Self {
        Self {
            code: exit::CONFIG,
            stage: stage.into(),
            kind: Some("config"),
            object: None,
            message: Some(message.to_string()),
        }
    }

    /// `status=<ok|error> stage=<name> code=<n>` plus kind and object on failure.
    pub fn status_line(&self) -> String {
        let mut s = format!(
            "status={} stage={} code={}",
            if self.code == 0 { "ok" } else { "error" },
            self.stage,
            self.code
        );
        if let Some(k) = self.kind {
            s.push_str(&format!(" kind={k}"));
        }
        if let Some(o) = &self.object {
            s.push_str(&format!(" object={o}"));
        }
        s
    }
}

impl JobArgs {
    /// Loads the manifest and applies command-line overrides.
    pub fn resolve(&self) -> Result<ResolvedManifest, PipelineError> {
        let mut m = SceneManifest::load(&self.manifest)?;
        if let Some(d) = self.director {
            m.director.mode = match d {
                DirectorArg::Mock => DirectorMode::Mock,
                DirectorArg::Live => DirectorMode::Live,
            };
        }
        if let Some(p) = self.provider {
            m.refine.provider = match p {
                ProviderArg::Zero => ProviderKind::Zero,
                ProviderArg::Pull => ProviderKind::Pull,
                ProviderArg::Silhouette => ProviderKind::Silhouette,
                ProviderArg::Ground => ProviderKind::Ground,
                ProviderArg::Remote => ProviderKind::Remote,
            };
        }
        if let Some(s) = self.seed {
            m.seed = s;
        }
        if let Some(f) = self.frames {
            m.frame_count = f;
        }
        if let Some(r) = self.res {
            m.output.width = r.width;
            m.output.height = r.height;
        }
        if let Some(n) = self.n_path_points {
            m.director.n_path_points = n;
        }
        if self.tau_s.is_some() {
            m.refine.tau_s = self.tau_s;
        }
        if self.tau_l.is_some() {
            m.refine.tau_l = self.tau_l;
        }
        let base = self.manifest.parent().map(PathBuf::from).unwrap_or_default();
        ResolvedManifest::new(m, base)
    }

    fn job(&self) -> Result<Job, Outcome> {
        let resolved = self.resolve().map_err(|e| Outcome::config_error("validate", e))?;
        Ok(Job::new(resolved, &self.out).force(self.force))
    }
}

fn run_stages(args: &JobArgs, stages: &[Stage], name: &str) -> Outcome {
    let job = match args.job() {
        Ok(j) => j,
        Err(o) => return o,
    };
    for o in &job.resolved.manifest.objects {
        if is_static_motion(&o.motion) {
            info!(object = %o.id, "stationary motion; a single location will be planned");
        }
    }
    for &stage in stages {
        match job.run(stage) {
            Ok(r) => debug!(stage = stage.as_str(), cached = r.cached, outputs = r.outputs.len(), "stage finished"),
            Err(f) => return Outcome::failure(&f),
        }
    }
    Outcome::ok(name)
}

fn parse_pair(s: &str, what: &str) -> Result<(String, String), Outcome> {
    s.split_once('=')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| Outcome::config_error("swap", format!("--{what} expects ID=VALUE, got {s:?}")))
}

fn swap(args: &SwapArgs) -> Outcome {
    let edit = if let Some(a) = &args.scene {
        Edit::Scene { asset: a.clone() }
    } else if let Some(a) = &args.appearance {
        match parse_pair(a, "appearance") {
            Ok((id, asset)) => Edit::Appearance { id, asset },
            Err(o) => return o,
        }
    } else if let Some(m) = &args.motion {
        match parse_pair(m, "motion") {
            Ok((id, prompt)) => Edit::Motion { id, prompt },
            Err(o) => return o,
        }
    } else {
        return Outcome::config_error("swap", "no edit given");
    };
    let result = SceneManifest::load(&args.manifest)
        .and_then(|m| swap_asset(&m, edit, args.replan))
        .and_then(|m| m.save(args.output.as_ref().unwrap_or(&args.manifest)));
    match result {
        Ok(()) => Outcome::ok("swap"),
        Err(e) => Outcome::config_error("swap", e),
    }
}

pub fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Plan(a) => run_stages(a, &[Stage::Plan], "plan"),
        Command::Lift(a) => run_stages(a, &[Stage::Lift], "lift"),
        Command::Refine(a) => run_stages(a, &[Stage::Refine], "refine"),
        Command::Render(a) => run_stages(a, &[Stage::Render], "render"),
        Command::Compose(a) => run_stages(a, &Stage::ALL, "compose"),
        Command::Validate(a) => run_stages(a, &[Stage::Validate], "validate"),
        Command::Fixture(a) => match write_fixture_with(&a.dir, a.ground_side) {
            Ok(p) => {
                info!(manifest = %p.manifest.display(), "fixture written");
                Outcome::ok("fixture")
            }
            Err(e) => Outcome::config_error("fixture", e),
        },
        Command::Swap(a) => swap(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_parsing() {
        assert_eq!(parse_resolution("512x256").unwrap(), Resolution { width: 512, height: 256 });
        assert!(parse_resolution("0x5").is_err());
        assert!(parse_resolution("512").is_err());
    }

    #[test]
    fn status_lines() {
        assert_eq!(Outcome::ok("plan").status_line(), "status=ok stage=plan code=0");
        let f = StageFailure::new(Stage::Lift, Some("kite"), PipelineError::DepthMissing { index: 2 });
        assert_eq!(
            Outcome::failure(&f).status_line(),
            "status=error stage=lift code=5 kind=depth_missing object=kite"
        );
    }

    #[test]
    fn exit_codes_are_distinct() {
        use FailureKind::*;
        let codes: Vec<i32> = [Config, Director, Validation, DepthMissing, Diverged, Render]
            .into_iter()
            .map(exit_code)
            .collect();
        assert_eq!(codes, [2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
