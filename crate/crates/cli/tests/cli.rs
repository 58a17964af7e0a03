mod common;

use c3v_pipeline::job::{lift_file, placement_file, LiftRecord, PlacementRecord};
use c3v_pipeline::manifest::{ObjectEntry, ProviderKind};
use common::{c3v, edit_manifest, fixture};

const SIDE: usize = 41;

fn read<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> T {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn object(id: &str, asset: &str, prompt: &str, motion: &str) -> ObjectEntry {
    ObjectEntry {
        id: id.into(),
        asset: asset.into(),
        prompt: prompt.into(),
        motion: motion.into(),
        planning_motion: None,
        clip: None,
        height: None,
        plan: None,
        placement: None,
    }
}

#[test]
fn help_lists_every_flag() {
    let d = tempfile::tempdir().unwrap();
    let r = c3v(d.path(), &["compose", "--help"]);
    assert_eq!(r.code, 0);
    for flag in [
        "--manifest",
        "--out",
        "--director",
        "--provider",
        "--seed",
        "--frames",
        "--res",
        "--n-path-points",
        "--tau-s",
        "--tau-l",
    ] {
        assert!(r.stdout.contains(flag), "{flag} missing from help");
    }
    let top = c3v(d.path(), &["--help"]);
    for cmd in ["plan", "lift", "refine", "render", "compose", "validate"] {
        assert!(top.stdout.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn unknown_flag_is_a_hard_error() {
    let d = tempfile::tempdir().unwrap();
    let r = c3v(d.path(), &["compose", "--frobnicate"]);
    assert_eq!(r.code, 2);
    assert!(r.status().starts_with("status=error"), "{}", r.stderr);
    assert_eq!(c3v(d.path(), &["compose", "--res", "512"]).code, 2);
}

#[test]
fn live_director_without_url_names_the_variable() {
    let (_d, p) = fixture(SIDE);
    let r = c3v(&p.root, &["plan", "--director", "live"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("C3V_DIRECTOR_URL"), "{}", r.stderr);
}

#[test]
fn degenerate_trajectory_is_a_validation_failure() {
    let (_d, p) = fixture(SIDE);
    edit_manifest(&p, |m| {
        m.objects[0].prompt = "a frozen ghost".into();
        m.objects[0].motion = "gliding".into();
    });
    let r = c3v(&p.root, &["plan"]);
    assert_eq!(r.code, 4, "{}", r.stderr);
    assert!(r.status().contains("kind=validation"), "{}", r.status());
    assert!(r.status().contains("object=avatar"), "{}", r.status());
}

#[test]
fn stage_without_plan_is_a_config_failure() {
    let (_d, p) = fixture(SIDE);
    let r = c3v(&p.root, &["lift"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.status().contains("stage=lift"), "{}", r.status());
}

#[test]
fn sky_path_is_depth_missing() {
    let (_d, p) = fixture(SIDE);
    edit_manifest(&p, |m| m.objects.push(object("kite", "object:cube_robot", "a kite", "soaring")));
    assert_eq!(c3v(&p.root, &["plan"]).code, 0);
    let r = c3v(&p.root, &["lift"]);
    assert_eq!(r.code, 5, "{}", r.stderr);
    assert_eq!(r.status(), "status=error stage=lift code=5 kind=depth_missing object=kite");
}

#[test]
fn zero_provider_leaves_lifted_placement() {
    let (_d, p) = fixture(SIDE);
    let r = c3v(&p.root, &["compose", "--frames", "2", "--provider", "zero"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.status(), "status=ok stage=compose code=0");
    let out = p.root.join("out");
    let lift: LiftRecord = read(&out.join(lift_file("avatar")));
    let placement: PlacementRecord = read(&out.join(placement_file("avatar")));
    assert_eq!(placement.effective_scale, lift.base_scale);
    assert_eq!(placement.params.scale_raw, 0.0);
    assert!(placement.params.location_raw.iter().all(|r| r.iter().all(|&c| c == 0.0)));
    assert_eq!(placement.effective_locations, placement.params.base_locations);
    let lifted = lift.trajectory.deduplicated();
    assert_eq!(placement.effective_locations, lifted);
}

#[test]
fn absurd_step_size_diverges() {
    let (_d, p) = fixture(SIDE);
    edit_manifest(&p, |m| {
        m.frame_count = 1;
        m.refine.optimizer.step_size = 1e9;
    });
    let r = c3v(&p.root, &["compose", "--provider", "silhouette"]);
    assert_eq!(r.code, 6, "{}", r.stderr);
    assert!(r.status().contains("stage=refine"), "{}", r.status());
}

#[test]
fn pull_provider_converges_toward_a_larger_target() {
    let (_d, p) = fixture(SIDE);
    edit_manifest(&p, |m| {
        m.frame_count = 1;
        m.objects[0].motion = "standing still".into();
    });
    // reference placement: the lifted one with the scale raised by 10 %
    assert_eq!(c3v(&p.root, &["compose", "--out", "base"]).code, 0);
    let base: PlacementRecord = read(&p.root.join("base").join(placement_file("avatar")));
    let mut target = base.clone();
    target.effective_scale *= 1.1;
    std::fs::write(p.root.join("target.json"), serde_json::to_vec(&target).unwrap()).unwrap();
    let original = std::fs::read_to_string(&p.manifest).unwrap();
    edit_manifest(&p, |m| m.objects[0].placement = Some("target.json".into()));
    assert_eq!(c3v(&p.root, &["compose", "--out", "base"]).code, 0);
    std::fs::copy(p.root.join("base/frames/frame_00000.png"), p.root.join("target.png")).unwrap();

    std::fs::write(&p.manifest, original).unwrap();
    edit_manifest(&p, |m| {
        m.refine.provider = ProviderKind::Pull;
        m.refine.pull_target = Some("target.png".into());
        m.refine.gain = 1000.0 / (512.0 * 512.0);
        m.refine.refine_locations = false;
        m.refine.optimizer.step_size = 0.2;
        m.refine.optimizer.tolerance = 1e-4;
    });
    let r = c3v(&p.root, &["compose", "--out", "pulled"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let pulled: PlacementRecord = read(&p.root.join("pulled").join(placement_file("avatar")));
    let max = c3v_core::composer::RefineConfig::default().max_iterations;
    assert!(pulled.trace.iterations.iter().all(|&n| n < max), "{:?}", pulled.trace.iterations);
    let before = (base.effective_scale - target.effective_scale).abs();
    let after = (pulled.effective_scale - target.effective_scale).abs();
    assert!(after < 0.05 * before, "scale {} -> {}, target {}", base.effective_scale, pulled.effective_scale, target.effective_scale);
}

#[test]
fn missing_camera_is_a_config_failure() {
    let (_d, p) = fixture(SIDE);
    std::fs::remove_file(&p.camera).unwrap();
    let r = c3v(&p.root, &["compose"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("camera.toml"), "{}", r.stderr);
}

#[test]
fn second_compose_is_fully_cached_and_scene_swap_replans() {
    let (_d, p) = fixture(SIDE);
    assert_eq!(c3v(&p.root, &["compose", "--frames", "2"]).code, 0);
    let again = c3v(&p.root, &["compose", "--frames", "2"]);
    assert_eq!(again.code, 0);
    for stage in ["plan", "lift", "refine", "render"] {
        assert!(
            again.stderr.lines().any(|l| l.contains("cached") && l.contains(&format!("stage=\"{stage}\""))),
            "{stage} not cached:\n{}",
            again.stderr
        );
    }

    // a coarser courtyard stands in for a new scene
    c3v_core::ply::write_ply(p.library.join("scenes/plaza.ply"), &c3v_pipeline::fixture::courtyard(31)).unwrap();
    let r = c3v(&p.root, &["swap", "--scene", "scene:plaza"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let swapped = c3v(&p.root, &["compose", "--frames", "2"]);
    assert_eq!(swapped.code, 0, "{}", swapped.stderr);
    assert!(
        !swapped.stderr.lines().any(|l| l.contains("cached") && l.contains("stage=\"plan\"")),
        "plan was cached after a scene swap:\n{}",
        swapped.stderr
    );
}

#[test]
fn swap_rejects_malformed_edits() {
    let (_d, p) = fixture(SIDE);
    let r = c3v(&p.root, &["swap", "--motion", "avatar"]);
    assert_eq!(r.code, 2);
    let r = c3v(&p.root, &["swap", "--appearance", "ghost=object:cube_robot"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    let r = c3v(&p.root, &["swap", "--appearance", "avatar=object:cube_robot", "--output", "robot.toml"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(std::fs::read_to_string(p.root.join("robot.toml")).unwrap().contains("object:cube_robot"));
}

#[test]
fn validate_accepts_the_fixture() {
    let (_d, p) = fixture(SIDE);
    let r = c3v(&p.root, &["validate"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.status(), "status=ok stage=validate code=0");
}
