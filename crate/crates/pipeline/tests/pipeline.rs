use std::path::Path;

use c3v_pipeline::fixture::{write_fixture_with, FixturePaths};
use c3v_pipeline::job::{frame_file, lift_file, placement_file, plan_file, LiftRecord, PlacementRecord, RUN_MANIFEST};
use c3v_pipeline::manifest::ObjectEntry;
use c3v_pipeline::{
    swap_asset, Edit, FailureKind, Job, PlanRecord, ResolvedManifest, RunManifest, SceneManifest, Stage,
};
use nalgebra::Matrix3;
use tempfile::TempDir;

const SIDE: usize = 41;

fn fixture() -> (TempDir, FixturePaths) {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture_with(dir.path(), SIDE).unwrap();
    (dir, paths)
}

fn manifest(paths: &FixturePaths, frames: usize) -> SceneManifest {
    let mut m = SceneManifest::load(&paths.manifest).unwrap();
    m.frame_count = frames;
    m
}

fn job(paths: &FixturePaths, m: SceneManifest, out: &str) -> Job {
    Job::new(ResolvedManifest::new(m, &paths.root).unwrap(), paths.root.join(out))
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
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
fn compose_is_deterministic_and_cached() {
    let (_d, p) = fixture();
    let a = job(&p, manifest(&p, 6), "a");
    let reports = a.compose().unwrap();
    assert!(reports.iter().all(|r| !r.cached));
    let b = job(&p, manifest(&p, 6), "b");
    b.compose().unwrap();
    for f in 0..6 {
        let fa = std::fs::read(a.out(&frame_file(f))).unwrap();
        let fb = std::fs::read(b.out(&frame_file(f))).unwrap();
        assert!(fa == fb, "frame {f} differs between runs");
    }
    let ra = std::fs::read(a.out(RUN_MANIFEST)).unwrap();
    assert_eq!(ra, std::fs::read(b.out(RUN_MANIFEST)).unwrap());
    let run: RunManifest = read(&a.out(RUN_MANIFEST));
    assert_eq!(run.frames.len(), 6);
    assert_eq!(run.objects[0].clip.as_deref(), Some("motion:walk"));

    let again = job(&p, manifest(&p, 6), "a").compose().unwrap();
    assert!(again.iter().all(|r| r.cached));
}

#[test]
fn changing_refine_settings_reruns_only_later_stages() {
    let (_d, p) = fixture();
    job(&p, manifest(&p, 3), "out").compose().unwrap();
    let mut m = manifest(&p, 3);
    m.refine.tau_s = Some(0.1);
    let reports = job(&p, m, "out").compose().unwrap();
    let cached: Vec<bool> = reports.iter().map(|r| r.cached).collect();
    assert_eq!(cached, [true, true, false, false]);
    let placement: PlacementRecord = read(&p.root.join("out").join(placement_file("avatar")));
    assert_eq!(placement.params.tau_s, 0.1);
}

#[test]
fn later_stage_without_inputs_is_a_config_failure() {
    let (_d, p) = fixture();
    let j = job(&p, manifest(&p, 3), "out");
    let e = j.lift().unwrap_err();
    assert_eq!(e.stage, Stage::Lift);
    assert_eq!(e.kind(), FailureKind::Config);
    assert!(e.to_string().contains("run the plan stage first"), "{e}");
    assert_eq!(j.render().unwrap_err().kind(), FailureKind::Config);
}

#[test]
fn planned_path_is_lifted_onto_the_ground() {
    let (_d, p) = fixture();
    let j = job(&p, manifest(&p, 2), "out");
    j.plan().unwrap();
    j.lift().unwrap();
    let plan: PlanRecord = read(&j.out(&plan_file("avatar")));
    assert_eq!(plan.source, "director:mock");
    assert_eq!(plan.plan.trajectory.len(), 8);
    let lift: LiftRecord = read(&j.out(&lift_file("avatar")));
    assert!(lift.reprojection_error_px < 1e-6, "{}", lift.reprojection_error_px);
    // S = H_2D · z0 / fy with the mock's 74 px estimate
    assert!((lift.base_scale - 74.0 * lift.start_depth / 480.0).abs() < 1e-12);
    // blended splat depth sits slightly in front of the plane at grazing angles
    for b in lift.trajectory.base_points() {
        assert!(b.y.abs() < 0.15 * lift.height, "base point {b:?} is off the ground plane");
    }
}

#[test]
fn static_object_stays_put_with_canonical_heading() {
    let (_d, p) = fixture();
    let mut m = manifest(&p, 4);
    m.objects[0].motion = "standing still".into();
    let j = job(&p, m, "out");
    j.compose().unwrap();
    let plan: PlanRecord = read(&j.out(&plan_file("avatar")));
    assert!(plan.plan.is_static);
    let placement: PlacementRecord = read(&j.out(&placement_file("avatar")));
    assert!(placement.is_static);
    assert_eq!(placement.effective_locations.len(), 1);
    assert_eq!(placement.rotations.rotations, vec![Matrix3::identity()]);
    let run: RunManifest = read(&j.out(RUN_MANIFEST));
    assert_eq!(run.objects[0].clip, None);
}

#[test]
fn sky_path_fails_with_depth_missing() {
    let (_d, p) = fixture();
    let mut m = manifest(&p, 2);
    m.objects.push(object("kite", "object:cube_robot", "a kite", "soaring"));
    let j = job(&p, m, "out");
    j.plan().unwrap();
    let e = j.lift().unwrap_err();
    assert_eq!(e.kind(), FailureKind::DepthMissing);
    assert_eq!(e.object.as_deref(), Some("kite"));
}

#[test]
fn unknown_prompt_fails_in_plan_with_object_named() {
    let (_d, p) = fixture();
    let mut m = manifest(&p, 2);
    m.objects[0].prompt = "a teapot".into();
    let e = job(&p, m, "out").plan().unwrap_err();
    assert_eq!((e.stage, e.kind()), (Stage::Plan, FailureKind::Director));
    assert_eq!(e.object.as_deref(), Some("avatar"));
}

#[test]
fn appearance_swap_reuses_the_plan() {
    let (_d, p) = fixture();
    let base = manifest(&p, 3);
    job(&p, base.clone(), "out").compose().unwrap();
    let before: PlanRecord = read(&p.root.join("out").join(plan_file("avatar")));
    let swapped = swap_asset(
        &base,
        Edit::Appearance {
            id: "avatar".into(),
            asset: "object:cube_robot".into(),
        },
        false,
    )
    .unwrap();
    let reports = job(&p, swapped, "out").compose().unwrap();
    assert!(reports[0].cached && reports[1].cached);
    assert!(!reports[2].cached && !reports[3].cached);
    let after: PlanRecord = read(&p.root.join("out").join(plan_file("avatar")));
    assert_eq!(before, after);
}

#[test]
fn motion_swap_keeps_trajectory_and_changes_clip() {
    let (_d, p) = fixture();
    let base = manifest(&p, 3);
    job(&p, base.clone(), "out").compose().unwrap();
    let swapped = swap_asset(
        &base,
        Edit::Motion {
            id: "avatar".into(),
            prompt: "dancing".into(),
        },
        false,
    )
    .unwrap();
    let reports = job(&p, swapped, "out").compose().unwrap();
    assert!(reports[0].cached && reports[1].cached);
    let run: RunManifest = read(&p.root.join("out").join(RUN_MANIFEST));
    assert_eq!(run.objects[0].clip.as_deref(), Some("motion:dance"));
}

#[test]
fn motion_swap_with_replan_queries_the_director_again() {
    let (_d, p) = fixture();
    let fixtures = r#"[
      { "task": "endpoints", "prompt": "a cube avatar dancing", "payload": { "start": [240, 300], "end": [280, 290] } },
      { "task": "path", "prompt": "a cube avatar dancing", "payload": { "points": [[240, 300], [260, 295], [280, 290]] } }
    ]"#;
    std::fs::write(p.root.join("extra.json"), fixtures).unwrap();
    let mut base = manifest(&p, 3);
    base.director.fixtures = Some("extra.json".into());
    job(&p, base.clone(), "out").compose().unwrap();
    let swapped = swap_asset(
        &base,
        Edit::Motion {
            id: "avatar".into(),
            prompt: "dancing".into(),
        },
        true,
    )
    .unwrap();
    let reports = job(&p, swapped, "out").compose().unwrap();
    assert!(reports.iter().all(|r| !r.cached));
    let plan: PlanRecord = read(&p.root.join("out").join(plan_file("avatar")));
    assert_eq!(plan.plan.motion_prompt, "dancing");
    assert_eq!(plan.plan.endpoints.start, [240.0, 300.0]);
}

#[test]
fn precomputed_plan_skips_the_director() {
    let (_d, p) = fixture();
    let j = job(&p, manifest(&p, 2), "first");
    j.plan().unwrap();
    std::fs::copy(j.out(&plan_file("avatar")), p.root.join("avatar_plan.json")).unwrap();
    let mut m = manifest(&p, 2);
    m.objects[0].plan = Some("avatar_plan.json".into());
    m.director.mode = c3v_pipeline::manifest::DirectorMode::Live;
    let k = job(&p, m, "second");
    k.plan().unwrap();
    let plan: PlanRecord = read(&k.out(&plan_file("avatar")));
    assert_eq!(plan.source, "file");
}

#[test]
fn single_frame_shows_the_first_path_point() {
    let (_d, p) = fixture();
    let j = job(&p, manifest(&p, 1), "out");
    j.compose().unwrap();
    assert!(j.out(&frame_file(0)).is_file());
    assert!(!j.out(&frame_file(1)).exists());
}

#[test]
fn validate_reports_missing_assets() {
    let (_d, p) = fixture();
    let mut m = manifest(&p, 2);
    m.objects[0].asset = "object:unicorn".into();
    let e = job(&p, m, "out").validate().unwrap_err();
    assert_eq!(e.kind(), FailureKind::Config);
    job(&p, manifest(&p, 2), "out").validate().unwrap();
}
