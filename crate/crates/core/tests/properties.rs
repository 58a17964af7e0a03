use c3v_core::composer::{rotation_schedule_for_points, PlacementParams};
use c3v_core::lifting::{lift_anchor, resample_path, sample_depth, ResampleMode, UpAxis};
use c3v_core::math::{is_rotation, orthonormality_error};
use c3v_core::raster::{Layer, RenderSettings, Renderer};
use c3v_core::{apply_transform, Camera, Gaussian3D, GaussianCloud, RigidTransform};
use nalgebra::{Quaternion, Rotation3, SymmetricEigen, Vector2, Vector3};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn gaussian() -> impl Strategy<Value = Gaussian3D> {
    (
        vec3(2.0),
        vec3(1.5),
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
        -4.0..4.0f64,
        (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64),
    )
        .prop_filter_map("zero quaternion", |(p, s, (w, i, j, k), o, (r, g, b))| {
            Gaussian3D::new(p, s, Quaternion::new(w, i, j, k), o, Vector3::new(r, g, b)).ok()
        })
}

proptest! {
    #[test]
    fn covariance_is_symmetric_positive_definite(g in gaussian()) {
        let c = g.covariance();
        prop_assert_eq!(c, c.transpose());
        let eig = SymmetricEigen::new(c).eigenvalues;
        let mut expected: Vec<f64> = g.scale().iter().map(|s| s * s).collect();
        let mut got: Vec<f64> = eig.iter().copied().collect();
        expected.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&expected) {
            prop_assert!(*a > 0.0);
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn transform_conjugates_covariance(g in gaussian(), axis in vec3(1.0), angle in -3.0..3.0f64,
                                       t in vec3(5.0), s in 0.2..4.0f64) {
        let rot = Rotation3::new(axis.normalize() * angle).into_inner();
        let tf = RigidTransform::new(rot, t, s).unwrap();
        let cloud = apply_transform(&GaussianCloud::new("g", vec![g.clone()]), &tf);
        let out = &cloud.gaussians[0];
        let expected = rot * g.covariance() * rot.transpose() * (s * s);
        prop_assert!((out.covariance() - expected).abs().max() <= 1e-9 * expected.abs().max().max(1.0));
        prop_assert!((out.position - (rot * g.position * s + t)).norm() <= 1e-9 * (1.0 + t.norm()));
    }

    #[test]
    fn clamped_offsets_stay_strictly_inside(raw_s in -80.0..80.0f64, raw_l in vec3(80.0),
                                            tau_s in 1e-3..5.0f64, tau_l in 1e-3..5.0f64,
                                            base in vec3(10.0), s in 0.1..10.0f64) {
        let mut p = PlacementParams::new(s, vec![base], tau_s, tau_l).unwrap();
        p.scale_raw = raw_s;
        p.location_raw[0] = raw_l;
        prop_assert!((p.effective_scale() - s).abs() < tau_s / 2.0);
        let loc = p.effective_location(0).unwrap();
        for k in 0..3 {
            prop_assert!((loc[k] - base[k]).abs() < tau_l / 2.0);
        }
    }

    #[test]
    fn clamped_offsets_are_monotone(a in -60.0..60.0f64, b in -60.0..60.0f64, tau in 1e-3..5.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut p = PlacementParams::new(1.0, vec![Vector3::zeros()], tau, tau).unwrap();
        p.scale_raw = lo;
        p.location_raw[0] = Vector3::repeat(lo);
        let (s0, l0) = (p.effective_scale(), p.effective_location(0).unwrap());
        p.scale_raw = hi;
        p.location_raw[0] = Vector3::repeat(hi);
        prop_assert!(p.effective_scale() >= s0);
        prop_assert!(p.effective_location(0).unwrap().x >= l0.x);
    }

    #[test]
    fn rotation_schedules_are_proper_rotations(points in prop::collection::vec(vec3(10.0), 2..12)) {
        if let Ok(s) = rotation_schedule_for_points(&points, UpAxis::NegY, 1e-6) {
            prop_assert_eq!(s.len(), points.len());
            for r in &s.rotations {
                prop_assert!(orthonormality_error(r) <= 1e-9);
                prop_assert!((r.determinant() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn resampling_length_and_endpoints(points in prop::collection::vec(vec3(10.0), 1..10),
                                       frames in 2usize..40, uniform in any::<bool>()) {
        let mode = if uniform { ResampleMode::UniformParameter } else { ResampleMode::ConstantSpeed };
        let out = resample_path(&points, frames, mode).unwrap();
        prop_assert_eq!(out.len(), frames);
        prop_assert!((out[0] - points[0]).norm() <= 1e-9);
        prop_assert!((out[frames - 1] - points[points.len() - 1]).norm() <= 1e-9);
    }
}

fn random_camera(yaw: f64, pitch: f64, eye: Vector3<f64>) -> Camera {
    let dir = Vector3::new(yaw.sin() * pitch.cos(), pitch.sin(), yaw.cos() * pitch.cos());
    Camera::look_at(eye, eye + dir * 5.0, -Vector3::y(), 80.0, 80.0, 64, 64).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A camera-facing wall renders with exactly its own depth, so lifting a
    /// projected point at that depth lands back on the point.
    #[test]
    fn lift_round_trip_through_rendered_depth(yaw in -3.0..3.0f64, pitch in -0.6..0.6f64, eye in vec3(3.0),
                                              u in 4.0..60.0f64, v in 4.0..60.0f64, depth in 1.0..20.0f64) {
        let cam = random_camera(yaw, pitch, eye);
        let world = cam.unproject(&Vector2::new(u, v), depth);
        let (px, z) = cam.project_point(&world).unwrap();
        let r_inv = cam.world_to_cam_rotation.transpose();
        let mut wall = Vec::new();
        for i in -3..=3 {
            for j in -3..=3 {
                let pc = Vector3::new(i as f64 * 0.2 * z, j as f64 * 0.2 * z, z);
                let pw = r_inv * (pc - cam.world_to_cam_translation);
                wall.push(Gaussian3D::isotropic(pw, 0.15 * z, 0.9, Vector3::repeat(0.5)));
            }
        }
        let cloud = GaussianCloud::new("wall", wall);
        let d = Renderer::new(RenderSettings::default()).render_depth(&cam, &[Layer::untransformed(&cloud)]).unwrap();
        let (zs, _) = sample_depth(&d, &px, 2).unwrap();
        let lifted = lift_anchor(&cam, &px, zs, 0.0, UpAxis::NegY);
        prop_assert!((lifted - world).norm() <= 1e-4 * (1.0 + world.norm()));
        let back = cam.project_point(&lifted).unwrap().0;
        prop_assert!((back - px).norm() <= 0.5);
    }

    #[test]
    fn tiled_matches_reference(gs in prop::collection::vec(gaussian(), 1..60), yaw in -0.5..0.5f64) {
        let cam = random_camera(yaw, 0.0, Vector3::new(0.0, 0.0, -6.0));
        let cloud = GaussianCloud::new("c", gs);
        let r = Renderer::new(RenderSettings::default());
        let bg = Vector3::new(0.1, 0.2, 0.3);
        let a = r.rasterize(&cam, &[Layer::untransformed(&cloud)], bg).unwrap();
        let b = r.rasterize_reference(&cam, &[Layer::untransformed(&cloud)], bg).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-4);
    }
}

#[test]
fn rotation_helper_agrees_with_nalgebra() {
    let r = Rotation3::from_euler_angles(0.1, 0.2, 0.3).into_inner();
    assert!(is_rotation(&r, 1e-12));
    assert!(!is_rotation(&(r * 1.01), 1e-6));
}
