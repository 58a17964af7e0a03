//! Finite-difference guidance gradients against a closed-form derivative of a
//! quadratic image loss.

use c3v_core::composer::{sds_gradient, Param, PlacementParams, PullToTargetProvider, RefineScene};
use c3v_core::math::sigmoid;
use c3v_core::{Camera, Framebuffer, Gaussian3D, GaussianCloud};
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

const FX: f64 = 40.0;
const SIZE: u32 = 32;
const STD: f64 = 1.2;
const ALPHA: f64 = 0.5;
const LOW_PASS: f64 = 0.3;

fn color() -> Vector3<f64> {
    Vector3::new(0.9, 0.4, 0.1)
}

fn camera() -> Camera {
    Camera::identity_pose(FX, FX, SIZE as f64 / 2.0, SIZE as f64 / 2.0, SIZE, SIZE).unwrap()
}

/// One broad splat whose 3-sigma ellipse covers the whole image, so the
/// render is smooth in every placement parameter.
fn object() -> GaussianCloud {
    GaussianCloud::new("blob", vec![Gaussian3D::isotropic(Vector3::zeros(), STD, ALPHA, color())])
}

struct Oracle {
    target: Framebuffer,
}

impl Oracle {
    fn jacobian(p: &Vector3<f64>) -> Matrix2x3<f64> {
        let z = p.z;
        Matrix2x3::new(FX / z, 0.0, -FX * p.x / (z * z), 0.0, FX / z, -FX * p.y / (z * z))
    }

    fn d_jacobian(p: &Vector3<f64>, axis: usize) -> Matrix2x3<f64> {
        let (x, y, z) = (p.x, p.y, p.z);
        match axis {
            0 => Matrix2x3::new(0.0, 0.0, -FX / (z * z), 0.0, 0.0, 0.0),
            1 => Matrix2x3::new(0.0, 0.0, 0.0, 0.0, 0.0, -FX / (z * z)),
            _ => Matrix2x3::new(
                -FX / (z * z),
                0.0,
                2.0 * FX * x / (z * z * z),
                0.0,
                -FX / (z * z),
                2.0 * FX * y / (z * z * z),
            ),
        }
    }

    fn d_mean(p: &Vector3<f64>, axis: usize) -> Vector2<f64> {
        let z = p.z;
        match axis {
            0 => Vector2::new(FX / z, 0.0),
            1 => Vector2::new(0.0, FX / z),
            _ => Vector2::new(-FX * p.x / (z * z), -FX * p.y / (z * z)),
        }
    }

    /// dL/d(world quantity): `which` is 0..3 for a location axis, 3 for scale.
    fn world_derivative(&self, loc: &Vector3<f64>, scale: f64, which: usize) -> f64 {
        let sigma3 = Matrix3::identity() * (scale * STD).powi(2);
        let j = Self::jacobian(loc);
        let cov = j * sigma3 * j.transpose() + Matrix2::identity() * LOW_PASS;
        let a = cov.try_inverse().unwrap();
        let mean = Vector2::new(FX * loc.x / loc.z + SIZE as f64 / 2.0, FX * loc.y / loc.z + SIZE as f64 / 2.0);
        let (dmean, dcov) = if which < 3 {
            let dj = Self::d_jacobian(loc, which);
            (Self::d_mean(loc, which), dj * sigma3 * j.transpose() + j * sigma3 * dj.transpose())
        } else {
            let ds = Matrix3::identity() * (2.0 * scale * STD * STD);
            (Vector2::zeros(), j * ds * j.transpose())
        };
        let da = -a * dcov * a;
        let c = color();
        let mut total = 0.0;
        for py in 0..SIZE {
            for px in 0..SIZE {
                let d = Vector2::new(px as f64 + 0.5, py as f64 + 0.5) - mean;
                let m2 = d.dot(&(a * d));
                assert!(m2 <= 9.0, "pixel outside support; oracle assumes full coverage");
                let s = ALPHA * (-0.5 * m2).exp();
                let dm2 = -2.0 * d.dot(&(a * dmean)) + d.dot(&(da * d));
                let ds = -0.5 * s * dm2;
                let i = 3 * (py * SIZE + px) as usize;
                for ch in 0..3 {
                    let x = c[ch] * s;
                    total += 2.0 * (x - self.target.rgb[i + ch]) * c[ch] * ds;
                }
            }
        }
        total
    }

    fn raw_derivative(&self, params: &PlacementParams, p: Param) -> f64 {
        let loc = params.effective_location(0).unwrap();
        let scale = params.effective_scale();
        match p {
            Param::Scale => {
                let s = sigmoid(params.scale_raw);
                self.world_derivative(&loc, scale, 3) * s * (1.0 - s) * params.tau_s
            }
            Param::Location { axis, .. } => {
                let s = sigmoid(params.location_raw[0][axis]);
                self.world_derivative(&loc, scale, axis) * s * (1.0 - s) * params.tau_l
            }
        }
    }
}

fn setup() -> (PlacementParams, Oracle) {
    let cloud = object();
    let scene = RefineScene::new(camera(), &cloud);
    let target = scene.render(1.1, Vector3::new(0.15, -0.1, 4.3), 0).unwrap();
    let mut params = PlacementParams::new(1.0, vec![Vector3::new(0.0, 0.05, 4.0)], 0.4, 0.6).unwrap();
    params.scale_raw = 0.3;
    params.location_raw[0] = Vector3::new(0.4, -0.7, 0.2);
    (params, Oracle { target })
}

fn selectors() -> Vec<Param> {
    let mut v = vec![Param::Scale];
    v.extend(Param::location(0));
    v
}

#[test]
fn pixel_values_match_oracle_model() {
    let cloud = object();
    let scene = RefineScene::new(camera(), &cloud);
    let img = scene.render(1.0, Vector3::new(0.0, 0.0, 4.0), 0).unwrap();
    // center pixel (15.5 - 16)² + same → m² = 0.5 / var
    let var = (FX * STD / 4.0).powi(2) + LOW_PASS;
    let expected = ALPHA * (-0.5 * 0.5 / var).exp() * color()[0];
    assert!((img.pixel(15, 15)[0] - expected).abs() < 1e-12);
}

#[test]
fn finite_differences_match_analytic_derivative() {
    let cloud = object();
    let scene = RefineScene::new(camera(), &cloud);
    let (params, oracle) = setup();
    let provider = PullToTargetProvider::new(oracle.target.clone());
    let sel = selectors();
    let g1 = sds_gradient(&params, &sel, &scene, &provider, 1e-3, 11).unwrap();
    let g2 = sds_gradient(&params, &sel, &scene, &provider, 5e-4, 11).unwrap();
    for (k, &p) in sel.iter().enumerate() {
        let exact = oracle.raw_derivative(&params, p);
        let e1 = (g1[k] - exact).abs() / exact.abs();
        let e2 = (g2[k] - exact).abs() / exact.abs();
        assert!(exact.abs() > 1e-3, "{p:?}: degenerate oracle value {exact}");
        assert!(e1 <= 1e-3, "{p:?}: fd {} vs exact {exact} (rel {e1})", g1[k]);
        assert!(e1 / e2 >= 3.0, "{p:?}: halving h went {e1} -> {e2}");
    }
}

#[test]
fn gradient_is_seed_deterministic() {
    let cloud = object();
    let scene = RefineScene::new(camera(), &cloud);
    let (params, oracle) = setup();
    let provider = PullToTargetProvider::new(oracle.target);
    let a = sds_gradient(&params, &selectors(), &scene, &provider, 1e-3, 5).unwrap();
    let b = sds_gradient(&params, &selectors(), &scene, &provider, 1e-3, 5).unwrap();
    assert_eq!(a, b);
}
