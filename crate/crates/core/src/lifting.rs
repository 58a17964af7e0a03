//! Lifting pixel trajectories into world space and resampling them per frame.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::bbox::BBox2D;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::raster::{DepthMap, DepthOrigin};

/// World direction treated as "up" when seating an object on its anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpAxis {
    PosX,
    NegX,
    PosY,
    #[default]
    NegY,
    PosZ,
    NegZ,
}

impl UpAxis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            UpAxis::PosX => Vector3::x(),
            UpAxis::NegX => -Vector3::x(),
            UpAxis::PosY => Vector3::y(),
            UpAxis::NegY => -Vector3::y(),
            UpAxis::PosZ => Vector3::z(),
            UpAxis::NegZ => -Vector3::z(),
        }
    }

    /// Removes the up component of `v`.
    pub fn planar(self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = self.unit();
        v - u * u.dot(v)
    }
}

/// Horizontal offset from a path point to the depth anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorRule {
    /// Center of the bbox's lower edge: `(p_x + W/2, p_y)`.
    #[default]
    LowerEdgeCenter,
    /// `(p_x + H/2, p_y)`, kept for compatibility with the height-offset form.
    HalfHeightOffset,
}

impl AnchorRule {
    pub fn anchor(self, p: &Vector2<f64>, bbox: &BBox2D) -> Vector2<f64> {
        let dx = match self {
            AnchorRule::LowerEdgeCenter => bbox.width_px / 2.0,
            AnchorRule::HalfHeightOffset => bbox.height_px / 2.0,
        };
        Vector2::new(p.x + dx, p.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftOptions {
    pub up_axis: UpAxis,
    pub anchor_rule: AnchorRule,
    /// Half-size of the square searched when the anchor pixel has no depth.
    pub search_radius: u32,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self {
            up_axis: UpAxis::NegY,
            anchor_rule: AnchorRule::LowerEdgeCenter,
            search_radius: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DepthSource {
    Exact,
    Neighborhood { dx: i32, dy: i32 },
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory2D {
    pub points: Vec<Vector2<f64>>,
    pub bbox: BBox2D,
}

impl Trajectory2D {
    pub fn new(points: Vec<Vector2<f64>>, bbox: BBox2D) -> Result<Self> {
        let t = Self { points, bbox };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "trajectory needs at least 2 points, got {}",
                self.points.len()
            )));
        }
        if let Some(i) = self.points.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidConfig(format!("trajectory point {i} is not finite")));
        }
        Ok(())
    }

    pub fn validate_bounds(&self, width: u32, height: u32) -> Result<()> {
        self.validate()?;
        for (i, p) in self.points.iter().enumerate() {
            if p.x < 0.0 || p.y < 0.0 || p.x > width as f64 || p.y > height as f64 {
                return Err(Error::InvalidConfig(format!(
                    "trajectory point {i} ({}, {}) lies outside the {width}x{height} image",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory3D {
    /// Object centers, already raised by half the object height.
    pub points: Vec<Vector3<f64>>,
    pub up_axis: UpAxis,
    pub height: f64,
    pub anchors: Vec<Vector2<f64>>,
    pub depth_sources: Vec<DepthSource>,
}

impl Trajectory3D {
    /// Ground contact points (centers with the half-height shift undone).
    pub fn base_points(&self) -> Vec<Vector3<f64>> {
        let shift = self.up_axis.unit() * (self.height / 2.0);
        self.points.iter().map(|p| p - shift).collect()
    }

    /// Points with consecutive exact duplicates removed.
    pub fn deduplicated(&self) -> Vec<Vector3<f64>> {
        dedup_points(&self.points)
    }
}

fn dedup_points(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mut out: Vec<Vector3<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if out.last() != Some(p) {
            out.push(*p);
        }
    }
    out
}

/// Depth at the pixel containing `anchor`, falling back to the nearest valid
/// sample in the surrounding `(2r+1)²` window.
pub fn sample_depth(depth: &DepthMap, anchor: &Vector2<f64>, radius: u32) -> Option<(f64, DepthSource)> {
    let cx = anchor.x.floor();
    let cy = anchor.y.floor();
    if !(cx.is_finite() && cy.is_finite()) {
        return None;
    }
    let (cx, cy) = (cx as i64, cy as i64);
    let at = |x: i64, y: i64| {
        if x < 0 || y < 0 {
            return None;
        }
        depth.get(u32::try_from(x).ok()?, u32::try_from(y).ok()?)
    };
    if let Some(z) = at(cx, cy) {
        let src = match depth.origin {
            DepthOrigin::External => DepthSource::External,
            DepthOrigin::Rendered => DepthSource::Exact,
        };
        return Some((z, src));
    }
    let r = radius as i32;
    let mut offsets: Vec<(i32, i32)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&o| o != (0, 0))
        .collect();
    offsets.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    offsets.into_iter().find_map(|(dx, dy)| {
        at(cx + dx as i64, cy + dy as i64).map(|z| (z, DepthSource::Neighborhood { dx, dy }))
    })
}

/// Unprojects `anchor` at depth `z` and raises it by `height / 2` along `up`.
pub fn lift_anchor(cam: &Camera, anchor: &Vector2<f64>, z: f64, height: f64, up: UpAxis) -> Vector3<f64> {
    cam.unproject(anchor, z) + up.unit() * (height / 2.0)
}

/// Lifts the path point `p` whose bbox is `bbox` to the object's world center.
pub fn lift_point(
    cam: &Camera,
    p: &Vector2<f64>,
    depth: &DepthMap,
    bbox: &BBox2D,
    height: f64,
    opts: &LiftOptions,
) -> Result<Vector3<f64>> {
    lift_point_with_source(cam, p, depth, bbox, height, opts).map(|(v, _)| v)
}

fn lift_point_with_source(
    cam: &Camera,
    p: &Vector2<f64>,
    depth: &DepthMap,
    bbox: &BBox2D,
    height: f64,
    opts: &LiftOptions,
) -> Result<(Vector3<f64>, DepthSource)> {
    let anchor = opts.anchor_rule.anchor(p, bbox);
    let (z, src) = sample_depth(depth, &anchor, opts.search_radius).ok_or(Error::DepthMissing {
        x: anchor.x,
        y: anchor.y,
    })?;
    Ok((lift_anchor(cam, &anchor, z, height, opts.up_axis), src))
}

pub fn lift_trajectory(
    cam: &Camera,
    traj: &Trajectory2D,
    depth: &DepthMap,
    height: f64,
    opts: &LiftOptions,
) -> Result<Trajectory3D> {
    traj.validate()?;
    let mut points = Vec::with_capacity(traj.points.len());
    let mut anchors = Vec::with_capacity(traj.points.len());
    let mut depth_sources = Vec::with_capacity(traj.points.len());
    for (index, p) in traj.points.iter().enumerate() {
        let (v, src) = lift_point_with_source(cam, p, depth, &traj.bbox, height, opts).map_err(|e| match e {
            Error::DepthMissing { .. } => Error::DepthMissingAt { index },
            other => other,
        })?;
        points.push(v);
        anchors.push(opts.anchor_rule.anchor(p, &traj.bbox));
        depth_sources.push(src);
    }
    Ok(Trajectory3D {
        points,
        up_axis: opts.up_axis,
        height,
        anchors,
        depth_sources,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    #[default]
    ConstantSpeed,
    UniformParameter,
}

const ARC_TABLE_LEN: usize = 256;

/// Catmull-Rom spline through a polyline with doubled end knots, plus an
/// arc-length table for constant-speed evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPath {
    points: Vec<Vector3<f64>>,
    /// Cumulative length at spline parameter `k / (len - 1) * segments`.
    arc: Vec<f64>,
}

impl TimedPath {
    pub fn new(points: &[Vector3<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("path has no points".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidConfig(format!("path point {i} is not finite")));
        }
        let points = dedup_points(points);
        let mut path = Self {
            points,
            arc: Vec::new(),
        };
        let segs = path.segments() as f64;
        let mut arc = Vec::with_capacity(ARC_TABLE_LEN);
        let mut prev = path.eval(0.0);
        let mut total = 0.0;
        arc.push(0.0);
        for k in 1..ARC_TABLE_LEN {
            let p = path.eval(segs * k as f64 / (ARC_TABLE_LEN - 1) as f64);
            total += (p - prev).norm();
            arc.push(total);
            prev = p;
        }
        path.arc = arc;
        Ok(path)
    }

    fn segments(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap_or(&0.0)
    }

    pub fn first(&self) -> Vector3<f64> {
        self.points[0]
    }

    pub fn last(&self) -> Vector3<f64> {
        self.points[self.points.len() - 1]
    }

    /// Position at spline parameter `s ∈ [0, segments]`.
    fn eval(&self, s: f64) -> Vector3<f64> {
        let n = self.points.len();
        if n == 1 {
            return self.points[0];
        }
        let segs = n - 1;
        let s = s.clamp(0.0, segs as f64);
        let i = (s.floor() as usize).min(segs - 1);
        let t = s - i as f64;
        let p = |k: isize| self.points[k.clamp(0, n as isize - 1) as usize];
        let i = i as isize;
        let (p0, p1, p2, p3) = (p(i - 1), p(i), p(i + 1), p(i + 2));
        let t2 = t * t;
        let t3 = t2 * t;
        (p1 * 2.0 + (p2 - p0) * t + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2 + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3)
            * 0.5
    }

    /// Position at `u ∈ [0, 1]` with the spline parameter spread uniformly.
    pub fn at_parameter(&self, u: f64) -> Vector3<f64> {
        self.pin(u, self.eval(u * self.segments() as f64))
    }

    /// Position at `u ∈ [0, 1]` of the total arc length.
    pub fn at_arc_fraction(&self, u: f64) -> Vector3<f64> {
        let total = self.length();
        if total <= 0.0 {
            return self.pin(u, self.eval(u * self.segments() as f64));
        }
        let target = u.clamp(0.0, 1.0) * total;
        let k = self.arc.partition_point(|&a| a < target).clamp(1, ARC_TABLE_LEN - 1);
        let (a0, a1) = (self.arc[k - 1], self.arc[k]);
        let frac = if a1 > a0 { (target - a0) / (a1 - a0) } else { 0.0 };
        let s = (k - 1) as f64 + frac;
        self.pin(u, self.eval(self.segments() as f64 * s / (ARC_TABLE_LEN - 1) as f64))
    }

    fn pin(&self, u: f64, p: Vector3<f64>) -> Vector3<f64> {
        if u <= 0.0 {
            self.first()
        } else if u >= 1.0 {
            self.last()
        } else {
            p
        }
    }

    pub fn position(&self, u: f64, mode: ResampleMode) -> Vector3<f64> {
        match mode {
            ResampleMode::ConstantSpeed => self.at_arc_fraction(u),
            ResampleMode::UniformParameter => self.at_parameter(u),
        }
    }

    pub fn sample(&self, frame_count: usize, mode: ResampleMode) -> Result<Vec<Vector3<f64>>> {
        if frame_count < 2 {
            return Err(Error::InvalidConfig(format!(
                "frame_count must be at least 2, got {frame_count}"
            )));
        }
        let last = (frame_count - 1) as f64;
        Ok((0..frame_count).map(|k| self.position(k as f64 / last, mode)).collect())
    }
}

/// One world position per frame along `points`.
pub fn resample_path(points: &[Vector3<f64>], frame_count: usize, mode: ResampleMode) -> Result<Vec<Vector3<f64>>> {
    if frame_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "frame_count must be at least 2, got {frame_count}"
        )));
    }
    TimedPath::new(points)?.sample(frame_count, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Rotation3};

    fn cam256() -> Camera {
        Camera::identity_pose(100.0, 100.0, 128.0, 128.0, 256, 256).unwrap()
    }

    fn constant_depth(w: u32, h: u32, z: f64) -> DepthMap {
        let mut d = DepthMap::invalid(w, h, DepthOrigin::Rendered);
        for y in 0..h {
            for x in 0..w {
                d.set(x, y, z);
            }
        }
        d
    }

    #[test]
    fn lift_anchor_hand_example() {
        let cam = cam256();
        let d = constant_depth(256, 256, 10.0);
        let (z, src) = sample_depth(&d, &Vector2::new(128.0, 128.0), 2).unwrap();
        assert_eq!((z, src), (10.0, DepthSource::Exact));
        let base = lift_anchor(&cam, &Vector2::new(128.0, 128.0), z, 0.0, UpAxis::NegY);
        assert_eq!(base, Vector3::new(0.0, 0.0, 10.0));
        let center = lift_anchor(&cam, &Vector2::new(128.0, 128.0), z, 2.0, UpAxis::NegY);
        assert_eq!(center, Vector3::new(0.0, -1.0, 10.0));
    }

    #[test]
    fn anchor_rules() {
        let b = BBox2D::new(40.0, 10.0).unwrap();
        let p = Vector2::new(100.0, 200.0);
        assert_eq!(AnchorRule::LowerEdgeCenter.anchor(&p, &b), Vector2::new(105.0, 200.0));
        assert_eq!(AnchorRule::HalfHeightOffset.anchor(&p, &b), Vector2::new(120.0, 200.0));
    }

    #[test]
    fn lift_point_uses_lower_edge_center() {
        let cam = cam256();
        let d = constant_depth(256, 256, 5.0);
        let b = BBox2D::new(20.0, 56.0).unwrap();
        let v = lift_point(&cam, &Vector2::new(100.0, 178.0), &d, &b, 0.0, &LiftOptions::default()).unwrap();
        // anchor (128, 178) -> x = 0, y = 50 * 5 / 100
        assert_relative_eq!(v, Vector3::new(0.0, 2.5, 5.0), epsilon = 1e-12);
    }

    #[test]
    fn neighborhood_fallback_prefers_nearest() {
        let mut d = DepthMap::invalid(16, 16, DepthOrigin::Rendered);
        d.set(10, 8, 3.0);
        d.set(8, 9, 4.0);
        let (z, src) = sample_depth(&d, &Vector2::new(8.5, 8.5), 2).unwrap();
        assert_eq!(z, 4.0);
        assert_eq!(src, DepthSource::Neighborhood { dx: 0, dy: 1 });
    }

    #[test]
    fn depth_missing_everywhere_nearby() {
        let cam = cam256();
        let mut d = DepthMap::invalid(256, 256, DepthOrigin::Rendered);
        d.set(131, 128, 1.0);
        let b = BBox2D::new(10.0, 0.5).unwrap();
        let err = lift_point(&cam, &Vector2::new(128.0, 128.0), &d, &b, 1.0, &LiftOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DepthMissing { .. }));
    }

    #[test]
    fn external_depth_is_tagged() {
        let mut d = constant_depth(8, 8, 2.0);
        d.origin = DepthOrigin::External;
        assert_eq!(sample_depth(&d, &Vector2::new(3.2, 3.9), 2).unwrap().1, DepthSource::External);
    }

    /// Ground plane `y = 0` seen from above and behind; depth filled in
    /// analytically from the ray-plane intersection at each pixel center.
    #[test]
    fn trajectory_over_ground_plane_stays_on_plane() {
        let cam = Camera::look_at(
            Vector3::new(0.0, -3.0, -6.0),
            Vector3::new(0.0, 0.0, 4.0),
            -Vector3::y(),
            200.0,
            200.0,
            256,
            256,
        )
        .unwrap();
        let r = cam.world_to_cam_rotation;
        let center = cam.center();
        let mut d = DepthMap::invalid(256, 256, DepthOrigin::Rendered);
        for y in 0..256 {
            for x in 0..256 {
                let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let ray_cam = Vector3::new((px.x - cam.cx) / cam.fx, (px.y - cam.cy) / cam.fy, 1.0);
                let ray_world = r.transpose() * ray_cam;
                let lambda = -center.y / ray_world.y;
                if lambda > 0.0 {
                    d.set(x, y, lambda);
                }
            }
        }
        let b = BBox2D::new(30.0, 1.0).unwrap();
        let pts = [(60.0, 200.0), (110.0, 180.0), (160.0, 190.0), (200.0, 220.0)]
            .into_iter()
            .map(|(x, y)| Vector2::new(x, y + 0.5))
            .collect();
        let traj = Trajectory2D::new(pts, b).unwrap();
        let opts = LiftOptions::default();
        let out = lift_trajectory(&cam, &traj, &d, 1.8, &opts).unwrap();
        assert_eq!(out.points.len(), 4);
        for (i, base) in out.base_points().iter().enumerate() {
            assert!(base.y.abs() < 1e-3, "point {i} off plane: {base}");
            assert!((out.points[i].y + 0.9).abs() < 1e-3);
        }
    }

    #[test]
    fn two_point_trajectory() {
        let cam = cam256();
        let d = constant_depth(256, 256, 4.0);
        let traj = Trajectory2D::new(
            vec![Vector2::new(10.0, 10.0), Vector2::new(200.0, 30.0)],
            BBox2D::new(5.0, 4.0).unwrap(),
        )
        .unwrap();
        let out = lift_trajectory(&cam, &traj, &d, 1.0, &LiftOptions::default()).unwrap();
        assert_eq!(out.points.len(), 2);
        assert_eq!(out.depth_sources, vec![DepthSource::Exact; 2]);
    }

    #[test]
    fn uncovered_column_reports_index() {
        let cam = cam256();
        let mut d = constant_depth(256, 256, 4.0);
        for y in 0..256 {
            for x in 150..170 {
                d.valid[(y * 256 + x) as usize] = false;
            }
        }
        let traj = Trajectory2D::new(
            vec![Vector2::new(10.0, 10.0), Vector2::new(50.0, 30.0), Vector2::new(158.0, 40.0)],
            BBox2D::new(5.0, 4.0).unwrap(),
        )
        .unwrap();
        let err = lift_trajectory(&cam, &traj, &d, 1.0, &LiftOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DepthMissingAt { index: 2 }));
    }

    #[test]
    fn lifting_is_equivariant_under_world_rotation() {
        let cam = Camera::look_at(
            Vector3::new(1.0, -2.0, -5.0),
            Vector3::zeros(),
            -Vector3::y(),
            150.0,
            150.0,
            128,
            128,
        )
        .unwrap();
        let q = Rotation3::from_euler_angles(0.3, -0.7, 1.1).into_inner();
        let rotated = Camera::new(
            cam.fx,
            cam.fy,
            cam.cx,
            cam.cy,
            cam.width,
            cam.height,
            cam.world_to_cam_rotation * q,
            cam.world_to_cam_translation,
        )
        .unwrap();
        let d = constant_depth(128, 128, 6.0);
        let traj = Trajectory2D::new(
            vec![Vector2::new(20.0, 90.0), Vector2::new(64.0, 70.0), Vector2::new(100.0, 100.0)],
            BBox2D::new(10.0, 6.0).unwrap(),
        )
        .unwrap();
        let opts = LiftOptions::default();
        let a = lift_trajectory(&cam, &traj, &d, 0.0, &opts).unwrap();
        let b = lift_trajectory(&rotated, &traj, &d, 0.0, &opts).unwrap();
        let qt: Matrix3<f64> = q.transpose();
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_relative_eq!(qt * pa, *pb, epsilon = 1e-9);
        }
    }

    #[test]
    fn trajectory_validation() {
        let b = BBox2D::new(5.0, 4.0).unwrap();
        assert!(Trajectory2D::new(vec![Vector2::new(1.0, 1.0)], b).is_err());
        assert!(Trajectory2D::new(vec![Vector2::new(1.0, 1.0), Vector2::new(f64::NAN, 1.0)], b).is_err());
        let t = Trajectory2D::new(vec![Vector2::new(1.0, 1.0), Vector2::new(300.0, 1.0)], b).unwrap();
        assert!(t.validate_bounds(256, 256).is_err());
    }

    fn line_distance(p: &Vector3<f64>, a: &Vector3<f64>, dir: &Vector3<f64>) -> f64 {
        (p - a).cross(dir).norm() / dir.norm()
    }

    #[test]
    fn collinear_points_stay_collinear() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        let dir = Vector3::new(0.5, -0.25, 1.0);
        let pts: Vec<_> = (0..5).map(|k| a + dir * k as f64).collect();
        for mode in [ResampleMode::ConstantSpeed, ResampleMode::UniformParameter] {
            let out = resample_path(&pts, 17, mode).unwrap();
            assert_eq!(out.len(), 17);
            for p in &out {
                assert!(line_distance(p, &a, &dir) < 1e-9);
            }
            assert_eq!(out[0], pts[0]);
            assert_eq!(out[16], pts[4]);
        }
    }

    #[test]
    fn two_points_constant_speed_is_evenly_spaced() {
        let a = Vector3::new(0.0, 0.0, 2.0);
        let b = Vector3::new(4.0, 0.0, 2.0);
        let out = resample_path(&[a, b], 5, ResampleMode::ConstantSpeed).unwrap();
        for (k, p) in out.iter().enumerate() {
            assert_relative_eq!(*p, a + (b - a) * (k as f64 / 4.0), epsilon = 1e-3);
        }
        assert_eq!(out[0], a);
        assert_eq!(out[4], b);
    }

    #[test]
    fn right_angle_constant_speed_spacing() {
        let pts = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 2.0)];
        let path = TimedPath::new(&pts).unwrap();
        let samples = path.sample(9, ResampleMode::ConstantSpeed).unwrap();
        // Dense oracle: arc length of the spline up to each sample, measured on
        // a fine uniform-parameter polyline.
        let dense: Vec<_> = (0..=20_000).map(|k| path.at_parameter(k as f64 / 20_000.0)).collect();
        let mut cum = vec![0.0];
        for w in dense.windows(2) {
            cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
        }
        let total = *cum.last().unwrap();
        for (k, s) in samples.iter().enumerate() {
            let nearest = dense
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - s).norm().partial_cmp(&(b.1 - s).norm()).unwrap())
                .unwrap()
                .0;
            let expected = total * k as f64 / 8.0;
            assert!((cum[nearest] - expected).abs() <= 0.01 * total, "sample {k}");
        }
    }

    #[test]
    fn static_path_is_constant() {
        let p = Vector3::new(1.0, 1.0, 1.0);
        let out = resample_path(&[p, p, p], 4, ResampleMode::ConstantSpeed).unwrap();
        assert_eq!(out, vec![p; 4]);
    }

    #[test]
    fn too_few_frames() {
        let p = Vector3::new(1.0, 1.0, 1.0);
        assert!(resample_path(&[p, p * 2.0], 1, ResampleMode::UniformParameter).is_err());
    }
}
