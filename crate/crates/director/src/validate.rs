//! Guards against unusable director answers: boxes off the image, stuttering
//! or collapsed paths, and paths that float away from their endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{DirectorError, Result};
use crate::protocol::{EndpointEstimate, PathEstimate, ScaleEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    ScaleClamped { from: [f64; 2], to: [f64; 2] },
    EndpointClamped { which: String, from: [f64; 2], to: [f64; 2] },
    EndpointsRequeried,
    PointClamped { index: usize, from: [f64; 2], to: [f64; 2] },
    DuplicateRemoved { index: usize },
    EndpointInserted { which: String },
}

/// Image rectangle in pixels; valid coordinates are `[0, w−1] × [0, h−1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub width: u32,
    pub height: u32,
}

impl Bounds {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0].clamp(0.0, (self.width.max(1) - 1) as f64),
            p[1].clamp(0.0, (self.height.max(1) - 1) as f64),
        ]
    }
}

pub fn clamp_scale(s: ScaleEstimate, bounds: Bounds, flags: &mut Vec<Flag>) -> ScaleEstimate {
    let out = ScaleEstimate {
        height: s.height.min(bounds.height as f64),
        width: s.width.min(bounds.width as f64),
    };
    if out != s {
        flags.push(Flag::ScaleClamped {
            from: [s.height, s.width],
            to: [out.height, out.width],
        });
    }
    out
}

pub fn clamp_endpoints(e: EndpointEstimate, bounds: Bounds, flags: &mut Vec<Flag>) -> EndpointEstimate {
    let mut clamp = |which: &str, p: [f64; 2]| {
        let q = bounds.clamp(p);
        if q != p {
            flags.push(Flag::EndpointClamped {
                which: which.into(),
                from: p,
                to: q,
            });
        }
        q
    };
    EndpointEstimate {
        start: clamp("start", e.start),
        end: clamp("end", e.end),
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Clamps, removes consecutive duplicates, and checks that the path begins
/// and ends within `2 · max(H, W)` of its endpoints.
pub fn validate_trajectory(
    path: &PathEstimate,
    bounds: Bounds,
    scale: ScaleEstimate,
    endpoints: EndpointEstimate,
    flags: &mut Vec<Flag>,
) -> Result<PathEstimate> {
    let mut points: Vec<[f64; 2]> = Vec::with_capacity(path.len());
    for (index, &p) in path.points.iter().enumerate() {
        let q = bounds.clamp(p);
        if q != p {
            flags.push(Flag::PointClamped { index, from: p, to: q });
        }
        if points.last() == Some(&q) {
            flags.push(Flag::DuplicateRemoved { index });
            continue;
        }
        points.push(q);
    }
    if points.len() < 2 {
        return Err(DirectorError::Validation(format!(
            "trajectory-degenerate: {} distinct point(s) survive validation",
            points.len()
        )));
    }
    let reach = 2.0 * scale.max_side();
    let first = points[0];
    let last = points[points.len() - 1];
    for (which, p, anchor) in [("start", first, endpoints.start), ("end", last, endpoints.end)] {
        let d = dist(p, anchor);
        if d > reach {
            return Err(DirectorError::Validation(format!(
                "floating path: {which} point is {d:.1} px from the {which} endpoint (limit {reach:.1})"
            )));
        }
    }
    Ok(PathEstimate { points })
}

/// The validated path framed by its endpoints, so the object departs from
/// `L_s` and arrives at `L_e`.
pub fn framed_trajectory(path: &PathEstimate, endpoints: EndpointEstimate, flags: &mut Vec<Flag>) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(path.len() + 2);
    if path.points.first() != Some(&endpoints.start) {
        flags.push(Flag::EndpointInserted { which: "start".into() });
        out.push(endpoints.start);
    }
    out.extend_from_slice(&path.points);
    if path.points.last() != Some(&endpoints.end) {
        flags.push(Flag::EndpointInserted { which: "end".into() });
        out.push(endpoints.end);
    }
    out.dedup();
    out
}
