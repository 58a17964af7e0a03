//! Score providers: sources of the per-pixel guidance residual.

use crate::error::{Error, Result};
use crate::raster::Framebuffer;

/// Image-space guidance for one iteration. `residual` plays the role of
/// `w(t)(ε̂ − ε)` on the RGB channels; `mask_residual`, when present, acts on
/// the coverage of the refined object.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceSample {
    pub noise_level: f64,
    pub weight: f64,
    pub width: u32,
    pub height: u32,
    pub residual: Vec<f64>,
    pub mask_residual: Option<Vec<f64>>,
}

impl GuidanceSample {
    pub fn zero(width: u32, height: u32, noise_level: f64) -> Self {
        Self {
            noise_level,
            weight: 1.0,
            width,
            height,
            residual: vec![0.0; 3 * (width * height) as usize],
            mask_residual: None,
        }
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        let n = (width * height) as usize;
        if self.width != width || self.height != height || self.residual.len() != 3 * n {
            return Err(Error::Provider(format!(
                "residual is {}x{} ({} values) but the render is {width}x{height}",
                self.width,
                self.height,
                self.residual.len()
            )));
        }
        if self.mask_residual.as_ref().is_some_and(|m| m.len() != n) {
            return Err(Error::Provider("mask residual size does not match the render".into()));
        }
        let finite = self.residual.iter().chain(self.mask_residual.iter().flatten()).all(|v| v.is_finite());
        if !finite || !self.weight.is_finite() {
            return Err(Error::Provider("residual contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.weight == 0.0
            || (self.residual.iter().all(|&v| v == 0.0)
                && self.mask_residual.iter().flatten().all(|&v| v == 0.0))
    }

    /// `w · Σ ⟨residual, plus − minus⟩` over color and mask channels.
    pub fn contract(&self, plus: &Framebuffer, minus: &Framebuffer) -> f64 {
        let rgb: f64 = self
            .residual
            .iter()
            .zip(plus.rgb.iter().zip(&minus.rgb))
            .map(|(r, (a, b))| r * (a - b))
            .sum();
        let mask: f64 = self
            .mask_residual
            .as_ref()
            .map(|m| m.iter().zip(plus.mask.iter().zip(&minus.mask)).map(|(r, (a, b))| r * (a - b)).sum())
            .unwrap_or(0.0);
        self.weight * (rgb + mask)
    }
}

/// Contract between the refinement loop and whatever scores a render.
/// Implementations must be deterministic for a given seed.
pub trait ScoreProvider: Send + Sync {
    fn name(&self) -> &str;

    fn guidance(&self, image: &Framebuffer, prompt: &str, noise_level: f64, seed: u64) -> Result<GuidanceSample>;

    /// True when every sample is zero regardless of the image, so callers
    /// may skip rendering.
    fn is_null(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroProvider;

impl ScoreProvider for ZeroProvider {
    fn name(&self) -> &str {
        "zero"
    }

    fn guidance(&self, image: &Framebuffer, _prompt: &str, noise_level: f64, _seed: u64) -> Result<GuidanceSample> {
        Ok(GuidanceSample::zero(image.width, image.height, noise_level))
    }

    fn is_null(&self) -> bool {
        true
    }
}

/// Quadratic image loss `gain · Σ ‖x − target‖²`; residual `2 · gain · (x − target)`.
#[derive(Debug, Clone)]
pub struct PullToTargetProvider {
    pub target: Framebuffer,
    pub gain: f64,
}

impl PullToTargetProvider {
    pub fn new(target: Framebuffer) -> Self {
        Self { target, gain: 1.0 }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn loss(&self, image: &Framebuffer) -> f64 {
        self.gain * image.rgb.iter().zip(&self.target.rgb).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }
}

impl ScoreProvider for PullToTargetProvider {
    fn name(&self) -> &str {
        "pull"
    }

    fn guidance(&self, image: &Framebuffer, _prompt: &str, noise_level: f64, _seed: u64) -> Result<GuidanceSample> {
        if !image.same_shape(&self.target) {
            return Err(Error::Provider("target image size differs from the render".into()));
        }
        let residual = image
            .rgb
            .iter()
            .zip(&self.target.rgb)
            .map(|(a, b)| 2.0 * self.gain * (a - b))
            .collect();
        Ok(GuidanceSample {
            noise_level,
            weight: 1.0,
            width: image.width,
            height: image.height,
            residual,
            mask_residual: None,
        })
    }
}

/// Matches the refined object's coverage to a target silhouette:
/// loss `gain · Σ (mask − target)²`.
#[derive(Debug, Clone)]
pub struct SilhouetteProvider {
    pub width: u32,
    pub height: u32,
    pub target: Vec<f64>,
    pub gain: f64,
}

impl SilhouetteProvider {
    pub fn new(width: u32, height: u32, target: Vec<f64>) -> Result<Self> {
        if target.len() != (width * height) as usize {
            return Err(Error::Provider("silhouette size mismatch".into()));
        }
        Ok(Self {
            width,
            height,
            target,
            gain: 1.0,
        })
    }

    /// Filled axis-aligned rectangle `[x0, x1) × [y0, y1)` in pixels.
    pub fn rectangle(width: u32, height: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        let target = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                if cx >= x0 && cx < x1 && cy >= y0 && cy < y1 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            width,
            height,
            target,
            gain: 1.0,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }
}

impl ScoreProvider for SilhouetteProvider {
    fn name(&self) -> &str {
        "silhouette"
    }

    fn guidance(&self, image: &Framebuffer, _prompt: &str, noise_level: f64, _seed: u64) -> Result<GuidanceSample> {
        if image.width != self.width || image.height != self.height {
            return Err(Error::Provider("silhouette size differs from the render".into()));
        }
        let mask = image.mask.iter().zip(&self.target).map(|(m, t)| 2.0 * self.gain * (m - t)).collect();
        let mut s = GuidanceSample::zero(image.width, image.height, noise_level);
        s.mask_residual = Some(mask);
        Ok(s)
    }
}

/// Penalizes object coverage below a horizon row: loss `gain · ½ Σ_{y ≥ row} mask²`.
#[derive(Debug, Clone, Copy)]
pub struct GroundContactProvider {
    pub horizon_row: u32,
    pub gain: f64,
}

impl GroundContactProvider {
    pub fn new(horizon_row: u32) -> Self {
        Self { horizon_row, gain: 1.0 }
    }
}

impl ScoreProvider for GroundContactProvider {
    fn name(&self) -> &str {
        "ground"
    }

    fn guidance(&self, image: &Framebuffer, _prompt: &str, noise_level: f64, _seed: u64) -> Result<GuidanceSample> {
        let w = image.width as usize;
        let row = self.horizon_row as usize;
        let mask = image
            .mask
            .iter()
            .enumerate()
            .map(|(i, &m)| if i / w >= row { self.gain * m } else { 0.0 })
            .collect();
        let mut s = GuidanceSample::zero(image.width, image.height, noise_level);
        s.mask_residual = Some(mask);
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fb(w: u32, h: u32, v: f64) -> Framebuffer {
        let mut f = Framebuffer::new(w, h);
        f.rgb.iter_mut().for_each(|c| *c = v);
        f.mask.iter_mut().for_each(|c| *c = v);
        f
    }

    #[test]
    fn zero_provider_is_zero() {
        let s = ZeroProvider.guidance(&fb(4, 3, 0.5), "", 0.3, 7).unwrap();
        assert!(s.is_zero());
        s.validate(4, 3).unwrap();
        assert!(s.validate(3, 4).is_err());
    }

    #[test]
    fn pull_residual_is_twice_difference() {
        let p = PullToTargetProvider::new(fb(2, 2, 0.25));
        let s = p.guidance(&fb(2, 2, 1.0), "", 0.5, 0).unwrap();
        assert!(s.residual.iter().all(|&r| r == 1.5));
        assert_eq!(p.loss(&fb(2, 2, 1.0)), 12.0 * 0.5625);
    }

    #[test]
    fn contract_sums_color_and_mask() {
        let mut s = GuidanceSample::zero(1, 1, 0.5);
        s.residual = vec![1.0, 2.0, 3.0];
        s.mask_residual = Some(vec![4.0]);
        let v = s.contract(&fb(1, 1, 1.0), &fb(1, 1, 0.5));
        assert_eq!(v, 0.5 * 10.0);
    }

    #[test]
    fn silhouette_rectangle() {
        let p = SilhouetteProvider::rectangle(4, 4, 1.0, 1.0, 3.0, 2.0);
        assert_eq!(p.target.iter().sum::<f64>(), 2.0);
        assert_eq!(p.target[5], 1.0);
        let s = p.guidance(&fb(4, 4, 0.0), "", 0.5, 0).unwrap();
        assert_eq!(s.mask_residual.unwrap()[5], -2.0);
    }

    #[test]
    fn ground_contact_only_below_horizon() {
        let s = GroundContactProvider::new(2).guidance(&fb(3, 4, 1.0), "", 0.5, 0).unwrap();
        let m = s.mask_residual.unwrap();
        assert!(m[..6].iter().all(|&v| v == 0.0));
        assert!(m[6..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn non_finite_residual_is_rejected() {
        let mut s = GuidanceSample::zero(1, 1, 0.5);
        s.residual[1] = f64::NAN;
        assert!(s.validate(1, 1).is_err());
    }
}
