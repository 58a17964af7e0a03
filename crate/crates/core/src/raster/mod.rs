//! Tile-based software splatting.
//!
//! Every splat is evaluated as `σ̂ = min(α · exp(−½ dᵀ Σ′⁻¹ d), max_alpha)` inside
//! its 3-sigma ellipse and zero outside, and splats are composited front to
//! back: `c = Σ ĉ_k σ̂_k Π_{j<k}(1 − σ̂_j) + T · background`.

mod image;
pub mod splat;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

pub use self::image::{decode_srgb, encode_srgb, DepthMap, DepthOrigin, Framebuffer};
pub use self::splat::{project_gaussian, project_gaussian_with, Splat2D, SUPPORT_MAHALANOBIS_SQ};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::transform::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub tile_size: u32,
    /// Added to both diagonal entries of every screen-space covariance (px²).
    pub low_pass: f64,
    /// Upper clamp on per-splat σ̂.
    pub max_alpha: f64,
    /// Per-pixel compositing stops once transmittance drops below this.
    pub min_transmittance: f64,
    pub near_plane: f64,
    /// Depth pixels with less accumulated alpha are invalid.
    pub min_depth_alpha: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            tile_size: 16,
            low_pass: 0.3,
            max_alpha: 0.99,
            min_transmittance: 1e-4,
            near_plane: 0.01,
            min_depth_alpha: 0.5,
        }
    }
}

/// One cloud placed in the world. Layers flagged `in_mask` contribute to
/// [`Framebuffer::mask`].
#[derive(Debug, Clone, Copy)]
pub struct Layer<'a> {
    pub cloud: &'a GaussianCloud,
    pub transform: RigidTransform,
    pub in_mask: bool,
}

impl<'a> Layer<'a> {
    pub fn new(cloud: &'a GaussianCloud, transform: RigidTransform) -> Self {
        Self {
            cloud,
            transform,
            in_mask: false,
        }
    }

    pub fn untransformed(cloud: &'a GaussianCloud) -> Self {
        Self::new(cloud, RigidTransform::identity())
    }

    pub fn masked(mut self) -> Self {
        self.in_mask = true;
        self
    }
}

/// Color, alpha and depth from one compositing pass.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: Framebuffer,
    pub depth: DepthMap,
}

/// Screen-space splat packed for the inner loop.
#[derive(Debug, Clone, Copy)]
struct Packed {
    mx: f64,
    my: f64,
    ca: f64,
    cb: f64,
    cc: f64,
    opacity: f64,
    color: [f64; 3],
    depth: f64,
    mask: f64,
    index: u32,
    px0: u32,
    px1: u32,
    py0: u32,
    py1: u32,
}

impl Packed {
    #[inline(always)]
    fn sigma(&self, x: f64, y: f64, max_alpha: f64) -> f64 {
        let dx = x - self.mx;
        let dy = y - self.my;
        let m2 = self.ca * dx * dx + 2.0 * self.cb * dx * dy + self.cc * dy * dy;
        if m2 > SUPPORT_MAHALANOBIS_SQ {
            return 0.0;
        }
        (self.opacity * (-0.5 * m2).exp()).min(max_alpha)
    }
}

#[derive(Debug, Clone, Copy)]
struct Accum {
    rgb: [f64; 3],
    depth: f64,
    weight: f64,
    mask: f64,
    t: f64,
}

impl Accum {
    const EMPTY: Accum = Accum {
        rgb: [0.0; 3],
        depth: 0.0,
        weight: 0.0,
        mask: 0.0,
        t: 1.0,
    };

    #[inline(always)]
    fn blend(&mut self, s: &Packed, sigma: f64) {
        let w = sigma * self.t;
        self.rgb[0] += s.color[0] * w;
        self.rgb[1] += s.color[1] * w;
        self.rgb[2] += s.color[2] * w;
        self.depth += s.depth * w;
        self.weight += w;
        self.mask += s.mask * w;
        self.t *= 1.0 - sigma;
    }
}

fn pixel_range(center: f64, radius: f64, size: u32) -> Option<(u32, u32)> {
    // pixel i is sampled at i + 0.5
    let lo = (center - radius - 0.5).ceil().max(0.0);
    let hi = (center + radius - 0.5).floor().min(size as f64 - 1.0);
    (lo <= hi).then_some((lo as u32, hi as u32))
}

fn pack(cam: &Camera, layers: &[Layer<'_>], settings: &RenderSettings) -> Vec<Packed> {
    let mut jobs: Vec<(usize, usize)> = Vec::new();
    for (li, layer) in layers.iter().enumerate() {
        jobs.extend((0..layer.cloud.len()).map(|gi| (li, gi)));
    }
    // per-layer: world-from-local linear part and its scale
    let linear: Vec<(Matrix3<f64>, f64)> = layers
        .iter()
        .map(|l| (*l.transform.rotation(), l.transform.uniform_scale()))
        .collect();
    jobs.par_iter()
        .enumerate()
        .filter_map(|(index, &(li, gi))| {
            let layer = &layers[li];
            let g = &layer.cloud.gaussians[gi];
            let (rot, s) = linear[li];
            let (mean, cov) = if layer.transform.is_identity() {
                (g.position, g.covariance())
            } else {
                (layer.transform.apply_point(&g.position), (rot * g.covariance() * rot.transpose()) * (s * s))
            };
            let splat = splat::project_world(cam, &mean, &cov, g.color, g.opacity(), settings)?;
            let (rx, ry) = splat.radius();
            let (px0, px1) = pixel_range(splat.mean_px.x, rx, cam.width)?;
            let (py0, py1) = pixel_range(splat.mean_px.y, ry, cam.height)?;
            let (ca, cb, cc) = splat.conic();
            Some(Packed {
                mx: splat.mean_px.x,
                my: splat.mean_px.y,
                ca,
                cb,
                cc,
                opacity: splat.base_opacity,
                color: [splat.color.x, splat.color.y, splat.color.z],
                depth: splat.depth,
                mask: if layer.in_mask { 1.0 } else { 0.0 },
                index: index as u32,
                px0,
                px1,
                py0,
                py1,
            })
        })
        .collect()
}

fn check_camera(cam: &Camera) -> Result<()> {
    cam.validate().map_err(|e| Error::InvalidConfig(e.to_string()))
}

struct Pixel {
    rgb: [f64; 3],
    alpha: f64,
    mask: f64,
    depth: Option<f64>,
}

fn resolve(acc: &Accum, background: &Vector3<f64>, settings: &RenderSettings) -> Pixel {
    let alpha = (1.0 - acc.t).clamp(0.0, 1.0);
    let rgb = [
        (acc.rgb[0] + acc.t * background.x).clamp(0.0, 1.0),
        (acc.rgb[1] + acc.t * background.y).clamp(0.0, 1.0),
        (acc.rgb[2] + acc.t * background.z).clamp(0.0, 1.0),
    ];
    let depth = (alpha >= settings.min_depth_alpha && acc.weight > 0.0).then(|| acc.depth / acc.weight);
    Pixel {
        rgb,
        alpha,
        mask: acc.mask.clamp(0.0, 1.0),
        depth,
    }
}

fn assemble(width: u32, height: u32, pixels: impl Iterator<Item = (usize, Pixel)>, depth_origin: DepthOrigin) -> RenderOutput {
    let n = (width * height) as usize;
    let mut image = Framebuffer::new(width, height);
    let mut depth = DepthMap::invalid(width, height, depth_origin);
    debug_assert_eq!(image.alpha.len(), n);
    for (i, p) in pixels {
        image.rgb[3 * i..3 * i + 3].copy_from_slice(&p.rgb);
        image.alpha[i] = p.alpha;
        image.mask[i] = p.mask;
        if let Some(z) = p.depth {
            depth.values[i] = z;
            depth.valid[i] = true;
        }
    }
    RenderOutput { image, depth }
}

#[derive(Debug, Clone, Default)]
pub struct Renderer {
    pub settings: RenderSettings,
}

impl Renderer {
    pub fn new(settings: RenderSettings) -> Self {
        Self { settings }
    }

    /// Tiled, data-parallel render with early termination.
    pub fn render(&self, cam: &Camera, layers: &[Layer<'_>], background: Vector3<f64>) -> Result<RenderOutput> {
        check_camera(cam)?;
        let s = &self.settings;
        if s.tile_size == 0 {
            return Err(Error::InvalidConfig("tile size must be positive".into()));
        }
        let mut splats = pack(cam, layers, s);
        // stable on input index for equal depths
        splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

        let ts = s.tile_size;
        let tiles_x = cam.width.div_ceil(ts);
        let tiles_y = cam.height.div_ceil(ts);
        let n_tiles = (tiles_x * tiles_y) as usize;

        let mut counts = vec![0u32; n_tiles + 1];
        for sp in &splats {
            for ty in sp.py0 / ts..=sp.py1 / ts {
                for tx in sp.px0 / ts..=sp.px1 / ts {
                    counts[(ty * tiles_x + tx) as usize + 1] += 1;
                }
            }
        }
        for i in 0..n_tiles {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut entries = vec![0u32; counts[n_tiles] as usize];
        for (si, sp) in splats.iter().enumerate() {
            for ty in sp.py0 / ts..=sp.py1 / ts {
                for tx in sp.px0 / ts..=sp.px1 / ts {
                    let slot = &mut cursor[(ty * tiles_x + tx) as usize];
                    entries[*slot as usize] = si as u32;
                    *slot += 1;
                }
            }
        }

        let tiles: Vec<Vec<(usize, Pixel)>> = (0..n_tiles)
            .into_par_iter()
            .map(|tile| {
                let list = &entries[counts[tile] as usize..counts[tile + 1] as usize];
                let tx = tile as u32 % tiles_x;
                let ty = tile as u32 / tiles_x;
                let x0 = tx * ts;
                let y0 = ty * ts;
                let x1 = (x0 + ts).min(cam.width);
                let y1 = (y0 + ts).min(cam.height);
                let w = (x1 - x0) as usize;
                let mut acc = vec![Accum::EMPTY; w * (y1 - y0) as usize];
                // splat-major within the tile: each pixel still sees the depth order
                for &si in list {
                    let sp = &splats[si as usize];
                    for y in sp.py0.max(y0)..=sp.py1.min(y1 - 1) {
                        let fy = y as f64 + 0.5;
                        let base = (y - y0) as usize * w;
                        for x in sp.px0.max(x0)..=sp.px1.min(x1 - 1) {
                            let a = &mut acc[base + (x - x0) as usize];
                            if a.t < s.min_transmittance {
                                continue;
                            }
                            let sigma = sp.sigma(x as f64 + 0.5, fy, s.max_alpha);
                            if sigma > 0.0 {
                                a.blend(sp, sigma);
                            }
                        }
                    }
                }
                let mut out = Vec::with_capacity(acc.len());
                for (i, a) in acc.iter().enumerate() {
                    let (x, y) = (x0 + (i % w) as u32, y0 + (i / w) as u32);
                    out.push(((y * cam.width + x) as usize, resolve(a, &background, s)));
                }
                out
            })
            .collect();
        Ok(assemble(cam.width, cam.height, tiles.into_iter().flatten(), DepthOrigin::Rendered))
    }

    pub fn rasterize(&self, cam: &Camera, layers: &[Layer<'_>], background: Vector3<f64>) -> Result<Framebuffer> {
        Ok(self.render(cam, layers, background)?.image)
    }

    pub fn render_depth(&self, cam: &Camera, layers: &[Layer<'_>]) -> Result<DepthMap> {
        Ok(self.render(cam, layers, Vector3::zeros())?.depth)
    }

    /// Brute-force oracle: every pixel evaluates every splat, sorts its own
    /// contributions by (depth, input index) and composites all of them.
    pub fn render_reference(&self, cam: &Camera, layers: &[Layer<'_>], background: Vector3<f64>) -> Result<RenderOutput> {
        check_camera(cam)?;
        let s = &self.settings;
        let splats = pack(cam, layers, s);
        let w = cam.width;
        let rows: Vec<Vec<(usize, Pixel)>> = (0..cam.height)
            .into_par_iter()
            .map(|y| {
                let fy = y as f64 + 0.5;
                let mut hits: Vec<(f64, u32, f64, usize)> = Vec::new();
                (0..w)
                    .map(|x| {
                        let fx = x as f64 + 0.5;
                        hits.clear();
                        for (k, sp) in splats.iter().enumerate() {
                            let sigma = sp.sigma(fx, fy, s.max_alpha);
                            if sigma > 0.0 {
                                hits.push((sp.depth, sp.index, sigma, k));
                            }
                        }
                        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                        let mut acc = Accum::EMPTY;
                        for &(_, _, sigma, k) in hits.iter() {
                            acc.blend(&splats[k], sigma);
                        }
                        ((y * w + x) as usize, resolve(&acc, &background, s))
                    })
                    .collect()
            })
            .collect();
        Ok(assemble(cam.width, cam.height, rows.into_iter().flatten(), DepthOrigin::Rendered))
    }

    pub fn rasterize_reference(&self, cam: &Camera, layers: &[Layer<'_>], background: Vector3<f64>) -> Result<Framebuffer> {
        Ok(self.render_reference(cam, layers, background)?.image)
    }
}

/// Tiled render with default settings.
pub fn rasterize(cam: &Camera, layers: &[Layer<'_>], background: Vector3<f64>) -> Result<Framebuffer> {
    Renderer::default().rasterize(cam, layers, background)
}

/// Alpha-weighted expected depth with default settings.
pub fn render_depth(cam: &Camera, layers: &[Layer<'_>]) -> Result<DepthMap> {
    Renderer::default().render_depth(cam, layers)
}

/// Brute-force oracle render with default settings.
pub fn rasterize_reference(cam: &Camera, layers: &[Layer<'_>], background: Vector3<f64>) -> Result<Framebuffer> {
    Renderer::default().rasterize_reference(cam, layers, background)
}
