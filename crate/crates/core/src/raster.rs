//! Tile-based alpha-compositing renderer and its exact backward pass.
//!
//! Forward, per pixel, front to back:
//! `C = Σ cᵢ αᵢ Tᵢ + T_final · background`, with `αᵢ = min(aᵢ G2Dᵢ(x), 0.99)`,
//! splats with `αᵢ < 1/255` skipped and blending stopped before `T` would drop
//! below `1e-4`. The backward pass walks each pixel's list back to front,
//! recovering `Tᵢ` from the saved terminal transmittance.

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::math::sh::SH_COEFFS;
use crate::math::{
    build_covariance, build_covariance_backward, conic_to_cov_grad, eval_sh, eval_sh_backward,
    inverse_2x2, project_gaussian, project_gaussian_backward, ProjectedGaussian,
};
use crate::model::{impl_param_access, sigmoid, Camera, GaussianModel, ImageBuffer, Quat};

pub const ALPHA_MAX: f64 = 0.99;
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
pub const TRANSMITTANCE_MIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub tile_size: usize,
    pub background: [f64; 3],
    pub execution: Execution,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings { tile_size: 16, background: [0.0; 3], execution: Execution::default() }
    }
}

impl From<&TrainConfig> for RenderSettings {
    fn from(cfg: &TrainConfig) -> Self {
        RenderSettings { tile_size: cfg.tile_size, background: cfg.background_color, execution: Execution::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileEntry {
    pub gaussian: u32,
    pub depth: f64,
}

/// Per-tile depth-sorted splat lists plus the per-pixel state the backward
/// pass needs.
#[derive(Clone, Debug, PartialEq)]
pub struct TileBinning {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub width: usize,
    pub height: usize,
    /// Row-major over tiles; each list sorted by depth, then Gaussian index.
    pub tiles: Vec<Vec<TileEntry>>,
    /// Transmittance left after blending, per pixel (row-major).
    pub final_transmittance: Vec<f64>,
    /// Number of leading tile-list entries each pixel walked through.
    pub contrib_count: Vec<u32>,
    pub num_gaussians: usize,
}

impl TileBinning {
    pub fn tile(&self, tx: usize, ty: usize) -> &[TileEntry] {
        &self.tiles[ty * self.tiles_x + tx]
    }
}

fn bin(
    items: impl Iterator<Item = (u32, Vector2<f64>, Vector2<f64>, f64)>,
    width: usize,
    height: usize,
    tile_size: usize,
    num_gaussians: usize,
) -> TileBinning {
    let tiles_x = width.div_ceil(tile_size).max(1);
    let tiles_y = height.div_ceil(tile_size).max(1);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    let ts = tile_size as f64;
    let clamp = |v: f64, n: usize| (v / ts).floor().clamp(0.0, (n - 1) as f64) as usize;
    for (index, mean, ext, depth) in items {
        let (x0, x1) = (clamp(mean.x - ext.x, tiles_x), clamp(mean.x + ext.x, tiles_x));
        let (y0, y1) = (clamp(mean.y - ext.y, tiles_y), clamp(mean.y + ext.y, tiles_y));
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                tiles[ty * tiles_x + tx].push(TileEntry { gaussian: index, depth });
            }
        }
    }
    for list in &mut tiles {
        list.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.gaussian.cmp(&b.gaussian)));
    }
    TileBinning {
        tile_size,
        tiles_x,
        tiles_y,
        width,
        height,
        tiles,
        final_transmittance: vec![1.0; width * height],
        contrib_count: vec![0; width * height],
        num_gaussians,
    }
}

/// Assigns each projected Gaussian (indexed by position) to every tile its 3σ
/// box overlaps and sorts each tile front to back.
pub fn bin_and_sort(projected: &[ProjectedGaussian], cam: &Camera, tile_size: usize) -> TileBinning {
    bin(
        projected.iter().enumerate().map(|(i, g)| (i as u32, g.mean2d, g.footprint(), g.depth)),
        cam.width as usize,
        cam.height as usize,
        tile_size,
        projected.len(),
    )
}

/// Screen-space data of one visible Gaussian.
#[derive(Clone, Debug)]
struct Splat {
    proj: ProjectedGaussian,
    /// Inverse 2D covariance.
    conic: Matrix2<f64>,
    opacity: f64,
    /// Unit direction from the camera centre to the mean, and the distance.
    dir: Vector3<f64>,
    dist: f64,
}

fn prepare(model: &GaussianModel, cam: &Camera, exec: Execution) -> Result<Vec<Option<Splat>>> {
    let center = cam.center();
    let splats = exec.map_range(model.len(), |i| -> Result<Option<Splat>> {
        let mean = Vector3::from(model.means[i]);
        let cov3d = build_covariance(&model.log_scales[i], &model.rotations[i])?;
        let Some(mut proj) = project_gaussian(&mean, &cov3d, cam) else {
            return Ok(None);
        };
        let v = mean - center;
        let dist = v.norm();
        let dir = v / dist;
        proj.view_color = eval_sh(&model.sh_coeffs[i], &dir, model.sh_degree_active);
        Ok(Some(Splat { conic: inverse_2x2(&proj.cov2d), opacity: sigmoid(model.opacity_logits[i]), proj, dir, dist }))
    });
    splats.into_iter().collect()
}

fn bin_splats(splats: &[Option<Splat>], cam: &Camera, tile_size: usize) -> TileBinning {
    bin(
        splats
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (i as u32, s.proj.mean2d, s.proj.footprint(), s.proj.depth))),
        cam.width as usize,
        cam.height as usize,
        tile_size,
        splats.len(),
    )
}

/// Per-tile copy of the fields the blending loops read, kept contiguous so
/// the inner loops stay in cache.
#[derive(Clone, Copy, Debug)]
struct TileSplat {
    mean: [f64; 2],
    /// Conic entries `Q₀₀`, `Q₀₁ + Q₁₀`, `Q₁₁`.
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    /// Exponents below this give `α < ALPHA_MIN` with a safety margin, so
    /// `exp` can be skipped without changing which Gaussians blend.
    power_cutoff: f64,
}

impl TileSplat {
    fn new(s: &Splat) -> Self {
        let q = &s.conic;
        TileSplat {
            mean: [s.proj.mean2d.x, s.proj.mean2d.y],
            conic: [q[(0, 0)], q[(0, 1)] + q[(1, 0)], q[(1, 1)]],
            opacity: s.opacity,
            color: s.proj.view_color,
            power_cutoff: (ALPHA_MIN / s.opacity).ln() - 1e-6,
        }
    }

    /// `(G, dx, dy)` at the pixel centre `(px, py)`, or `None` when `α` is
    /// certainly below [`ALPHA_MIN`].
    #[inline]
    fn eval(&self, px: f64, py: f64) -> Option<(f64, f64, f64)> {
        let dx = px - self.mean[0];
        let dy = py - self.mean[1];
        let [a, b, c] = self.conic;
        let power = -0.5 * (a * dx * dx + b * dx * dy + c * dy * dy);
        if power < self.power_cutoff {
            return None;
        }
        Some((power.exp(), dx, dy))
    }
}

fn gather_tile(list: &[TileEntry], splats: &[Option<Splat>]) -> Vec<TileSplat> {
    list.iter().map(|e| TileSplat::new(splats[e.gaussian as usize].as_ref().expect("binned splat"))).collect()
}

/// Pixel rectangle `(x0, y0, x1, y1)` (exclusive end) of tile `t`.
fn tile_rect(b: &TileBinning, t: usize) -> (usize, usize, usize, usize) {
    let (tx, ty) = (t % b.tiles_x, t / b.tiles_x);
    let x0 = tx * b.tile_size;
    let y0 = ty * b.tile_size;
    (x0, y0, (x0 + b.tile_size).min(b.width), (y0 + b.tile_size).min(b.height))
}

struct TileOutput {
    color: Vec<[f64; 3]>,
    transmittance: Vec<f64>,
    count: Vec<u32>,
}

fn render_tile(b: &TileBinning, t: usize, splats: &[Option<Splat>], background: &[f64; 3]) -> TileOutput {
    let (x0, y0, x1, y1) = tile_rect(b, t);
    let n = (x1 - x0) * (y1 - y0);
    let mut out = TileOutput { color: Vec::with_capacity(n), transmittance: Vec::with_capacity(n), count: Vec::with_capacity(n) };
    let list = gather_tile(&b.tiles[t], splats);
    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t_acc = 1.0;
            let mut c = [0.0; 3];
            let mut count = 0u32;
            for (n, s) in list.iter().enumerate() {
                let Some((g, _, _)) = s.eval(px, py) else { continue };
                let alpha = (s.opacity * g).min(ALPHA_MAX);
                if alpha < ALPHA_MIN {
                    continue;
                }
                let next = t_acc * (1.0 - alpha);
                if next < TRANSMITTANCE_MIN {
                    break;
                }
                let w = alpha * t_acc;
                for ch in 0..3 {
                    c[ch] += s.color[ch] * w;
                }
                t_acc = next;
                count = n as u32 + 1;
            }
            out.color.push([0, 1, 2].map(|ch| c[ch] + t_acc * background[ch]));
            out.transmittance.push(t_acc);
            out.count.push(count);
        }
    }
    out
}

/// Renders `model` from `cam`; also returns the binning needed by [`render_backward`].
pub fn render_forward(
    model: &GaussianModel,
    cam: &Camera,
    settings: &RenderSettings,
) -> Result<(ImageBuffer, TileBinning)> {
    let splats = prepare(model, cam, settings.execution)?;
    let mut binning = bin_splats(&splats, cam, settings.tile_size);
    let tiles = settings.execution.map_range(binning.tiles.len(), |t| {
        render_tile(&binning, t, &splats, &settings.background)
    });

    let mut img = ImageBuffer::new(binning.width, binning.height);
    for (t, tile) in tiles.into_iter().enumerate() {
        let (x0, y0, x1, _) = tile_rect(&binning, t);
        let tw = x1 - x0;
        for (k, rgb) in tile.color.iter().enumerate() {
            let (x, y) = (x0 + k % tw, y0 + k / tw);
            img.set(x, y, *rgb);
            binning.final_transmittance[y * binning.width + x] = tile.transmittance[k];
            binning.contrib_count[y * binning.width + x] = tile.count[k];
        }
    }
    Ok((img, binning))
}

pub fn render(model: &GaussianModel, cam: &Camera, settings: &RenderSettings) -> Result<ImageBuffer> {
    render_forward(model, cam, settings).map(|(img, _)| img)
}

/// Per-Gaussian view-space gradient statistics used by densification.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ViewspaceStats {
    /// Sum over views of `‖∂L/∂mean2d‖`, with `mean2d` in normalized device
    /// coordinates (`[-1, 1]` across the image), so the densification
    /// threshold does not depend on the resolution.
    pub grad_norm: Vec<f64>,
    /// Number of views in which the Gaussian contributed to at least one pixel.
    pub seen: Vec<u32>,
}

impl ViewspaceStats {
    pub fn zeros(n: usize) -> Self {
        ViewspaceStats { grad_norm: vec![0.0; n], seen: vec![0; n] }
    }

    pub fn merge(&mut self, other: &ViewspaceStats) {
        assert_eq!(self.grad_norm.len(), other.grad_norm.len());
        for (a, b) in self.grad_norm.iter_mut().zip(&other.grad_norm) {
            *a += b;
        }
        for (a, b) in self.seen.iter_mut().zip(&other.seen) {
            *a += b;
        }
    }

    /// Mean gradient norm per Gaussian over the views it was seen in.
    pub fn mean_grad(&self) -> Vec<f64> {
        self.grad_norm.iter().zip(&self.seen).map(|(g, &s)| g / s.max(1) as f64).collect()
    }
}

/// Loss gradients for every model parameter, shaped like [`GaussianModel`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RenderGrads {
    pub means: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<Quat>,
    pub opacity_logits: Vec<f64>,
    pub sh_coeffs: Vec<[[f64; 3]; SH_COEFFS]>,
    pub stats: ViewspaceStats,
}

impl_param_access!(RenderGrads);

impl RenderGrads {
    pub fn zeros(n: usize) -> Self {
        RenderGrads {
            means: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacity_logits: vec![0.0; n],
            sh_coeffs: vec![[[0.0; 3]; SH_COEFFS]; n],
            stats: ViewspaceStats::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// Screen-space gradient accumulated for one Gaussian.
#[derive(Clone, Copy, Debug, Default)]
struct SplatGrad {
    mean2d: [f64; 2],
    /// `∂L/∂Q₀₀`, `∂L/∂Q₀₁ (= ∂L/∂Q₁₀)`, `∂L/∂Q₁₁` of the conic `Q`.
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    contributed: bool,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        self.mean2d[0] += o.mean2d[0];
        self.mean2d[1] += o.mean2d[1];
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
        self.contributed |= o.contributed;
    }
}

fn backward_tile(
    b: &TileBinning,
    t: usize,
    splats: &[Option<Splat>],
    background: &[f64; 3],
    d_image: &ImageBuffer,
) -> Vec<SplatGrad> {
    let list = gather_tile(&b.tiles[t], splats);
    let mut grads = vec![SplatGrad::default(); list.len()];
    let (x0, y0, x1, y1) = tile_rect(b, t);
    for y in y0..y1 {
        for x in x0..x1 {
            let pix = y * b.width + x;
            let count = b.contrib_count[pix] as usize;
            if count == 0 {
                continue;
            }
            let d_pix = d_image.get(x, y);
            let t_final = b.final_transmittance[pix];
            let bg_dot = (0..3).map(|ch| background[ch] * d_pix[ch]).sum::<f64>();
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t_acc = t_final;
            let mut behind = [0.0; 3];
            for n in (0..count).rev() {
                let s = &list[n];
                let Some((g, dx, dy)) = s.eval(px, py) else { continue };
                let raw = s.opacity * g;
                let alpha = raw.min(ALPHA_MAX);
                if alpha < ALPHA_MIN {
                    continue;
                }
                t_acc /= 1.0 - alpha;
                let w = alpha * t_acc;
                let acc = &mut grads[n];
                acc.contributed = true;
                let mut d_alpha = 0.0;
                for ch in 0..3 {
                    let c = s.color[ch];
                    acc.color[ch] += w * d_pix[ch];
                    d_alpha += (c - behind[ch]) * t_acc * d_pix[ch];
                    behind[ch] = alpha * c + (1.0 - alpha) * behind[ch];
                }
                d_alpha -= t_final / (1.0 - alpha) * bg_dot;
                if raw >= ALPHA_MAX {
                    continue;
                }
                acc.opacity += g * d_alpha;
                // ∂α/∂power = a·G; power = -½ dᵀ Q d.
                let d_power = s.opacity * g * d_alpha;
                let [qa, qb, qc] = s.conic;
                let qx = qa * dx + 0.5 * qb * dy;
                let qy = qc * dy + 0.5 * qb * dx;
                acc.mean2d[0] += d_power * qx;
                acc.mean2d[1] += d_power * qy;
                acc.conic[0] += -0.5 * d_power * dx * dx;
                acc.conic[1] += -0.5 * d_power * dx * dy;
                acc.conic[2] += -0.5 * d_power * dy * dy;
            }
        }
    }
    grads
}

/// Per-Gaussian gradient contribution, before assembly into [`RenderGrads`].
struct GaussianGrad {
    mean: [f64; 3],
    log_scale: [f64; 3],
    rotation: Quat,
    opacity_logit: f64,
    sh: [[f64; 3]; SH_COEFFS],
    viewspace_norm: f64,
    seen: bool,
}

/// Back-propagates `d_image` (∂L/∂pixel) through the render that produced `binning`.
pub fn render_backward(
    model: &GaussianModel,
    cam: &Camera,
    settings: &RenderSettings,
    binning: &TileBinning,
    d_image: &ImageBuffer,
) -> Result<RenderGrads> {
    if binning.num_gaussians != model.len() {
        return Err(Error::BinningMismatch(format!(
            "binning has {} Gaussians, model has {}",
            binning.num_gaussians,
            model.len()
        )));
    }
    if binning.width != cam.width as usize || binning.height != cam.height as usize || binning.tile_size != settings.tile_size {
        return Err(Error::BinningMismatch("camera or tile size differs from the forward pass".into()));
    }
    if d_image.width != binning.width || d_image.height != binning.height {
        return Err(Error::DimensionMismatch("image gradient does not match the render size".into()));
    }
    let exec = settings.execution;
    let splats = prepare(model, cam, exec)?;

    let per_tile =
        exec.map_range(binning.tiles.len(), |t| backward_tile(binning, t, &splats, &settings.background, d_image));

    // Fixed-order reduction keeps results independent of the worker count.
    let mut screen = vec![SplatGrad::default(); model.len()];
    for (list, grads) in binning.tiles.iter().zip(&per_tile) {
        for (e, g) in list.iter().zip(grads) {
            screen[e.gaussian as usize].add(g);
        }
    }

    // pixel = (ndc + 1)·size/2
    let ndc_scale = Vector2::new(cam.width as f64 / 2.0, cam.height as f64 / 2.0);
    let rows = exec.map_range(model.len(), |i| -> Result<Option<GaussianGrad>> {
        let (Some(s), sg) = (splats[i].as_ref(), &screen[i]) else {
            return Ok(None);
        };
        if !sg.contributed {
            return Ok(None);
        }
        let mean = Vector3::from(model.means[i]);
        let (ls, q) = (&model.log_scales[i], &model.rotations[i]);

        let (sh, d_dir) = eval_sh_backward(&model.sh_coeffs[i], &s.dir, model.sh_degree_active, &sg.color);
        let d_mean_sh = (d_dir - s.dir * s.dir.dot(&d_dir)) / s.dist;

        let d_conic = Matrix2::new(sg.conic[0], sg.conic[1], sg.conic[1], sg.conic[2]);
        let d_cov2d = conic_to_cov_grad(&s.conic, &d_conic);
        let d_mean2d = Vector2::from(sg.mean2d);
        let cov3d = build_covariance(ls, q)?;
        let (d_mean_proj, d_cov3d) = project_gaussian_backward(&mean, &cov3d, cam, &d_mean2d, &d_cov2d);
        let (log_scale, rotation) = build_covariance_backward(ls, q, &d_cov3d)?;

        Ok(Some(GaussianGrad {
            mean: (d_mean_sh + d_mean_proj).into(),
            log_scale,
            rotation,
            opacity_logit: sg.opacity * s.opacity * (1.0 - s.opacity),
            sh,
            viewspace_norm: ndc_scale.component_mul(&d_mean2d).norm(),
            seen: true,
        }))
    });

    let mut out = RenderGrads::zeros(model.len());
    for (i, row) in rows.into_iter().enumerate() {
        let Some(g) = row? else { continue };
        out.means[i] = g.mean;
        out.log_scales[i] = g.log_scale;
        out.rotations[i] = g.rotation;
        out.opacity_logits[i] = g.opacity_logit;
        out.sh_coeffs[i] = g.sh;
        out.stats.grad_norm[i] = g.viewspace_norm;
        out.stats.seen[i] = g.seen as u32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sh::SH_C0;
    use crate::model::{logit, IDENTITY_QUAT};
    use nalgebra::Matrix3;

    fn camera(w: u32, h: u32) -> Camera {
        Camera::new(w, h, 40.0, 40.0, w as f64 / 2.0, h as f64 / 2.0, Matrix3::identity(), Vector3::zeros(), "t").unwrap()
    }

    fn dc_for(rgb: [f64; 3]) -> [[f64; 3]; SH_COEFFS] {
        let mut sh = [[0.0; 3]; SH_COEFFS];
        sh[0] = rgb.map(|c| (c - 0.5) / SH_C0);
        sh
    }

    fn projected(x: f64, y: f64, sigma: f64, depth: f64) -> ProjectedGaussian {
        ProjectedGaussian {
            mean2d: Vector2::new(x, y),
            cov2d: Matrix2::identity() * sigma * sigma,
            depth,
            view_color: [0.0; 3],
        }
    }

    #[test]
    fn tiny_gaussian_lands_in_one_tile() {
        let b = bin_and_sort(&[projected(8.5, 8.5, 0.6, 1.0)], &camera(64, 64), 16);
        let occupied: Vec<usize> = (0..b.tiles.len()).filter(|&t| !b.tiles[t].is_empty()).collect();
        assert_eq!(occupied, vec![0]);
    }

    #[test]
    fn wide_box_spans_tile_row() {
        // 3σ box x ∈ [10, 40]: centre 25, σ = 5.
        let mut g = projected(25.0, 8.0, 1.0, 1.0);
        g.cov2d[(0, 0)] = 25.0;
        let b = bin_and_sort(&[g], &camera(64, 64), 16);
        let occupied: Vec<(usize, usize)> =
            (0..b.tiles.len()).filter(|&t| !b.tiles[t].is_empty()).map(|t| (t % b.tiles_x, t / b.tiles_x)).collect();
        assert_eq!(occupied, vec![(0, 0), (1, 0), (2, 0)]);
    }

    #[test]
    fn sorted_by_depth_then_index() {
        let gs = [projected(8.0, 8.0, 1.0, 2.0), projected(8.0, 8.0, 1.0, 1.0), projected(8.0, 8.0, 1.0, 1.0)];
        let b = bin_and_sort(&gs, &camera(16, 16), 16);
        let order: Vec<u32> = b.tile(0, 0).iter().map(|e| e.gaussian).collect();
        assert_eq!(order, vec![1, 2, 0]);
    }

    /// A single large Gaussian on the optical axis, centred on pixel (8, 8).
    fn centred_model(opacity: f64, rgb: [f64; 3], depth: f64) -> GaussianModel {
        let mut m = GaussianModel::default();
        // Mean projects to pixel centre (8.5, 8.5) of a 16x16 image with c = 8.
        let off = 0.5 * depth / 40.0;
        m.push([off, off, depth], [(0.5f64).ln(); 3], IDENTITY_QUAT, logit(opacity), dc_for(rgb));
        m
    }

    #[test]
    fn empty_model_renders_background() {
        let settings = RenderSettings::default();
        let img = render(&GaussianModel::default(), &camera(20, 12), &settings).unwrap();
        assert!(img.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_gaussian_blends_over_background() {
        let cam = Camera { cx: 8.0, cy: 8.0, ..camera(16, 16) };
        let settings = RenderSettings { background: [0.0, 0.0, 1.0], ..Default::default() };
        let img = render(&centred_model(0.6, [1.0, 0.0, 0.0], 2.0), &cam, &settings).unwrap();
        let p = img.get(8, 8);
        let want = [0.6, 0.0, 0.4];
        for ch in 0..3 {
            assert!((p[ch] - want[ch]).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn two_layer_blend_with_clamped_back() {
        let cam = Camera { cx: 8.0, cy: 8.0, ..camera(16, 16) };
        let mut m = centred_model(0.6, [1.0, 0.0, 0.0], 1.0);
        let back = centred_model(0.999, [0.0, 0.0, 1.0], 2.0);
        m.push(back.means[0], back.log_scales[0], back.rotations[0], back.opacity_logits[0], back.sh_coeffs[0]);
        let img = render(&m, &cam, &RenderSettings::default()).unwrap();
        let p = img.get(8, 8);
        let want = [0.6, 0.0, 0.4 * 0.99];
        for ch in 0..3 {
            assert!((p[ch] - want[ch]).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn zero_image_gradient_gives_zero_grads() {
        let cam = Camera { cx: 8.0, cy: 8.0, ..camera(16, 16) };
        let m = centred_model(0.6, [1.0, 0.3, 0.0], 2.0);
        let settings = RenderSettings::default();
        let (_, b) = render_forward(&m, &cam, &settings).unwrap();
        let g = render_backward(&m, &cam, &settings, &b, &ImageBuffer::new(16, 16)).unwrap();
        for k in 0..59 {
            assert_eq!(g.param(0, k), 0.0);
        }
        assert_eq!(g.stats.seen, vec![1]);
    }

    #[test]
    fn culled_gaussian_has_no_gradient() {
        let cam = Camera { cx: 8.0, cy: 8.0, ..camera(16, 16) };
        let mut m = centred_model(0.6, [1.0, 0.3, 0.0], 2.0);
        m.push([0.0, 0.0, -3.0], [0.0; 3], IDENTITY_QUAT, 0.0, dc_for([1.0; 3]));
        let settings = RenderSettings::default();
        let (_, b) = render_forward(&m, &cam, &settings).unwrap();
        let g = render_backward(&m, &cam, &settings, &b, &ImageBuffer::filled(16, 16, [1.0; 3])).unwrap();
        assert_eq!(g.stats.seen, vec![1, 0]);
        assert_eq!(g.stats.grad_norm[1], 0.0);
        for k in 0..59 {
            assert_eq!(g.param(1, k), 0.0);
        }
        assert!(g.param(0, 11) != 0.0);
    }

    #[test]
    fn mismatched_binning_is_rejected() {
        let cam = camera(16, 16);
        let m = centred_model(0.6, [1.0; 3], 2.0);
        let settings = RenderSettings::default();
        let (_, b) = render_forward(&GaussianModel::default(), &cam, &settings).unwrap();
        let err = render_backward(&m, &cam, &settings, &b, &ImageBuffer::new(16, 16)).unwrap_err();
        assert!(matches!(err, Error::BinningMismatch(_)));
    }

    #[test]
    fn opaque_front_occludes_back() {
        let cam = Camera { cx: 8.0, cy: 8.0, ..camera(16, 16) };
        let settings = RenderSettings::default();
        let back = centred_model(0.8, [0.0, 0.0, 1.0], 3.0);
        let alone = render(&back, &cam, &settings).unwrap().get(8, 8)[2];

        let mut m = centred_model(0.999, [1.0, 0.0, 0.0], 1.0);
        m.push(back.means[0], back.log_scales[0], back.rotations[0], back.opacity_logits[0], back.sh_coeffs[0]);
        let occluded = render(&m, &cam, &settings).unwrap().get(8, 8)[2];
        assert!(occluded <= 0.01 * alone + 1e-15, "{occluded} vs {alone}");
    }
}
