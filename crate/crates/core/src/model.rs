//! Scene, camera, image and point-cloud types.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::KdTree;
use crate::math::sh::{SH_C0, SH_COEFFS};

/// Quaternion stored as `(r, i, j, k)`, real part first.
pub type Quat = [f64; 4];

/// Trainable scalars per Gaussian: mean, log-scale, quaternion, opacity logit, SH.
pub const PARAMS_PER_GAUSSIAN: usize = 3 + 3 + 4 + 1 + 3 * SH_COEFFS;

pub const IDENTITY_QUAT: Quat = [1.0, 0.0, 0.0, 0.0];

/// Flat per-Gaussian parameter addressing shared by the model and its gradients.
///
/// Index layout within one Gaussian: `0..3` mean, `3..6` log-scale, `6..10`
/// rotation, `10` opacity logit, `11..59` SH (coefficient `k`, channel `c` at
/// `11 + 3k + c`).
macro_rules! impl_param_access {
    ($ty:ty) => {
        impl $ty {
            pub fn param(&self, gaussian: usize, k: usize) -> f64 {
                match k {
                    0..=2 => self.means[gaussian][k],
                    3..=5 => self.log_scales[gaussian][k - 3],
                    6..=9 => self.rotations[gaussian][k - 6],
                    10 => self.opacity_logits[gaussian],
                    11..=58 => self.sh_coeffs[gaussian][(k - 11) / 3][(k - 11) % 3],
                    _ => panic!("parameter index {k} out of range"),
                }
            }

            pub fn param_mut(&mut self, gaussian: usize, k: usize) -> &mut f64 {
                match k {
                    0..=2 => &mut self.means[gaussian][k],
                    3..=5 => &mut self.log_scales[gaussian][k - 3],
                    6..=9 => &mut self.rotations[gaussian][k - 6],
                    10 => &mut self.opacity_logits[gaussian],
                    11..=58 => &mut self.sh_coeffs[gaussian][(k - 11) / 3][(k - 11) % 3],
                    _ => panic!("parameter index {k} out of range"),
                }
            }
        }
    };
}
pub(crate) use impl_param_access;

/// The trainable scene: one anisotropic Gaussian per row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianModel {
    pub means: Vec<[f64; 3]>,
    /// Log of the per-axis standard deviation.
    pub log_scales: Vec<[f64; 3]>,
    /// Raw (not necessarily unit) quaternions; normalised before use.
    pub rotations: Vec<Quat>,
    pub opacity_logits: Vec<f64>,
    /// Degree-3 real SH: `sh_coeffs[i][coefficient][channel]`.
    pub sh_coeffs: Vec<[[f64; 3]; SH_COEFFS]>,
    pub sh_degree_active: u32,
}

impl_param_access!(GaussianModel);

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Problem found by [`GaussianModel::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub index: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {}", self.field, i, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Quaternions are accepted if their norm is within this of 1 or, for raw
/// trainable quaternions, simply non-zero and finite (see `validate`).
const MIN_QUAT_NORM: f64 = 1e-12;

impl GaussianModel {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn num_params(&self) -> usize {
        PARAMS_PER_GAUSSIAN * self.len()
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn scale(&self, i: usize) -> [f64; 3] {
        self.log_scales[i].map(f64::exp)
    }

    pub fn push(
        &mut self,
        mean: [f64; 3],
        log_scale: [f64; 3],
        rotation: Quat,
        opacity_logit: f64,
        sh: [[f64; 3]; SH_COEFFS],
    ) {
        self.means.push(mean);
        self.log_scales.push(log_scale);
        self.rotations.push(rotation);
        self.opacity_logits.push(opacity_logit);
        self.sh_coeffs.push(sh);
    }

    /// Appends a copy of Gaussian `i`.
    pub fn duplicate(&mut self, i: usize) {
        self.push(
            self.means[i],
            self.log_scales[i],
            self.rotations[i],
            self.opacity_logits[i],
            self.sh_coeffs[i],
        );
    }

    /// Keeps rows where `keep[i]` is true, preserving order.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        retain_by_mask(&mut self.means, keep);
        retain_by_mask(&mut self.log_scales, keep);
        retain_by_mask(&mut self.rotations, keep);
        retain_by_mask(&mut self.opacity_logits, keep);
        retain_by_mask(&mut self.sh_coeffs, keep);
    }

    /// Reports every invariant violation; an empty list means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.means.len();
        let lens = [
            ("log_scales", self.log_scales.len()),
            ("rotations", self.rotations.len()),
            ("opacity_logits", self.opacity_logits.len()),
            ("sh_coeffs", self.sh_coeffs.len()),
        ];
        for (field, len) in lens {
            if len != n {
                out.push(Violation {
                    field,
                    index: None,
                    message: format!("length {len} differs from means length {n}"),
                });
            }
        }
        if self.sh_degree_active > 3 {
            out.push(Violation {
                field: "sh_degree_active",
                index: None,
                message: format!("{} exceeds 3", self.sh_degree_active),
            });
        }

        fn non_finite(v: &[f64]) -> bool {
            v.iter().any(|x| !x.is_finite())
        }
        for (i, m) in self.means.iter().enumerate() {
            if non_finite(m) {
                out.push(Violation { field: "means", index: Some(i), message: "non-finite value".into() });
            }
        }
        for (i, s) in self.log_scales.iter().enumerate() {
            if non_finite(s) {
                out.push(Violation { field: "log_scales", index: Some(i), message: "non-finite value".into() });
            }
        }
        for (i, q) in self.rotations.iter().enumerate() {
            let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if non_finite(q) {
                out.push(Violation { field: "rotations", index: Some(i), message: "non-finite value".into() });
            } else if norm < MIN_QUAT_NORM {
                out.push(Violation { field: "rotations", index: Some(i), message: "zero-norm quaternion".into() });
            }
        }
        for (i, o) in self.opacity_logits.iter().enumerate() {
            if !o.is_finite() {
                out.push(Violation { field: "opacity_logits", index: Some(i), message: "non-finite value".into() });
            }
        }
        for (i, sh) in self.sh_coeffs.iter().enumerate() {
            if sh.iter().any(|c| non_finite(c)) {
                out.push(Violation { field: "sh_coeffs", index: Some(i), message: "non-finite value".into() });
            }
        }
        out
    }

    /// One Gaussian per point of `pc`, isotropic with log-scale equal to the
    /// log of the mean distance to the (up to) three nearest neighbours.
    pub fn from_point_cloud(pc: &PointCloud, initial_opacity: f64) -> Result<Self> {
        if pc.is_empty() {
            return Err(Error::EmptyInitCloud);
        }
        if !(initial_opacity > 0.0 && initial_opacity < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "initial opacity {initial_opacity} not in (0, 1)"
            )));
        }
        let spacing = mean_neighbor_distance(&pc.positions, 3);
        let mut model = GaussianModel::default();
        for (i, p) in pc.positions.iter().enumerate() {
            let color = pc.colors.as_ref().map_or([0.5; 3], |c| c[i]);
            let mut sh = [[0.0; 3]; SH_COEFFS];
            sh[0] = color.map(|c| (c - 0.5) / SH_C0);
            let log_s = spacing[i].max(1e-7).ln();
            model.push([p.x, p.y, p.z], [log_s; 3], IDENTITY_QUAT, logit(initial_opacity), sh);
        }
        Ok(model)
    }
}

/// Mean Euclidean distance from each point to its `k` nearest other points
/// (fewer when the cloud is smaller). A single point gets 0.
pub(crate) fn mean_neighbor_distance(points: &[Vector3<f64>], k: usize) -> Vec<f64> {
    if points.len() < 2 {
        return vec![0.0; points.len()];
    }
    let tree = KdTree::build(points);
    let k_eff = k.min(points.len() - 1);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            // +1 because the query point is its own nearest neighbour.
            let nn = tree.k_nearest(p, k_eff + 1);
            let ds: Vec<f64> = nn.iter().filter(|n| n.index != i).take(k_eff).map(|n| n.dist_sq.sqrt()).collect();
            ds.iter().sum::<f64>() / ds.len() as f64
        })
        .collect()
}

pub(crate) fn retain_by_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut it = keep.iter();
    v.retain(|_| *it.next().unwrap());
}

/// Pinhole camera with a world-to-camera pose (OpenCV axes: x right, y down,
/// z forward).
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub image_id: String,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        image_id: impl Into<String>,
    ) -> Result<Self> {
        let cam = Camera { width, height, fx, fy, cx, cy, rotation, translation, image_id: image_id.into() };
        cam.check()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with `up` roughly opposite the image y axis.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        width: u32,
        height: u32,
        focal: f64,
        image_id: impl Into<String>,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::InvalidCamera("up vector parallel to viewing direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Camera::new(
            width,
            height,
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            rotation,
            translation,
            image_id,
        )
    }

    pub fn check(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-9) || !((r.determinant() - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidCamera("rotation is not a proper rotation".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidCamera("principal point outside the image".into()));
        }
        if !self.translation.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidCamera("non-finite translation".into()));
        }
        Ok(())
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Intrinsics for an image downsampled by an integer factor.
    pub fn downsampled(&self, factor: u32) -> Camera {
        let f = factor as f64;
        Camera {
            width: self.width / factor,
            height: self.height / factor,
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            ..self.clone()
        }
    }
}

/// Row-major `height x width x 3` floating-point image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuffer { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(ImageBuffer { width, height, data })
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn clamp01(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// Box-filter downsample by an integer factor; trailing rows/columns that
    /// do not fill a full block are dropped.
    pub fn downsample(&self, factor: usize) -> ImageBuffer {
        if factor <= 1 {
            return self.clone();
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = ImageBuffer::new(w, h);
        let norm = 1.0 / (factor * factor) as f64;
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for dy in 0..factor {
                    for dx in 0..factor {
                        let p = self.get(x * factor + dx, y * factor + dy);
                        for c in 0..3 {
                            acc[c] += p[c];
                        }
                    }
                }
                out.set(x, y, acc.map(|v| v * norm));
            }
        }
        out
    }
}

/// Point positions with optional per-point colours (RGB in `[0, 1]`) and unit normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vector3<f64>>,
    pub colors: Option<Vec<[f64; 3]>>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn from_positions(positions: Vec<Vector3<f64>>) -> Self {
        PointCloud { positions, colors: None, normals: None }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.len();
        if self.colors.as_ref().is_some_and(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("colors length differs from positions".into()));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::DimensionMismatch("normals length differs from positions".into()));
            }
            if let Some(i) = normals.iter().position(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::InvalidArgument(format!("normal {i} is not unit length")));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box `(min, max)`; `None` when empty.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bounds().map_or(0.0, |(lo, hi)| (hi - lo).norm())
    }

    /// Applies `p -> rotation * p + translation` to positions and rotates normals.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> PointCloud {
        PointCloud {
            positions: self.positions.iter().map(|p| rotation * p + translation).collect(),
            colors: self.colors.clone(),
            normals: self.normals.as_ref().map(|ns| ns.iter().map(|n| rotation * n).collect()),
        }
    }
}
