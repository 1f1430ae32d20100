//! Seeded synthetic scenes: a random teacher model, orbit cameras around it
//! and a jittered initial point cloud. Used for end-to-end tests and the
//! `synth` CLI command.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitBall};

use crate::error::Result;
use crate::math::sh::{MAX_SH_DEGREE, SH_C0, SH_COEFFS};
use crate::model::{logit, Camera, GaussianModel, PointCloud};
use crate::raster::{render, RenderSettings};
use crate::train::View;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_gaussians: usize,
    pub num_views: usize,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    /// Camera distance from the origin.
    pub orbit_radius: f64,
    /// Teacher Gaussians are placed inside a ball of this radius.
    pub scene_radius: f64,
    /// Range of the teacher's per-axis standard deviations.
    pub scale_range: (f64, f64),
    pub init_points: usize,
    /// Standard deviation of the Gaussian noise added to the initial points.
    pub init_jitter: f64,
    pub background: [f64; 3],
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_gaussians: 200,
            num_views: 36,
            width: 128,
            height: 128,
            focal: 200.0,
            orbit_radius: 4.0,
            scene_radius: 1.0,
            scale_range: (0.04, 0.12),
            init_points: 500,
            init_jitter: 0.05,
            background: [0.0; 3],
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub teacher: GaussianModel,
    /// Every camera with the teacher's (clamped) render as ground truth.
    pub views: Vec<View>,
    pub init: PointCloud,
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn teacher_model(spec: &SyntheticSpec, rng: &mut impl Rng) -> GaussianModel {
    let mut m = GaussianModel { sh_degree_active: MAX_SH_DEGREE, ..Default::default() };
    let (lo, hi) = spec.scale_range;
    for _ in 0..spec.num_gaussians {
        let p: [f64; 3] = UnitBall.sample(rng);
        let mean = p.map(|c| c * spec.scene_radius);
        let log_scale = [0; 3].map(|_| rng.random_range(lo.ln()..hi.ln()));
        let rotation = [0; 4].map(|_| normal(rng));
        let opacity = rng.random_range(0.5..0.95);
        let mut sh = [[0.0; 3]; SH_COEFFS];
        sh[0] = [0; 3].map(|_| (rng.random_range(0.1..0.9) - 0.5) / SH_C0);
        for coeff in &mut sh[1..] {
            *coeff = [0; 3].map(|_| 0.05 * normal(rng));
        }
        m.push(mean, log_scale, rotation, logit(opacity), sh);
    }
    m
}

/// `n` cameras on a spiral around the `z` axis looking at the origin, with
/// elevation sweeping between -30° and +30°.
pub fn orbit_cameras(spec: &SyntheticSpec) -> Result<Vec<Camera>> {
    (0..spec.num_views)
        .map(|i| {
            let t = i as f64 / spec.num_views as f64;
            let azimuth = std::f64::consts::TAU * t;
            let elevation = 30f64.to_radians() * (3.0 * std::f64::consts::TAU * t).sin();
            let eye = spec.orbit_radius
                * Vector3::new(elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin());
            Camera::look_at(eye, Vector3::zeros(), Vector3::z(), spec.width, spec.height, spec.focal, format!("{}", i + 1))
        })
        .collect()
}

/// `count` points sampled round-robin from the teacher's means with Gaussian
/// jitter; colours are the teacher's DC colours.
pub fn jittered_init(teacher: &GaussianModel, count: usize, jitter: f64, rng: &mut impl Rng) -> PointCloud {
    let mut positions = Vec::with_capacity(count);
    let mut colors = Vec::with_capacity(count);
    for k in 0..count {
        let i = k % teacher.len();
        positions.push(Vector3::from(teacher.means[i]) + jitter * Vector3::from_fn(|_, _| normal(rng)));
        colors.push(teacher.sh_coeffs[i][0].map(|c| (c * SH_C0 + 0.5).clamp(0.0, 1.0)));
    }
    PointCloud { positions, colors: Some(colors), normals: None }
}

pub fn build(spec: &SyntheticSpec) -> Result<SyntheticScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let teacher = teacher_model(spec, &mut rng);
    let settings = RenderSettings { background: spec.background, ..RenderSettings::default() };
    let views = orbit_cameras(spec)?
        .into_iter()
        .map(|camera| {
            let mut image = render(&teacher, &camera, &settings)?;
            image.clamp01();
            Ok(View { camera, image })
        })
        .collect::<Result<Vec<_>>>()?;
    let init = jittered_init(&teacher, spec.init_points, spec.init_jitter, &mut rng);
    Ok(SyntheticScene { teacher, views, init })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let spec = SyntheticSpec { num_gaussians: 20, num_views: 4, width: 32, height: 32, init_points: 30, ..Default::default() };
        let a = build(&spec).unwrap();
        let b = build(&spec).unwrap();
        assert_eq!(a.teacher, b.teacher);
        assert_eq!(a.views, b.views);
        assert_eq!(a.init, b.init);
        assert!(a.teacher.validate().is_empty());
        assert_eq!(a.init.len(), 30);
        assert!(a.teacher.means.iter().all(|m| Vector3::from(*m).norm() <= 1.0));
        // Every view sees the scene.
        assert!(a.views.iter().all(|v| v.image.data.iter().any(|&c| c > 0.05)));
    }
}
