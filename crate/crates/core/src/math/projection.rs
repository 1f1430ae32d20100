//! Affine (EWA) projection of a 3D Gaussian into the image plane.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::model::Camera;

/// Gaussians closer than this camera-frame depth are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Added to the projected covariance diagonal (pixels²).
pub const LOW_PASS: f64 = 0.3;
/// Footprint half-extent in standard deviations.
pub const FOOTPRINT_SIGMAS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedGaussian {
    /// Pixel coordinates; pixel `(x, y)` is sampled at `(x + 0.5, y + 0.5)`.
    pub mean2d: Vector2<f64>,
    /// Projected covariance including the low-pass term (pixels²).
    pub cov2d: Matrix2<f64>,
    /// Camera-frame z.
    pub depth: f64,
    /// Filled in by the renderer from the SH coefficients; zero from [`project_gaussian`].
    pub view_color: [f64; 3],
}

impl ProjectedGaussian {
    /// Half-extents of the axis-aligned box around the 3σ ellipse.
    pub fn footprint(&self) -> Vector2<f64> {
        Vector2::new(
            FOOTPRINT_SIGMAS * self.cov2d[(0, 0)].sqrt(),
            FOOTPRINT_SIGMAS * self.cov2d[(1, 1)].sqrt(),
        )
    }
}

/// Jacobian of `t -> (fx tx/tz + cx, fy ty/tz + cy)` at `t`.
fn projection_jacobian(cam: &Camera, t: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / t.z;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * t.x * iz * iz,
        0.0,
        cam.fy * iz,
        -cam.fy * t.y * iz * iz,
    )
}

/// Projects a Gaussian; `None` when it lies in front of the near plane or its
/// 3σ box misses the image.
pub fn project_gaussian(mean: &Vector3<f64>, cov3d: &Matrix3<f64>, cam: &Camera) -> Option<ProjectedGaussian> {
    let t = cam.world_to_camera(mean);
    if !(t.z > NEAR_PLANE) {
        return None;
    }
    let mean2d = Vector2::new(cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy);
    let m = projection_jacobian(cam, &t) * cam.rotation;
    let cov2d = m * cov3d * m.transpose() + Matrix2::identity() * LOW_PASS;
    let g = ProjectedGaussian { mean2d, cov2d, depth: t.z, view_color: [0.0; 3] };
    let ext = g.footprint();
    let (w, h) = (cam.width as f64, cam.height as f64);
    if !ext.iter().all(|e| e.is_finite())
        || mean2d.x + ext.x < 0.0
        || mean2d.x - ext.x > w
        || mean2d.y + ext.y < 0.0
        || mean2d.y - ext.y > h
    {
        return None;
    }
    Some(g)
}

/// Gradients with respect to the world mean and the 3D covariance, given
/// upstream gradients on `mean2d` and `cov2d`. Depth is treated as constant.
pub fn project_gaussian_backward(
    mean: &Vector3<f64>,
    cov3d: &Matrix3<f64>,
    cam: &Camera,
    d_mean2d: &Vector2<f64>,
    d_cov2d: &Matrix2<f64>,
) -> (Vector3<f64>, Matrix3<f64>) {
    let t = cam.world_to_camera(mean);
    let j = projection_jacobian(cam, &t);
    let w = cam.rotation;
    let m = j * w;
    let d_cov3d = m.transpose() * d_cov2d * m;

    let d_m = d_cov2d * m * cov3d.transpose() + d_cov2d.transpose() * m * cov3d;
    let d_j = d_m * w.transpose();

    let iz = 1.0 / t.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let (fx, fy) = (cam.fx, cam.fy);
    let mut d_t = Vector3::new(
        d_mean2d.x * fx * iz,
        d_mean2d.y * fy * iz,
        -d_mean2d.x * fx * t.x * iz2 - d_mean2d.y * fy * t.y * iz2,
    );
    d_t.x += -d_j[(0, 2)] * fx * iz2;
    d_t.y += -d_j[(1, 2)] * fy * iz2;
    d_t.z += -d_j[(0, 0)] * fx * iz2 + d_j[(0, 2)] * 2.0 * fx * t.x * iz3 - d_j[(1, 1)] * fy * iz2
        + d_j[(1, 2)] * 2.0 * fy * t.y * iz3;

    (w.transpose() * d_t, d_cov3d)
}
