//! Per-Gaussian differentiable kernels.
//!
//! Every forward function has a matching `*_backward` that maps an upstream
//! gradient (cotangent) back to its inputs. Gradients with respect to matrices
//! treat every entry as an independent variable, so `d_cov[(0, 1)]` and
//! `d_cov[(1, 0)]` are separate partials even for symmetric matrices.

pub mod projection;
pub mod sh;

use nalgebra::{Matrix2, Matrix3, Vector2};

use crate::error::{Error, Result};
use crate::model::Quat;

pub use projection::{project_gaussian, project_gaussian_backward, ProjectedGaussian};
pub use sh::{eval_sh, eval_sh_backward};

fn normalized(q: &Quat) -> Result<(Quat, f64)> {
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return Err(Error::ZeroQuaternion);
    }
    Ok((q.map(|x| x / norm), norm))
}

/// Rotation matrix of the quaternion `(r, i, j, k)`, normalised first.
pub fn quat_to_rotation(q: &Quat) -> Result<Matrix3<f64>> {
    let ([r, i, j, k], _) = normalized(q)?;
    Ok(Matrix3::new(
        1.0 - 2.0 * (j * j + k * k),
        2.0 * (i * j - k * r),
        2.0 * (i * k + j * r),
        2.0 * (i * j + k * r),
        1.0 - 2.0 * (i * i + k * k),
        2.0 * (j * k - i * r),
        2.0 * (i * k - j * r),
        2.0 * (j * k + i * r),
        1.0 - 2.0 * (i * i + j * j),
    ))
}

/// Gradient with respect to the raw quaternion, including the normalisation.
pub fn quat_to_rotation_backward(q: &Quat, d_rot: &Matrix3<f64>) -> Result<Quat> {
    let (u, norm) = normalized(q)?;
    let [r, i, j, k] = u;
    let g = |a: usize, b: usize| d_rot[(a, b)];
    let du = [
        2.0 * (-k * g(0, 1) + j * g(0, 2) + k * g(1, 0) - i * g(1, 2) - j * g(2, 0) + i * g(2, 1)),
        2.0 * (j * g(0, 1) + k * g(0, 2) + j * g(1, 0) - 2.0 * i * g(1, 1) - r * g(1, 2) + k * g(2, 0) + r * g(2, 1)
            - 2.0 * i * g(2, 2)),
        2.0 * (-2.0 * j * g(0, 0) + i * g(0, 1) + r * g(0, 2) + i * g(1, 0) + k * g(1, 2) - r * g(2, 0) + k * g(2, 1)
            - 2.0 * j * g(2, 2)),
        2.0 * (-2.0 * k * g(0, 0) - r * g(0, 1) + i * g(0, 2) + r * g(1, 0) - 2.0 * k * g(1, 1) + j * g(1, 2)
            + i * g(2, 0)
            + j * g(2, 1)),
    ];
    let radial: f64 = du.iter().zip(&u).map(|(a, b)| a * b).sum();
    Ok([0, 1, 2, 3].map(|n| (du[n] - u[n] * radial) / norm))
}

/// `R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))`.
pub fn build_covariance(log_scale: &[f64; 3], q: &Quat) -> Result<Matrix3<f64>> {
    let rot = quat_to_rotation(q)?;
    let d = Matrix3::from_diagonal(&nalgebra::Vector3::from(log_scale.map(|s| (2.0 * s).exp())));
    Ok(rot * d * rot.transpose())
}

pub fn build_covariance_backward(
    log_scale: &[f64; 3],
    q: &Quat,
    d_cov: &Matrix3<f64>,
) -> Result<([f64; 3], Quat)> {
    let rot = quat_to_rotation(q)?;
    let var = log_scale.map(|s| (2.0 * s).exp());
    let d = Matrix3::from_diagonal(&nalgebra::Vector3::from(var));
    let sym = d_cov + d_cov.transpose();
    let d_rot = sym * rot * d;
    let inner = rot.transpose() * d_cov * rot;
    let d_log_scale = [0, 1, 2].map(|k| 2.0 * var[k] * inner[(k, k)]);
    Ok((d_log_scale, quat_to_rotation_backward(q, &d_rot)?))
}

/// `exp(-½ dᵀ Σ⁻¹ d)` with `d = x - mean`.
pub fn eval_gaussian_2d(mean: &Vector2<f64>, cov: &Matrix2<f64>, x: &Vector2<f64>) -> f64 {
    let conic = inverse_2x2(cov);
    let d = x - mean;
    (-0.5 * d.dot(&(conic * d))).exp()
}

/// Returns `(d_mean, d_cov, d_x)` for the upstream gradient `d_out`.
pub fn eval_gaussian_2d_backward(
    mean: &Vector2<f64>,
    cov: &Matrix2<f64>,
    x: &Vector2<f64>,
    d_out: f64,
) -> (Vector2<f64>, Matrix2<f64>, Vector2<f64>) {
    let conic = inverse_2x2(cov);
    let d = x - mean;
    let g = (-0.5 * d.dot(&(conic * d))).exp();
    let d_x = -0.5 * g * d_out * (conic + conic.transpose()) * d;
    let d_conic = -0.5 * g * d_out * d * d.transpose();
    (-d_x, conic_to_cov_grad(&conic, &d_conic), d_x)
}

/// Maps a gradient with respect to `Σ⁻¹` to one with respect to `Σ`.
pub fn conic_to_cov_grad(conic: &Matrix2<f64>, d_conic: &Matrix2<f64>) -> Matrix2<f64> {
    let ct = conic.transpose();
    -(ct * d_conic * ct)
}

pub fn inverse_2x2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det
}

#[cfg(test)]
pub(crate) mod fd {
    //! Central finite-difference helpers shared by the kernel tests.

    pub const STEP: f64 = 1e-4;

    /// Relative error < 1e-3 with an absolute floor of 1e-6.
    pub fn close(analytic: f64, numeric: f64) -> bool {
        let diff = (analytic - numeric).abs();
        diff <= 1e-6 || diff <= 1e-3 * analytic.abs().max(numeric.abs())
    }

    pub fn central<F: FnMut(f64) -> f64>(x: f64, mut f: F) -> f64 {
        (f(x + STEP) - f(x - STEP)) / (2.0 * STEP)
    }
}
