use nalgebra::{Matrix3, Vector3};

use super::KdTree;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::PointCloud;

/// `p -> rotation * p + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn after(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn apply_cloud(&self, pc: &PointCloud) -> PointCloud {
        pc.transformed(&self.rotation, &self.translation)
    }
}

/// Least-squares rigid transform taking `src[i]` onto `dst[i]` (Kabsch).
///
/// Fails when the cross-covariance has rank below 2 (coincident or collinear
/// correspondences), where the rotation is not determined.
pub fn fit_rigid(src: &[Vector3<f64>], dst: &[Vector3<f64>], iteration: usize) -> Result<RigidTransform> {
    assert_eq!(src.len(), dst.len());
    if src.is_empty() {
        return Err(Error::DegenerateCorrespondences { iteration });
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let largest = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-12 * largest.max(f64::MIN_POSITIVE)).count();
    if rank < 2 {
        return Err(Error::DegenerateCorrespondences { iteration });
    }
    let v = v_t.transpose();
    let mut flip = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        flip[(sv.imin(), sv.imin())] = -1.0;
    }
    let rotation = v * flip * u.transpose();
    Ok(RigidTransform { rotation, translation: cd - rotation * cs })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpOptions {
    pub max_iters: usize,
    /// Stop once an iteration improves the RMSE by less than this.
    pub tol: f64,
    /// Correspondences farther than this multiple of the median distance are
    /// left out of each fit.
    pub reject_factor: f64,
}

impl Default for IcpOptions {
    fn default() -> Self {
        IcpOptions { max_iters: 100, tol: 1e-10, reject_factor: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpResult {
    /// Maps the source cloud into the reference frame.
    pub transform: RigidTransform,
    /// RMSE (all source points to their nearest reference point) of every
    /// accepted transform, starting with the initial guess. Nonincreasing.
    pub rmse_history: Vec<f64>,
    /// Number of rigid fits performed.
    pub iterations: usize,
}

/// Point-to-point ICP with median-based outlier rejection.
///
/// Runs from the identity and from a centroid-aligning translation and keeps
/// whichever ends with the lower RMSE. A fit that would increase the RMSE is
/// discarded and ends that run.
pub fn icp_register(src: &PointCloud, reference: &PointCloud, options: &IcpOptions) -> Result<IcpResult> {
    if src.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let tree = KdTree::build(&reference.positions);
    let from_identity = icp_from(src, reference, &tree, RigidTransform::identity(), options)?;
    let centroid = |pc: &PointCloud| pc.positions.iter().sum::<Vector3<f64>>() / pc.len() as f64;
    let shift = RigidTransform { rotation: Matrix3::identity(), translation: centroid(reference) - centroid(src) };
    let from_centroid = icp_from(src, reference, &tree, shift, options)?;
    let last = |r: &IcpResult| *r.rmse_history.last().unwrap();
    Ok(if last(&from_centroid) < last(&from_identity) { from_centroid } else { from_identity })
}

fn icp_from(
    src: &PointCloud,
    reference: &PointCloud,
    tree: &KdTree,
    start: RigidTransform,
    options: &IcpOptions,
) -> Result<IcpResult> {
    let mut current = start;
    let mut accepted = current;
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    loop {
        let moved: Vec<Vector3<f64>> = src.positions.iter().map(|p| current.apply(p)).collect();
        let nn = tree.nearest_batch(&moved, Execution::default());
        let rmse = (nn.iter().map(|n| n.dist_sq).sum::<f64>() / nn.len() as f64).sqrt();
        if let Some(&prev) = history.last() {
            if rmse > prev {
                current = accepted;
                break;
            }
            history.push(rmse);
            accepted = current;
            if prev - rmse < options.tol {
                break;
            }
        } else {
            history.push(rmse);
        }
        if iterations >= options.max_iters {
            break;
        }

        let mut dists: Vec<f64> = nn.iter().map(|n| n.dist_sq).collect();
        let mid = dists.len() / 2;
        let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
        let cutoff = options.reject_factor * options.reject_factor * *median;
        let (s, d): (Vec<_>, Vec<_>) = moved
            .iter()
            .zip(&nn)
            .filter(|(_, n)| n.dist_sq <= cutoff)
            .map(|(p, n)| (*p, reference.positions[n.index]))
            .unzip();
        iterations += 1;
        let delta = fit_rigid(&s, &d, iterations)?;
        current = delta.after(&current);
    }
    Ok(IcpResult { transform: current, rmse_history: history, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};

    fn blob() -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..12 {
            for j in 0..9 {
                let (x, y) = (i as f64 * 0.1, j as f64 * 0.1);
                pts.push(Vector3::new(x, y, 0.3 * (3.0 * x).sin() * (2.0 * y).cos() + 0.2 * x * x));
            }
        }
        PointCloud::from_positions(pts)
    }

    #[test]
    fn identical_clouds_give_identity() {
        let c = blob();
        let r = icp_register(&c, &c, &IcpOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.transform, RigidTransform::identity());
        assert_eq!(r.rmse_history[0], 0.0);
    }

    #[test]
    fn kabsch_recovers_exact_transform() {
        let c = blob();
        let t = RigidTransform {
            rotation: Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 2.0, 0.5)), 0.4).into_inner(),
            translation: Vector3::new(0.1, -0.3, 0.2),
        };
        let moved: Vec<_> = c.positions.iter().map(|p| t.apply(p)).collect();
        let fit = fit_rigid(&c.positions, &moved, 0).unwrap();
        assert!((fit.rotation - t.rotation).abs().max() < 1e-12);
        assert!((fit.translation - t.translation).norm() < 1e-12);
        assert!((fit.rotation.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn collinear_correspondences_are_degenerate() {
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(fit_rigid(&line, &line, 4), Err(Error::DegenerateCorrespondences { iteration: 4 })));
    }

    #[test]
    fn recovers_small_rigid_motion() {
        let c = blob();
        let t = RigidTransform {
            rotation: Rotation3::from_euler_angles(0.1, -0.05, 0.15).into_inner(),
            translation: Vector3::new(0.05, 0.02, -0.03),
        };
        let reference = t.apply_cloud(&c);
        let r = icp_register(&c, &reference, &IcpOptions::default()).unwrap();
        let err = r.transform.after(&t.inverse());
        assert!(err.angle() < 1e-6, "{}", err.angle());
        assert!((r.transform.translation - t.translation).norm() < 1e-9);
        assert!(r.rmse_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn transform_algebra() {
        let a = RigidTransform {
            rotation: Rotation3::from_euler_angles(0.3, 0.2, 0.1).into_inner(),
            translation: Vector3::new(1.0, 2.0, 3.0),
        };
        let id = a.after(&a.inverse());
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        let p = Vector3::new(0.5, -0.5, 2.0);
        assert!((a.after(&a).apply(&p) - a.apply(&a.apply(&p))).norm() < 1e-12);
    }
}
