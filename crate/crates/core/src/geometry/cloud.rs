use nalgebra::{Matrix3, Vector3};

use super::KdTree;
use crate::error::{Error, Result};
use crate::math::sh::{SH_C0, SH_COLOR_OFFSET};
use crate::model::{GaussianModel, PointCloud};

/// Means of all Gaussians with activated opacity `>= min_opacity`, coloured by
/// their view-independent (DC) colour.
pub fn extract_point_cloud(model: &GaussianModel, min_opacity: f64) -> PointCloud {
    let keep: Vec<usize> = (0..model.len()).filter(|&i| model.opacity(i) >= min_opacity).collect();
    PointCloud {
        positions: keep.iter().map(|&i| Vector3::from(model.means[i])).collect(),
        colors: Some(
            keep.iter()
                .map(|&i| model.sh_coeffs[i][0].map(|c| (c * SH_C0 + SH_COLOR_OFFSET).clamp(0.0, 1.0)))
                .collect(),
        ),
        normals: None,
    }
}

/// Points inside the closed box `[min, max]`, order and attributes preserved.
pub fn crop_aabb(pc: &PointCloud, min: &Vector3<f64>, max: &Vector3<f64>) -> Result<PointCloud> {
    if let Some(axis) = (0..3).find(|&a| !(min[a] < max[a])) {
        return Err(Error::InvertedBox { axis });
    }
    let keep: Vec<usize> = pc
        .positions
        .iter()
        .enumerate()
        .filter(|(_, p)| (0..3).all(|a| min[a] <= p[a] && p[a] <= max[a]))
        .map(|(i, _)| i)
        .collect();
    Ok(PointCloud {
        positions: keep.iter().map(|&i| pc.positions[i]).collect(),
        colors: pc.colors.as_ref().map(|c| keep.iter().map(|&i| c[i]).collect()),
        normals: pc.normals.as_ref().map(|n| keep.iter().map(|&i| n[i]).collect()),
    })
}

/// Result of [`estimate_normals`].
#[derive(Clone, Debug)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    /// Points whose neighbourhood had no well-defined normal direction; they
    /// received the fallback normal `+z`.
    pub degenerate: Vec<usize>,
}

const EIGEN_GAP_MIN: f64 = 1e-9;

/// Orients `n` into the `+z` half-space (ties broken toward `+y`, then `+x`).
fn orient(n: Vector3<f64>) -> Vector3<f64> {
    const EPS: f64 = 1e-9;
    let key = if n.z.abs() > EPS {
        n.z
    } else if n.y.abs() > EPS {
        n.y
    } else {
        n.x
    };
    if key < 0.0 {
        -n
    } else {
        n
    }
}

/// PCA normals: for each point, the eigenvector of smallest eigenvalue of the
/// covariance of the point and its `k` nearest neighbours.
pub fn estimate_normals(pc: &PointCloud, k: usize) -> Result<NormalEstimate> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("normal estimation needs k >= 2, got {k}")));
    }
    if pc.len() <= k {
        return Err(Error::InvalidArgument(format!("{} points is not more than k = {k}", pc.len())));
    }
    let tree = KdTree::build(&pc.positions);
    let mut normals = Vec::with_capacity(pc.len());
    let mut degenerate = Vec::new();
    for (i, p) in pc.positions.iter().enumerate() {
        let nbrs = tree.k_nearest(p, k + 1);
        let centroid = nbrs.iter().map(|n| pc.positions[n.index]).sum::<Vector3<f64>>() / nbrs.len() as f64;
        let mut cov = Matrix3::zeros();
        for n in &nbrs {
            let d = pc.positions[n.index] - centroid;
            cov += d * d.transpose();
        }
        cov /= nbrs.len() as f64;
        let eig = cov.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        if eig.eigenvalues[order[1]] - eig.eigenvalues[order[0]] < EIGEN_GAP_MIN {
            degenerate.push(i);
            normals.push(Vector3::z());
        } else {
            normals.push(orient(eig.eigenvectors.column(order[0]).normalize()));
        }
    }
    if !degenerate.is_empty() {
        log::warn!("{} of {} points have degenerate neighbourhoods; using +z normals", degenerate.len(), pc.len());
    }
    Ok(NormalEstimate {
        cloud: PointCloud { positions: pc.positions.clone(), colors: pc.colors.clone(), normals: Some(normals) },
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sh::SH_COEFFS;
    use crate::model::{logit, IDENTITY_QUAT};

    fn grid(f: impl Fn(f64, f64) -> Vector3<f64>) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push(f(i as f64 * 0.1 + 0.013 * j as f64, j as f64 * 0.1));
            }
        }
        PointCloud::from_positions(pts)
    }

    fn model(opacities: &[f64]) -> GaussianModel {
        let mut m = GaussianModel::default();
        for (i, &o) in opacities.iter().enumerate() {
            m.push([i as f64, 0.0, 0.0], [0.0; 3], IDENTITY_QUAT, logit(o), [[0.0; 3]; SH_COEFFS]);
        }
        m
    }

    #[test]
    fn extraction_thresholds_on_opacity() {
        let m = model(&[0.5, 0.9, 0.01]);
        let all = extract_point_cloud(&m, 0.0);
        assert_eq!(all.len(), 3);
        assert_eq!(all.positions[2], Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(all.colors.as_ref().unwrap()[0], [0.5; 3]);
        assert!(extract_point_cloud(&model(&[1e-4, 1e-4]), 5e-3).is_empty());
    }

    #[test]
    fn crop_examples() {
        let pc = PointCloud {
            positions: vec![Vector3::new(0.5, 0.5, 0.5), Vector3::new(1.5, 0.5, 0.5)],
            colors: Some(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
            normals: None,
        };
        let unit = crop_aabb(&pc, &Vector3::zeros(), &Vector3::repeat(1.0)).unwrap();
        assert_eq!(unit.positions, vec![Vector3::new(0.5, 0.5, 0.5)]);
        assert_eq!(unit.colors.unwrap(), vec![[1.0, 0.0, 0.0]]);
        let all = crop_aabb(&pc, &Vector3::repeat(-10.0), &Vector3::repeat(10.0)).unwrap();
        assert_eq!(all, pc);
        let err = crop_aabb(&pc, &Vector3::new(0.0, 1.0, 0.0), &Vector3::new(1.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::InvertedBox { axis: 1 }));
    }

    #[test]
    fn planar_normals() {
        let est = estimate_normals(&grid(|x, y| Vector3::new(x, y, 0.0)), 8).unwrap();
        assert!(est.degenerate.is_empty());
        for n in est.cloud.normals.unwrap() {
            assert!((n - Vector3::z()).norm() < 1e-9, "{n}");
        }
    }

    #[test]
    fn diagonal_plane_normals() {
        // Plane x = y, spanned by (1,1,0) and (0,0,1).
        let est = estimate_normals(&grid(|u, v| Vector3::new(u, u, v)), 8).unwrap();
        let want = Vector3::new(-1.0, 1.0, 0.0) / 2f64.sqrt();
        for n in est.cloud.normals.unwrap() {
            assert!((n - want).norm() < 1e-9, "{n}");
        }
    }

    #[test]
    fn collinear_points_are_flagged() {
        let pc = PointCloud::from_positions((0..3).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect());
        let est = estimate_normals(&pc, 2).unwrap();
        assert_eq!(est.degenerate, vec![0, 1, 2]);
        assert_eq!(est.cloud.normals.unwrap()[0], Vector3::z());
        assert!(estimate_normals(&pc, 3).is_err());
    }
}
