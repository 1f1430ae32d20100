//! Cloud-to-cloud distances. D1/D2 are squared and directional (source to
//! reference); Hausdorff and Chamfer use unsquared Euclidean distances and are
//! symmetric. Chamfer is the sum of the two directed mean distances.

use super::{KdTree, Neighbor};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::PointCloud;

fn nearest_all(from: &PointCloud, to: &PointCloud) -> Result<Vec<Neighbor>> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    Ok(KdTree::build(&to.positions).nearest_batch(&from.positions, Execution::default()))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Mean squared distance from each source point to its nearest reference point.
pub fn d1_mse(src: &PointCloud, reference: &PointCloud) -> Result<f64> {
    Ok(mean(nearest_all(src, reference)?.iter().map(|n| n.dist_sq)))
}

/// Mean squared point-to-plane distance, using the normal of each source
/// point's nearest reference point.
pub fn d2_mse(src: &PointCloud, reference: &PointCloud) -> Result<f64> {
    let normals = reference.normals.as_ref().ok_or(Error::MissingNormals)?;
    let nn = nearest_all(src, reference)?;
    Ok(mean(nn.iter().zip(&src.positions).map(|(n, p)| {
        let e = (p - reference.positions[n.index]).dot(&normals[n.index]);
        e * e
    })))
}

pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let directed = |nn: Vec<Neighbor>| nn.iter().map(|n| n.dist_sq.sqrt()).fold(0.0, f64::max);
    Ok(directed(nearest_all(a, b)?).max(directed(nearest_all(b, a)?)))
}

pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let directed = |nn: Vec<Neighbor>| mean(nn.iter().map(|n| n.dist_sq.sqrt()));
    Ok(directed(nearest_all(a, b)?) + directed(nearest_all(b, a)?))
}

/// All four metrics of a source cloud against a reference with normals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudComparison {
    pub d1_mse: f64,
    pub d2_mse: f64,
    pub hausdorff: f64,
    pub chamfer: f64,
}

impl CloudComparison {
    pub fn compute(src: &PointCloud, reference: &PointCloud) -> Result<Self> {
        Ok(CloudComparison {
            d1_mse: d1_mse(src, reference)?,
            d2_mse: d2_mse(src, reference)?,
            hausdorff: hausdorff(src, reference)?,
            chamfer: chamfer(src, reference)?,
        })
    }
}
