//! Point-cloud evaluation: extraction from a trained model, cropping, normal
//! estimation, exact nearest-neighbour search, rigid ICP registration and
//! cloud-to-cloud distances.

mod cloud;
mod distance;
mod icp;
mod kdtree;

pub use cloud::{crop_aabb, estimate_normals, extract_point_cloud, NormalEstimate};
pub use distance::{chamfer, d1_mse, d2_mse, hausdorff, CloudComparison};
pub use icp::{fit_rigid, icp_register, IcpOptions, IcpResult, RigidTransform};
pub use kdtree::{KdTree, Neighbor};
