//! File formats: COLMAP text models, PLY (Gaussian checkpoints and point
//! clouds), PPM/PNG images and flat `key = value` text files.

pub mod colmap;
pub mod config;
pub mod image;
pub mod keyvalue;
pub mod ply;

pub use colmap::{find_sparse_dir, load_colmap_sparse, write_colmap_text, ImageEntry, SceneBundle};
pub use config::{load_config, parse_config, write_config};
pub use image::{load_image, load_ppm, save_image, save_ppm};
pub use keyvalue::{parse_pose, parse_transform, read_pose, read_transform, write_pose, write_transform};
pub use ply::{decode_gaussians_ply, encode_gaussians_ply, load_gaussians_ply, load_point_cloud_ply, save_gaussians_ply, save_point_cloud_ply, PlyScalar};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::file(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::file(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Loads a COLMAP scene directory with its images as training views, both
/// reduced by `downsample` (intrinsics scaled, images box-filtered).
pub fn load_scene(dir: &Path, downsample: u32) -> Result<(Vec<crate::train::View>, crate::model::PointCloud)> {
    if downsample == 0 {
        return Err(Error::InvalidArgument("downsample factor must be at least 1".into()));
    }
    let bundle = load_colmap_sparse(dir)?;
    let mut views = Vec::with_capacity(bundle.cameras.len());
    for (cam, entry) in bundle.cameras.into_iter().zip(&bundle.images) {
        let image = load_image(&entry.path)?;
        if image.width != cam.width as usize || image.height != cam.height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} is {}x{} but its camera is {}x{}",
                entry.path.display(),
                image.width,
                image.height,
                cam.width,
                cam.height
            )));
        }
        views.push(crate::train::View {
            camera: cam.downsampled(downsample),
            image: image.downsample(downsample as usize),
        });
    }
    Ok((views, bundle.sparse_cloud))
}

/// Writes `views` and `cloud` as a scene directory readable by [`load_scene`]:
/// `sparse/0/*.txt` plus `images/NNNN.ppm`.
pub fn write_scene(dir: &Path, views: &[crate::train::View], cloud: &crate::model::PointCloud) -> Result<()> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::file(&images, e))?;
    let names: Vec<String> = (0..views.len()).map(|i| format!("{i:04}.ppm")).collect();
    for (v, name) in views.iter().zip(&names) {
        save_ppm(&images.join(name), &v.image)?;
    }
    let cams: Vec<_> = views.iter().map(|v| v.camera.clone()).collect();
    write_colmap_text(&dir.join("sparse").join("0"), &cams, &names, cloud)
}
