//! COLMAP sparse models in text form (`cameras.txt`, `images.txt`,
//! `points3D.txt`). Only `PINHOLE` and `SIMPLE_PINHOLE` cameras are accepted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3};

use super::{read_text, write_bytes};
use crate::error::{Error, Result};
use crate::math::quat_to_rotation;
use crate::model::{Camera, PointCloud};

#[derive(Clone, Debug, PartialEq)]
pub struct ImageEntry {
    /// COLMAP `IMAGE_ID`, also stored as the camera's `image_id`.
    pub image_id: String,
    pub name: String,
    /// `images/NAME` next to the scene directory.
    pub path: PathBuf,
}

/// A parsed sparse model: one posed camera per image, ordered by image id.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub cameras: Vec<Camera>,
    pub images: Vec<ImageEntry>,
    pub sparse_cloud: PointCloud,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Intrinsics {
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

/// Non-comment, non-blank lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn num<T: std::str::FromStr>(path: &Path, line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::parse(path, line, format!("bad {what} {tok:?}")))
}

fn parse_cameras(path: &Path, text: &str) -> Result<BTreeMap<u64, Intrinsics>> {
    let mut out = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() < 4 {
            return Err(Error::parse(path, n, "expected CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]"));
        }
        let id: u64 = num(path, n, t[0], "camera id")?;
        let (width, height) = (num(path, n, t[2], "width")?, num(path, n, t[3], "height")?);
        let p: Vec<f64> = t[4..].iter().map(|s| num(path, n, s, "camera parameter")).collect::<Result<_>>()?;
        let (fx, fy, cx, cy) = match (t[1], p.as_slice()) {
            ("PINHOLE", &[fx, fy, cx, cy]) => (fx, fy, cx, cy),
            ("SIMPLE_PINHOLE", &[f, cx, cy]) => (f, f, cx, cy),
            ("PINHOLE" | "SIMPLE_PINHOLE", _) => {
                return Err(Error::parse(path, n, format!("{} takes a different number of parameters than {}", t[1], p.len())))
            }
            (model, _) => return Err(Error::parse(path, n, format!("unsupported camera model {model}"))),
        };
        if out.insert(id, Intrinsics { width, height, fx, fy, cx, cy }).is_some() {
            return Err(Error::parse(path, n, format!("duplicate camera id {id}")));
        }
    }
    Ok(out)
}

fn parse_images(path: &Path, text: &str, cams: &BTreeMap<u64, Intrinsics>) -> Result<BTreeMap<u64, (Camera, String)>> {
    let mut out = BTreeMap::new();
    let mut lines = text.lines().enumerate();
    while let Some((i, raw)) = lines.next() {
        let (n, line) = (i + 1, raw.trim());
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 10 {
            return Err(Error::parse(path, n, "expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME"));
        }
        // The following line lists the 2D observations; it may be empty.
        lines.next();
        let id: u64 = num(path, n, t[0], "image id")?;
        let v: Vec<f64> = t[1..8].iter().map(|s| num(path, n, s, "pose value")).collect::<Result<_>>()?;
        let cam_id: u64 = num(path, n, t[8], "camera id")?;
        let k = cams.get(&cam_id).ok_or_else(|| Error::parse(path, n, format!("unknown camera id {cam_id}")))?;
        let rotation = quat_to_rotation(&[v[0], v[1], v[2], v[3]]).map_err(|e| Error::parse(path, n, e.to_string()))?;
        let cam = Camera::new(k.width, k.height, k.fx, k.fy, k.cx, k.cy, rotation, Vector3::new(v[4], v[5], v[6]), t[0])
            .map_err(|e| Error::parse(path, n, e.to_string()))?;
        if out.insert(id, (cam, t[9].to_string())).is_some() {
            return Err(Error::parse(path, n, format!("duplicate image id {id}")));
        }
    }
    Ok(out)
}

fn parse_points(path: &Path, text: &str) -> Result<PointCloud> {
    let mut pts = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() < 8 || (t.len() - 8) % 2 != 0 {
            return Err(Error::parse(path, n, "expected POINT3D_ID X Y Z R G B ERROR TRACK[] with (IMAGE_ID, POINT2D_IDX) pairs"));
        }
        let id: u64 = num(path, n, t[0], "point id")?;
        let p = Vector3::new(num(path, n, t[1], "x")?, num(path, n, t[2], "y")?, num(path, n, t[3], "z")?);
        let mut c = [0.0; 3];
        for (dst, tok) in c.iter_mut().zip(&t[4..7]) {
            *dst = num::<u8>(path, n, tok, "colour (0..=255)")? as f64 / 255.0;
        }
        num::<f64>(path, n, t[7], "error")?;
        for s in &t[8..] {
            num::<i64>(path, n, s, "track entry")?;
        }
        if pts.insert(id, (p, c)).is_some() {
            return Err(Error::parse(path, n, format!("duplicate point id {id}")));
        }
    }
    let (positions, colors) = pts.into_values().unzip();
    Ok(PointCloud { positions, colors: Some(colors), normals: None })
}

/// `DIR/sparse/0`, `DIR/sparse` or `DIR`, whichever holds `cameras.txt`.
pub fn find_sparse_dir(dir: &Path) -> PathBuf {
    for c in [dir.join("sparse").join("0"), dir.join("sparse")] {
        if c.join("cameras.txt").is_file() {
            return c;
        }
    }
    dir.to_path_buf()
}

/// Loads a scene directory: the sparse model (see [`find_sparse_dir`]) and
/// image paths under `DIR/images`.
pub fn load_colmap_sparse(dir: &Path) -> Result<SceneBundle> {
    let sparse = find_sparse_dir(dir);
    let cam_path = sparse.join("cameras.txt");
    let img_path = sparse.join("images.txt");
    let pts_path = sparse.join("points3D.txt");
    let cams = parse_cameras(&cam_path, &read_text(&cam_path)?)?;
    let images = parse_images(&img_path, &read_text(&img_path)?, &cams)?;
    let sparse_cloud = parse_points(&pts_path, &read_text(&pts_path)?)?;
    let (cameras, images) = images
        .into_values()
        .map(|(cam, name)| {
            let entry = ImageEntry { image_id: cam.image_id.clone(), path: dir.join("images").join(&name), name };
            (cam, entry)
        })
        .unzip();
    Ok(SceneBundle { cameras, images, sparse_cloud })
}

/// Writes a text model with one `PINHOLE` camera per image. Image ids are
/// taken from the cameras' `image_id` when numeric, else their position + 1.
pub fn write_colmap_text(dir: &Path, cameras: &[Camera], names: &[String], cloud: &PointCloud) -> Result<()> {
    assert_eq!(cameras.len(), names.len());
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut c = String::from("# CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]\n");
    let mut im = String::from("# IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME\n# POINTS2D[] as (X, Y, POINT3D_ID)\n");
    for (i, (cam, name)) in cameras.iter().zip(names).enumerate() {
        let id: u64 = cam.image_id.parse().unwrap_or(i as u64 + 1);
        let q = UnitQuaternion::from_matrix(&cam.rotation);
        let t = &cam.translation;
        writeln!(c, "{} PINHOLE {} {} {:?} {:?} {:?} {:?}", i + 1, cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy).unwrap();
        writeln!(im, "{id} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {} {name}\n", q.w, q.i, q.j, q.k, t.x, t.y, t.z, i + 1).unwrap();
    }
    let mut p = String::from("# POINT3D_ID X Y Z R G B ERROR TRACK[]\n");
    for (i, x) in cloud.positions.iter().enumerate() {
        let rgb = cloud.colors.as_ref().map_or([128; 3], |c| c[i].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        writeln!(p, "{} {:?} {:?} {:?} {} {} {} 0", i + 1, x.x, x.y, x.z, rgb[0], rgb[1], rgb[2]).unwrap();
    }
    write_bytes(&dir.join("cameras.txt"), c.as_bytes())?;
    write_bytes(&dir.join("images.txt"), im.as_bytes())?;
    write_bytes(&dir.join("points3D.txt"), p.as_bytes())
}
