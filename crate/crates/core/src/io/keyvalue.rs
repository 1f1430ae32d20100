//! Flat `key = value` files: config, camera poses and rigid transforms.
//!
//! `#` starts a comment; blank lines are ignored; keys may not repeat.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::{read_text, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::math::quat_to_rotation;
use crate::model::Camera;

/// `(line number, key, value)` for every assignment in `text`.
pub(crate) fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config { line: line_no, msg: format!("expected key = value, got {line:?}") });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Config { line: line_no, msg: format!("empty key or value in {line:?}") });
        }
        if out.iter().any(|(_, seen, _)| seen == k) {
            return Err(Error::Config { line: line_no, msg: format!("duplicate key {k:?}") });
        }
        out.push((line_no, k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Parses exactly the numeric keys in `keys`; missing or unknown keys are errors.
fn parse_numbers(text: &str, keys: &[&str]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (line, k, v) in parse_pairs(text)? {
        if !keys.contains(&k.as_str()) {
            return Err(Error::Config { line, msg: format!("unknown key {k:?}") });
        }
        let x: f64 = v.parse().map_err(|_| Error::Config { line, msg: format!("bad number {v:?} for {k}") })?;
        out.insert(k, x);
    }
    if let Some(missing) = keys.iter().find(|k| !out.contains_key(**k)) {
        return Err(Error::Config { line: 0, msg: format!("missing key {missing:?}") });
    }
    Ok(out)
}

const POSE_KEYS: [&str; 13] = ["width", "height", "fx", "fy", "cx", "cy", "qw", "qx", "qy", "qz", "tx", "ty", "tz"];

/// Camera from a pose file: intrinsics plus the world-to-camera rotation
/// (`qw qx qy qz`) and translation, as in COLMAP.
pub fn parse_pose(text: &str, image_id: &str) -> Result<Camera> {
    let m = parse_numbers(text, &POSE_KEYS)?;
    let dim = |k: &str| -> Result<u32> {
        let v = m[k];
        if v.fract() != 0.0 || !(1.0..=u32::MAX as f64).contains(&v) {
            return Err(Error::InvalidCamera(format!("{k} must be a positive integer, got {v}")));
        }
        Ok(v as u32)
    };
    let q = [m["qw"], m["qx"], m["qy"], m["qz"]];
    Camera::new(
        dim("width")?,
        dim("height")?,
        m["fx"],
        m["fy"],
        m["cx"],
        m["cy"],
        quat_to_rotation(&q)?,
        Vector3::new(m["tx"], m["ty"], m["tz"]),
        image_id,
    )
}

pub fn format_pose(cam: &Camera) -> String {
    let q = UnitQuaternion::from_matrix(&cam.rotation);
    let t = &cam.translation;
    format!(
        "width = {}\nheight = {}\nfx = {:?}\nfy = {:?}\ncx = {:?}\ncy = {:?}\nqw = {:?}\nqx = {:?}\nqy = {:?}\nqz = {:?}\ntx = {:?}\nty = {:?}\ntz = {:?}\n",
        cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy, q.w, q.i, q.j, q.k, t.x, t.y, t.z
    )
}

pub fn read_pose(path: &Path) -> Result<Camera> {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_pose(&read_text(path)?, &id).map_err(|e| match e {
        Error::Config { line, msg } => Error::parse(path, line, msg),
        e => e,
    })
}

pub fn write_pose(path: &Path, cam: &Camera) -> Result<()> {
    write_bytes(path, format_pose(cam).as_bytes())
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn transform_keys() -> Vec<String> {
    let mut keys: Vec<String> = AXES.iter().flat_map(|r| AXES.iter().map(move |c| format!("r_{r}{c}"))).collect();
    keys.extend(AXES.iter().map(|a| format!("t_{a}")));
    keys
}

/// Rigid transform from `r_xx .. r_zz` (row-major rotation) and `t_x t_y t_z`.
pub fn parse_transform(text: &str) -> Result<RigidTransform> {
    let keys = transform_keys();
    let key_refs: Vec<&str> = keys.iter().map(String::as_str).collect();
    let m = parse_numbers(text, &key_refs)?;
    Ok(RigidTransform {
        rotation: Matrix3::from_fn(|r, c| m[&keys[3 * r + c]]),
        translation: Vector3::from_fn(|a, _| m[&keys[9 + a]]),
    })
}

/// One `key=value` line per entry, values in shortest round-trip form.
pub fn format_transform(t: &RigidTransform) -> String {
    let keys = transform_keys();
    let values = (0..9).map(|i| t.rotation[(i / 3, i % 3)]).chain(t.translation.iter().copied());
    keys.iter().zip(values).map(|(k, v)| format!("{k}={v:e}\n")).collect()
}

pub fn read_transform(path: &Path) -> Result<RigidTransform> {
    parse_transform(&read_text(path)?).map_err(|e| match e {
        Error::Config { line, msg } => Error::parse(path, line, msg),
        e => e,
    })
}

pub fn write_transform(path: &Path, t: &RigidTransform) -> Result<()> {
    write_bytes(path, format_transform(t).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn pose_round_trip() {
        let cam = Camera::look_at(Vector3::new(3.0, 1.0, 2.0), Vector3::zeros(), Vector3::z(), 64, 48, 50.0, "p").unwrap();
        let back = parse_pose(&format_pose(&cam), "p").unwrap();
        assert_eq!((back.width, back.height, back.fx, back.cy), (64, 48, 50.0, 24.0));
        assert!((back.rotation - cam.rotation).abs().max() < 1e-12);
        assert_eq!(back.translation, cam.translation);
    }

    #[test]
    fn pose_errors() {
        let text = format_pose(&Camera::look_at(Vector3::new(3.0, 0.0, 0.0), Vector3::zeros(), Vector3::z(), 8, 8, 5.0, "p").unwrap());
        assert!(matches!(parse_pose(&text.replace("fx", "f_x"), "p"), Err(Error::Config { line: 3, .. })));
        assert!(matches!(parse_pose(&(text.clone() + "fx = 1\n"), "p"), Err(Error::Config { line: 14, .. })));
        assert!(parse_pose(&text.replace("width = 8", "width = 8.5"), "p").is_err());
        assert!(parse_pose(&text.replace("tz = ", "# tz = "), "p").is_err());
    }

    #[test]
    fn transform_round_trip_is_exact() {
        let t = RigidTransform {
            rotation: Rotation3::from_euler_angles(0.1, 0.2, 0.3).into_inner(),
            translation: Vector3::new(0.1, -2.0, 1e-7),
        };
        let text = format_transform(&t);
        assert!(text.lines().all(|l| l.split_once('=').unwrap().1.parse::<f64>().is_ok()));
        assert_eq!(parse_transform(&text).unwrap(), t);
    }

    #[test]
    fn pairs_syntax() {
        let p = parse_pairs("# header\n a = 1 # trailing\n\nb=2\n").unwrap();
        assert_eq!(p, vec![(2, "a".into(), "1".into()), (4, "b".into(), "2".into())]);
        assert!(matches!(parse_pairs("a = 1\nnonsense\n"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_pairs("a = 1\na = 2\n"), Err(Error::Config { line: 2, .. })));
    }
}
