//! PLY reading and writing.
//!
//! The reader handles ascii and binary PLY with any scalar property types;
//! list properties (e.g. mesh faces) are parsed and discarded. Gaussian
//! checkpoints use the common splatting vertex layout:
//! `x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3`,
//! where `f_rest` is channel-major (`f_rest_{15c + k - 1}` is coefficient `k`
//! of channel `c`), `opacity` is a logit and `scale_*` are logs.

use std::path::Path;

use nalgebra::Vector3;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::math::sh::{MAX_SH_DEGREE, SH_COEFFS};
use crate::model::{GaussianModel, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

/// Scalar type of a stored property.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyScalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyScalar {
    fn parse(name: &str) -> Option<Self> {
        use PlyScalar::*;
        Some(match name {
            "char" | "int8" => I8,
            "uchar" | "uint8" => U8,
            "short" | "int16" => I16,
            "ushort" | "uint16" => U16,
            "int" | "int32" => I32,
            "uint" | "uint32" => U32,
            "float" | "float32" => F32,
            "double" | "float64" => F64,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        use PlyScalar::*;
        match self {
            I8 => "char",
            U8 => "uchar",
            I16 => "short",
            U16 => "ushort",
            I32 => "int",
            U32 => "uint",
            F32 => "float",
            F64 => "double",
        }
    }

    fn size(self) -> usize {
        use PlyScalar::*;
        match self {
            I8 | U8 => 1,
            I16 | U16 => 2,
            I32 | U32 | F32 => 4,
            F64 => 8,
        }
    }

    fn decode(self, b: &[u8], big_endian: bool) -> f64 {
        macro_rules! num {
            ($t:ty) => {{
                let arr = b.try_into().expect("caller slices exact width");
                (if big_endian { <$t>::from_be_bytes(arr) } else { <$t>::from_le_bytes(arr) }) as f64
            }};
        }
        use PlyScalar::*;
        match self {
            I8 => num!(i8),
            U8 => num!(u8),
            I16 => num!(i16),
            U16 => num!(u16),
            I32 => num!(i32),
            U32 => num!(u32),
            F32 => num!(f32),
            F64 => num!(f64),
        }
    }

    fn encode_le(self, v: f64, out: &mut Vec<u8>) {
        use PlyScalar::*;
        match self {
            I8 => out.extend((v as i8).to_le_bytes()),
            U8 => out.extend((v as u8).to_le_bytes()),
            I16 => out.extend((v as i16).to_le_bytes()),
            U16 => out.extend((v as u16).to_le_bytes()),
            I32 => out.extend((v as i32).to_le_bytes()),
            U32 => out.extend((v as u32).to_le_bytes()),
            F32 => out.extend((v as f32).to_le_bytes()),
            F64 => out.extend(v.to_le_bytes()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum PropKind {
    Scalar(PlyScalar),
    List { count: PlyScalar, item: PlyScalar },
}

#[derive(Clone, Debug, PartialEq)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Clone, Debug, PartialEq)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
    /// One column per property; empty for list properties.
    columns: Vec<Vec<f64>>,
}

impl Element {
    fn column(&self, name: &str) -> Option<&[f64]> {
        self.props.iter().position(|p| p.name == name).map(|i| self.columns[i].as_slice())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct PlyData {
    comments: Vec<String>,
    elements: Vec<Element>,
}

fn ply_err(msg: impl Into<String>) -> Error {
    Error::Ply(msg.into())
}

fn parse_header(bytes: &[u8]) -> Result<(Format, Vec<String>, Vec<Element>, usize)> {
    const END: &[u8] = b"end_header";
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let nl = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| ply_err("header is not terminated"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + nl]).map_err(|_| ply_err("header is not text"))?;
        let line = line.trim_end_matches('\r');
        pos += nl + 1;
        if line.as_bytes() == END {
            break;
        }
        lines.push(line.to_string());
    }
    if lines.first().map(String::as_str) != Some("ply") {
        return Err(ply_err("missing 'ply' magic"));
    }
    let mut format = None;
    let mut comments = Vec::new();
    let mut elements: Vec<Element> = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        let n = i + 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", f, "1.0"] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => Format::BinaryBe,
                    _ => return Err(ply_err(format!("header line {n}: unknown format {f}"))),
                })
            }
            ["comment", ..] => comments.push(line.trim_start()["comment".len()..].trim().to_string()),
            ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| ply_err(format!("header line {n}: bad element count")))?,
                props: Vec::new(),
                columns: Vec::new(),
            }),
            ["property", "list", c, t, name] => {
                let (Some(count), Some(item)) = (PlyScalar::parse(c), PlyScalar::parse(t)) else {
                    return Err(ply_err(format!("header line {n}: unknown list type")));
                };
                let el = elements.last_mut().ok_or_else(|| ply_err(format!("header line {n}: property before element")))?;
                el.props.push(Property { name: name.to_string(), kind: PropKind::List { count, item } });
            }
            ["property", t, name] => {
                let ty = PlyScalar::parse(t).ok_or_else(|| ply_err(format!("header line {n}: unknown type {t}")))?;
                let el = elements.last_mut().ok_or_else(|| ply_err(format!("header line {n}: property before element")))?;
                el.props.push(Property { name: name.to_string(), kind: PropKind::Scalar(ty) });
            }
            _ => return Err(ply_err(format!("header line {n}: unrecognised {line:?}"))),
        }
    }
    let format = format.ok_or_else(|| ply_err("missing format line"))?;
    Ok((format, comments, elements, pos))
}

/// Exact payload size when every property is a scalar.
fn fixed_payload_size(elements: &[Element]) -> Option<usize> {
    let mut total = 0usize;
    for e in elements {
        let mut row = 0;
        for p in &e.props {
            match p.kind {
                PropKind::Scalar(t) => row += t.size(),
                PropKind::List { .. } => return None,
            }
        }
        total = total.checked_add(row.checked_mul(e.count)?)?;
    }
    Some(total)
}

fn parse_ply(bytes: &[u8]) -> Result<PlyData> {
    let (format, comments, mut elements, start) = parse_header(bytes)?;
    let body = &bytes[start..];
    match format {
        Format::Ascii => read_ascii(body, &mut elements)?,
        Format::BinaryLe | Format::BinaryBe => {
            if let Some(expected) = fixed_payload_size(&elements) {
                if body.len() != expected {
                    return Err(ply_err(format!(
                        "payload is {} bytes, expected {expected} from the header",
                        body.len()
                    )));
                }
            }
            read_binary(body, format == Format::BinaryBe, &mut elements)?;
        }
    }
    Ok(PlyData { comments, elements })
}

fn read_binary(body: &[u8], be: bool, elements: &mut [Element]) -> Result<()> {
    let mut pos = 0;
    let mut take = |ty: PlyScalar| -> Result<f64> {
        let end = pos + ty.size();
        let b = body.get(pos..end).ok_or_else(|| ply_err(format!("payload truncated at byte {pos} of {}", body.len())))?;
        pos = end;
        Ok(ty.decode(b, be))
    };
    for el in elements.iter_mut() {
        el.columns = el.props.iter().map(|p| if matches!(p.kind, PropKind::Scalar(_)) { Vec::with_capacity(el.count) } else { Vec::new() }).collect();
        for _ in 0..el.count {
            for (p, col) in el.props.iter().zip(&mut el.columns) {
                match p.kind {
                    PropKind::Scalar(t) => col.push(take(t)?),
                    PropKind::List { count, item } => {
                        let n = take(count)?;
                        for _ in 0..n as usize {
                            take(item)?;
                        }
                    }
                }
            }
        }
    }
    if pos != body.len() {
        return Err(ply_err(format!("{} bytes of trailing data after the last element", body.len() - pos)));
    }
    Ok(())
}

fn read_ascii(body: &[u8], elements: &mut [Element]) -> Result<()> {
    let text = std::str::from_utf8(body).map_err(|_| ply_err("ascii body is not text"))?;
    let mut tokens = text.split_whitespace();
    let mut next = || -> Result<f64> {
        let t = tokens.next().ok_or_else(|| ply_err("ascii body ends early"))?;
        t.parse().map_err(|_| ply_err(format!("bad number {t:?}")))
    };
    for el in elements.iter_mut() {
        el.columns = vec![Vec::new(); el.props.len()];
        for _ in 0..el.count {
            for (p, col) in el.props.iter().zip(&mut el.columns) {
                match p.kind {
                    PropKind::Scalar(_) => col.push(next()?),
                    PropKind::List { .. } => {
                        let n = next()?;
                        for _ in 0..n as usize {
                            next()?;
                        }
                    }
                }
            }
        }
    }
    if tokens.next().is_some() {
        return Err(ply_err("trailing data after the last element"));
    }
    Ok(())
}

/// Binary little-endian PLY with a single `vertex` element.
fn write_vertex_ply(comments: &[String], props: &[(String, PlyScalar)], rows: usize, value: impl Fn(usize, usize) -> f64) -> Vec<u8> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    for c in comments {
        header += &format!("comment {c}\n");
    }
    header += &format!("element vertex {rows}\n");
    for (name, ty) in props {
        header += &format!("property {} {name}\n", ty.name());
    }
    header += "end_header\n";
    let mut out = header.into_bytes();
    let row_size: usize = props.iter().map(|(_, t)| t.size()).sum();
    out.reserve(rows * row_size);
    for r in 0..rows {
        for (k, (_, ty)) in props.iter().enumerate() {
            ty.encode_le(value(r, k), &mut out);
        }
    }
    out
}

const SH_REST: usize = SH_COEFFS - 1;
const SH_DEGREE_COMMENT: &str = "sh_degree_active";

/// Property names of the checkpoint layout, in file order (62 entries).
pub fn gaussian_property_names() -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz"].map(String::from).to_vec();
    names.extend((0..3).map(|c| format!("f_dc_{c}")));
    names.extend((0..3 * SH_REST).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|a| format!("scale_{a}")));
    names.extend((0..4).map(|a| format!("rot_{a}")));
    names
}

/// Value of checkpoint property `k` (index into [`gaussian_property_names`]).
fn gaussian_value(m: &GaussianModel, g: usize, k: usize) -> f64 {
    match k {
        0..3 => m.means[g][k],
        3..6 => 0.0,
        6..9 => m.sh_coeffs[g][0][k - 6],
        9..54 => {
            let i = k - 9;
            m.sh_coeffs[g][1 + i % SH_REST][i / SH_REST]
        }
        54 => m.opacity_logits[g],
        55..58 => m.log_scales[g][k - 55],
        _ => m.rotations[g][k - 58],
    }
}

/// Encodes a checkpoint. `precision` is [`PlyScalar::F64`] for bit-exact
/// round trips or [`PlyScalar::F32`] for viewers that expect `float`.
pub fn encode_gaussians_ply(model: &GaussianModel, precision: PlyScalar) -> Vec<u8> {
    let props: Vec<(String, PlyScalar)> = gaussian_property_names().into_iter().map(|n| (n, precision)).collect();
    let comments = vec![format!("{SH_DEGREE_COMMENT} {}", model.sh_degree_active)];
    write_vertex_ply(&comments, &props, model.len(), |g, k| gaussian_value(model, g, k))
}

pub fn decode_gaussians_ply(bytes: &[u8]) -> Result<GaussianModel> {
    let ply = parse_ply(bytes)?;
    let [vertex] = ply.elements.as_slice() else {
        return Err(ply_err("checkpoint must contain exactly one element"));
    };
    let names = gaussian_property_names();
    let got: Vec<&str> = vertex.props.iter().map(|p| p.name.as_str()).collect();
    if vertex.name != "vertex" || got != names {
        return Err(ply_err(format!(
            "unexpected vertex layout: {} properties, expected the {} of the splatting checkpoint layout",
            got.len(),
            names.len()
        )));
    }
    if vertex.props.iter().any(|p| matches!(p.kind, PropKind::List { .. })) {
        return Err(ply_err("list property in checkpoint"));
    }
    let degree = match ply.comments.iter().find_map(|c| c.strip_prefix(SH_DEGREE_COMMENT)) {
        Some(v) => v.trim().parse::<u32>().ok().filter(|&d| d <= MAX_SH_DEGREE).ok_or_else(|| ply_err(format!("bad {SH_DEGREE_COMMENT} comment")))?,
        None => MAX_SH_DEGREE,
    };
    let col = &vertex.columns;
    let mut m = GaussianModel { sh_degree_active: degree, ..Default::default() };
    for g in 0..vertex.count {
        let mut sh = [[0.0; 3]; SH_COEFFS];
        sh[0] = [0, 1, 2].map(|c| col[6 + c][g]);
        for i in 0..3 * SH_REST {
            sh[1 + i % SH_REST][i / SH_REST] = col[9 + i][g];
        }
        m.push(
            [0, 1, 2].map(|a| col[a][g]),
            [0, 1, 2].map(|a| col[55 + a][g]),
            [0, 1, 2, 3].map(|a| col[58 + a][g]),
            col[54][g],
            sh,
        );
    }
    Ok(m)
}

pub fn save_gaussians_ply(path: &Path, model: &GaussianModel, precision: PlyScalar) -> Result<()> {
    write_bytes(path, &encode_gaussians_ply(model, precision))
}

pub fn load_gaussians_ply(path: &Path) -> Result<GaussianModel> {
    decode_gaussians_ply(&read_bytes(path)?).map_err(|e| Error::Ply(format!("{}: {e}", path.display())))
}

/// Positions as `double`, normals as `double` and colours as `uchar` when present.
pub fn encode_point_cloud_ply(pc: &PointCloud) -> Vec<u8> {
    let mut props: Vec<(String, PlyScalar)> = ["x", "y", "z"].map(|n| (n.to_string(), PlyScalar::F64)).to_vec();
    if pc.normals.is_some() {
        props.extend(["nx", "ny", "nz"].map(|n| (n.to_string(), PlyScalar::F64)));
    }
    if pc.colors.is_some() {
        props.extend(["red", "green", "blue"].map(|n| (n.to_string(), PlyScalar::U8)));
    }
    let has_n = pc.normals.is_some();
    write_vertex_ply(&[], &props, pc.len(), |i, k| match (k, has_n) {
        (0..3, _) => pc.positions[i][k],
        (3..6, true) => pc.normals.as_ref().unwrap()[i][k - 3],
        _ => {
            let c = k - if has_n { 6 } else { 3 };
            (pc.colors.as_ref().unwrap()[i][c].clamp(0.0, 1.0) * 255.0).round()
        }
    })
}

/// Reads the `vertex` element: `x y z`, plus `nx ny nz` and `red green blue`
/// when all three are present. Integer colours are scaled by 1/255.
pub fn decode_point_cloud_ply(bytes: &[u8]) -> Result<PointCloud> {
    let ply = parse_ply(bytes)?;
    let v = ply.elements.iter().find(|e| e.name == "vertex").ok_or_else(|| ply_err("no vertex element"))?;
    let triple = |names: [&str; 3]| -> Option<[&[f64]; 3]> {
        Some([v.column(names[0])?, v.column(names[1])?, v.column(names[2])?])
    };
    let [x, y, z] = triple(["x", "y", "z"]).ok_or_else(|| ply_err("vertex element lacks x, y, z"))?;
    let positions = (0..v.count).map(|i| Vector3::new(x[i], y[i], z[i])).collect();
    let normals = triple(["nx", "ny", "nz"]).map(|[a, b, c]| (0..v.count).map(|i| Vector3::new(a[i], b[i], c[i])).collect());
    let is_float = v.props.iter().any(|p| p.name == "red" && matches!(p.kind, PropKind::Scalar(PlyScalar::F32 | PlyScalar::F64)));
    let scale = if is_float { 1.0 } else { 1.0 / 255.0 };
    let colors = triple(["red", "green", "blue"]).map(|[r, g, b]| (0..v.count).map(|i| [r[i] * scale, g[i] * scale, b[i] * scale]).collect());
    Ok(PointCloud { positions, colors, normals })
}

pub fn save_point_cloud_ply(path: &Path, pc: &PointCloud) -> Result<()> {
    write_bytes(path, &encode_point_cloud_ply(pc))
}

pub fn load_point_cloud_ply(path: &Path) -> Result<PointCloud> {
    decode_point_cloud_ply(&read_bytes(path)?).map_err(|e| Error::Ply(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IDENTITY_QUAT;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_model(n: usize, seed: u64) -> GaussianModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = GaussianModel { sh_degree_active: 2, ..Default::default() };
        for _ in 0..n {
            let mut r = || rng.random_range(-3.0..3.0);
            let sh = std::array::from_fn(|_| [r(), r(), r()]);
            m.push([r(), r(), r()], [r(), r(), r()], [r(), r(), r(), r()], r(), sh);
        }
        m
    }

    #[test]
    fn single_gaussian_layout() {
        let mut m = GaussianModel::default();
        let mut sh = [[0.0; 3]; SH_COEFFS];
        sh[2][1] = 7.0;
        m.push([1.0, 2.0, 3.0], [0.0; 3], IDENTITY_QUAT, 0.5, sh);
        let bytes = encode_gaussians_ply(&m, PlyScalar::F32);
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.contains("element vertex 1\n"));
        assert_eq!(text.matches("property float ").count(), 62);
        let ply = parse_ply(&bytes).unwrap();
        // Coefficient 2 of the green channel is f_rest_{15 + 1}.
        assert_eq!(ply.elements[0].column("f_rest_16").unwrap(), &[7.0]);
        assert_eq!(ply.elements[0].column("rot_0").unwrap(), &[1.0]);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = random_model(17, 1);
        assert_eq!(decode_gaussians_ply(&encode_gaussians_ply(&m, PlyScalar::F64)).unwrap(), m);
        let empty = GaussianModel::default();
        assert_eq!(decode_gaussians_ply(&encode_gaussians_ply(&empty, PlyScalar::F64)).unwrap(), empty);
    }

    #[test]
    fn float_checkpoints_load() {
        let m = random_model(3, 2);
        let back = decode_gaussians_ply(&encode_gaussians_ply(&m, PlyScalar::F32)).unwrap();
        assert!((back.means[1][2] - m.means[1][2]).abs() < 1e-6);
    }

    #[test]
    fn truncation_and_trailing_data() {
        let bytes = encode_gaussians_ply(&random_model(2, 3), PlyScalar::F64);
        let msg = decode_gaussians_ply(&bytes[..bytes.len() - 5]).unwrap_err().to_string();
        assert!(msg.contains(&format!("{} bytes, expected {}", 2 * 62 * 8 - 5, 2 * 62 * 8)), "{msg}");
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_gaussians_ply(&extra).is_err());
        let bad = String::from_utf8_lossy(&bytes).replacen("element vertex 2", "element vertex x", 1);
        assert!(decode_gaussians_ply(bad.as_bytes()).is_err());
    }

    #[test]
    fn point_cloud_round_trip() {
        let pc = PointCloud {
            positions: vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(-1.0, 5.0, 1e-9)],
            colors: Some(vec![[1.0, 0.0, 128.0 / 255.0], [0.2, 0.4, 0.6]]),
            normals: Some(vec![Vector3::z(), Vector3::x()]),
        };
        let back = decode_point_cloud_ply(&encode_point_cloud_ply(&pc)).unwrap();
        assert_eq!(back.positions, pc.positions);
        assert_eq!(back.normals, pc.normals);
        assert_eq!(back.colors.as_ref().unwrap()[0], [1.0, 0.0, 128.0 / 255.0]);
        let plain = PointCloud::from_positions(pc.positions.clone());
        assert_eq!(decode_point_cloud_ply(&encode_point_cloud_ply(&plain)).unwrap(), plain);
    }

    #[test]
    fn ascii_with_faces() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255 0 0\n1 2 3 0 0 255\n3 0 1 1\n";
        let pc = decode_point_cloud_ply(text.as_bytes()).unwrap();
        assert_eq!(pc.positions[1], Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(pc.colors.unwrap()[1], [0.0, 0.0, 1.0]);
        assert!(pc.normals.is_none());
        assert!(decode_point_cloud_ply(format!("{text}9\n").as_bytes()).is_err());
    }
}
