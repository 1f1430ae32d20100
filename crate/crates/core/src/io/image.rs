//! 8-bit RGB images. Values map to `[0, 1]` as `v / 255` on load and
//! `round(clamp(v) · 255)` on save.

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::model::ImageBuffer;

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<ImageBuffer> {
    ImageBuffer::from_data(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn encode_ppm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| to_u8(v)));
    out
}

/// Parses a binary (P6) PPM with maxval 255.
pub fn decode_ppm(bytes: &[u8]) -> Result<ImageBuffer> {
    let bad = |msg: &str| Error::Image(msg.to_string());
    match bytes.get(..2) {
        Some(b"P6") => {}
        Some([b'P', b'1'..=b'7']) => return Err(bad("unsupported PPM variant (only P6 is supported)")),
        _ => return Err(bad("not a PPM file")),
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Whitespace and comments between header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = text.parse().map_err(|_| bad("malformed PPM header"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Image(format!("unsupported PPM maxval {maxval} (only 255 is supported)")));
    }
    if width == 0 || height == 0 {
        return Err(bad("PPM has zero size"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("malformed PPM header"));
    }
    let data = &bytes[pos + 1..];
    let expected = width * height * 3;
    if data.len() != expected {
        return Err(Error::Image(format!("PPM payload is {} bytes, expected {expected}", data.len())));
    }
    from_rgb8(width, height, data)
}

pub fn save_ppm(path: &Path, img: &ImageBuffer) -> Result<()> {
    write_bytes(path, &encode_ppm(img))
}

pub fn load_ppm(path: &Path) -> Result<ImageBuffer> {
    decode_ppm(&read_bytes(path)?)
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
    let png_err = |e: png::EncodingError| Error::Image(e.to_string());
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(out)
}

/// Decodes 8- or 16-bit grey, grey+alpha, RGB or RGBA PNGs; alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let png_err = |e: png::DecodingError| Error::Image(e.to_string());
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Image("PNG too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let px = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => px.to_vec(),
        png::ColorType::Rgba => px.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => px.iter().flat_map(|&g| [g; 3]).collect(),
        png::ColorType::GrayscaleAlpha => px.chunks_exact(2).flat_map(|p| [p[0]; 3]).collect(),
        other => return Err(Error::Image(format!("unsupported PNG colour type {other:?}"))),
    };
    from_rgb8(w, h, &rgb)
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Loads a PPM or PNG, chosen by file signature.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = read_bytes(path)?;
    let res = if bytes.starts_with(b"\x89PNG") { decode_png(&bytes) } else { decode_ppm(&bytes) };
    res.map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Saves as PNG when the extension is `.png`, PPM otherwise.
pub fn save_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    let bytes = if is_png(path) { encode_png(img)? } else { encode_ppm(img) };
    write_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        ImageBuffer::from_data(w, h, (0..w * h * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn white_pixel() {
        let img = decode_ppm(b"P6\n1 1\n255\n\xff\xff\xff").unwrap();
        assert_eq!(img.get(0, 0), [1.0; 3]);
    }

    #[test]
    fn header_comments() {
        let img = decode_ppm(b"P6 # c\n# another\n2 1 255\n\x00\x00\x00\xff\x80\x00").unwrap();
        assert_eq!(img.get(1, 0), [1.0, 128.0 / 255.0, 0.0]);
    }

    #[test]
    fn ppm_round_trip_within_quantization() {
        let img = random(7, 5);
        let back = decode_ppm(&encode_ppm(&img)).unwrap();
        let err = img.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 0.5 / 255.0 + 1e-12, "{err}");
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let img = random(9, 4);
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        let err = img.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 0.5 / 255.0 + 1e-12, "{err}");
    }

    #[test]
    fn rejections() {
        let msg = decode_ppm(b"P5\n1 1\n255\n\x00").unwrap_err().to_string();
        assert!(msg.contains("unsupported PPM variant"), "{msg}");
        assert!(decode_ppm(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").is_err());
        assert!(decode_ppm(b"P6\n1 1\n255\n\x00\x00").is_err());
        assert!(decode_ppm(b"P6\n1 1\n255\n\x00\x00\x00\x00").is_err());
        assert!(decode_ppm(b"GIF89a").is_err());
    }
}
