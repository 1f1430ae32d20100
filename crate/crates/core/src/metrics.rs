//! Full-reference image quality metrics.
//!
//! SSIM uses an 11x11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03 and a
//! dynamic range of 1. It is computed per channel over the valid region (no
//! padding) and averaged over channels.

use crate::error::{Error, Result};
use crate::model::ImageBuffer;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_dims(b)?;
    if a.data.is_empty() {
        return Err(Error::EmptyInput("image"));
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data.len() as f64)
}

/// PSNR in dB; identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / m).log10() })
}

fn window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Single-channel plane.
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

fn channel(img: &ImageBuffer, ch: usize) -> Plane {
    Plane { w: img.width, h: img.height, v: img.data.iter().skip(ch).step_by(3).copied().collect() }
}

/// Separable valid-region filtering: output is `(w - 10) x (h - 10)`.
fn filter_valid(p: &Plane, k: &[f64; SSIM_WINDOW]) -> Plane {
    let ow = p.w + 1 - SSIM_WINDOW;
    let oh = p.h + 1 - SSIM_WINDOW;
    let mut tmp = vec![0.0; ow * p.h];
    for y in 0..p.h {
        let row = &p.v[y * p.w..(y + 1) * p.w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    Plane { w: ow, h: oh, v: out }
}

/// Adjoint of [`filter_valid`]: scatters a `(w - 10) x (h - 10)` map back to `w x h`.
fn filter_valid_adjoint(p: &Plane, k: &[f64; SSIM_WINDOW], w: usize, h: usize) -> Vec<f64> {
    let ow = p.w;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..p.h {
        for x in 0..ow {
            let v = p.v[y * ow + x];
            for i in 0..SSIM_WINDOW {
                tmp[(y + i) * ow + x] += k[i] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for i in 0..SSIM_WINDOW {
                out[y * w + x + i] += k[i] * v;
            }
        }
    }
    out
}

fn check_size(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    a.same_dims(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::ImageTooSmall { width: a.width, height: a.height, window: SSIM_WINDOW });
    }
    Ok(())
}

/// Local SSIM statistics for one channel.
struct ChannelStats {
    mu_a: Plane,
    mu_b: Plane,
    var_a: Vec<f64>,
    var_b: Vec<f64>,
    cov_ab: Vec<f64>,
}

fn channel_stats(a: &Plane, b: &Plane, k: &[f64; SSIM_WINDOW]) -> ChannelStats {
    let sq = |p: &Plane, q: &Plane| Plane { w: p.w, h: p.h, v: p.v.iter().zip(&q.v).map(|(x, y)| x * y).collect() };
    let mu_a = filter_valid(a, k);
    let mu_b = filter_valid(b, k);
    let e_aa = filter_valid(&sq(a, a), k);
    let e_bb = filter_valid(&sq(b, b), k);
    let e_ab = filter_valid(&sq(a, b), k);
    let n = mu_a.v.len();
    let var_a = (0..n).map(|i| e_aa.v[i] - mu_a.v[i] * mu_a.v[i]).collect();
    let var_b = (0..n).map(|i| e_bb.v[i] - mu_b.v[i] * mu_b.v[i]).collect();
    let cov_ab = (0..n).map(|i| e_ab.v[i] - mu_a.v[i] * mu_b.v[i]).collect();
    ChannelStats { mu_a, mu_b, var_a, var_b, cov_ab }
}

const C1: f64 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
const C2: f64 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

fn ssim_impl(a: &ImageBuffer, b: &ImageBuffer, want_grad: bool) -> Result<(f64, Option<ImageBuffer>)> {
    check_size(a, b)?;
    let k = window();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| ImageBuffer::new(a.width, a.height));
    for ch in 0..3 {
        let pa = channel(a, ch);
        let pb = channel(b, ch);
        let st = channel_stats(&pa, &pb, &k);
        let n = st.mu_a.v.len();
        let norm = 1.0 / (n * 3) as f64;
        let mut sum = 0.0;
        let (mut map_mu, mut map_var, mut map_cov) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (ma, mb) = (st.mu_a.v[i], st.mu_b.v[i]);
            let a1 = 2.0 * ma * mb + C1;
            let a2 = 2.0 * st.cov_ab[i] + C2;
            let b1 = ma * ma + mb * mb + C1;
            let b2 = st.var_a[i] + st.var_b[i] + C2;
            let s = (a1 * a2) / (b1 * b2);
            sum += s;
            if want_grad {
                let d_mu = 2.0 * mb * a2 / (b1 * b2) - s * 2.0 * ma / b1;
                let d_var = -s / b2;
                let d_cov = 2.0 * a1 / (b1 * b2);
                map_mu[i] = (d_mu - 2.0 * ma * d_var - mb * d_cov) * norm;
                map_var[i] = d_var * norm;
                map_cov[i] = d_cov * norm;
            }
        }
        total += sum / n as f64;
        if let Some(g) = grad.as_mut() {
            let (w, h) = (st.mu_a.w, st.mu_a.h);
            let back = |v: Vec<f64>| filter_valid_adjoint(&Plane { w, h, v }, &k, pa.w, pa.h);
            let t_mu = back(map_mu);
            let t_var = back(map_var);
            let t_cov = back(map_cov);
            for p in 0..pa.v.len() {
                g.data[p * 3 + ch] = t_mu[p] + 2.0 * pa.v[p] * t_var[p] + pb.v[p] * t_cov[p];
            }
        }
    }
    Ok((total / 3.0, grad))
}

pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    ssim_impl(a, b, false).map(|(v, _)| v)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    ssim_impl(a, b, true).map(|(v, g)| (v, g.expect("gradient requested")))
}

/// Structural dissimilarity `(1 - SSIM) / 2`.
pub fn d_ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok((1.0 - ssim(a, b)?) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_data(w, h, (0..w * h * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = random(8, 5, 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.data.iter_mut().for_each(|v| *v += 0.1);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        assert!(mse(&a, &random(5, 8, 1)).is_err());

        let b = random(8, 5, 2);
        let mut naive = 0.0;
        for y in 0..5 {
            for x in 0..8 {
                let (p, q) = (a.get(x, y), b.get(x, y));
                for c in 0..3 {
                    naive += (p[c] - q[c]).powi(2);
                }
            }
        }
        assert!((mse(&a, &b).unwrap() - naive / 120.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_examples() {
        let a = ImageBuffer::filled(4, 4, [0.5; 3]);
        let b = ImageBuffer::filled(4, 4, [0.6; 3]);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let clean = random(16, 16, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise: Vec<f64> = (0..clean.data.len()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let values: Vec<f64> = [0.01, 0.02, 0.05]
            .iter()
            .map(|amp| {
                let mut n = clean.clone();
                n.data.iter_mut().zip(&noise).for_each(|(v, e)| *v += amp * e);
                psnr(&clean, &n, 1.0).unwrap()
            })
            .collect();
        assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = random(16, 16, 5);
        let b = random(16, 16, 6);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert_eq!(d_ssim(&a, &a).unwrap(), 0.0);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() <= 1e-12);
        let d = d_ssim(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn constant_images_closed_form() {
        let a = ImageBuffer::filled(16, 16, [0.2; 3]);
        let b = ImageBuffer::filled(16, 16, [0.8; 3]);
        let c1 = 0.01f64 * 0.01;
        let want = (2.0 * 0.2 * 0.8 + c1) / (0.2f64 * 0.2 + 0.8 * 0.8 + c1);
        assert!((ssim(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn small_image_rejected() {
        let a = ImageBuffer::new(10, 40);
        assert!(matches!(ssim(&a, &a), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = random(16, 16, 7);
        let b = random(16, 16, 8);
        let (_, g) = ssim_with_grad(&a, &b).unwrap();
        let h = 1e-4;
        for i in 0..a.data.len() {
            let mut p = a.clone();
            p.data[i] += h;
            let up = ssim(&p, &b).unwrap();
            p.data[i] -= 2.0 * h;
            let down = ssim(&p, &b).unwrap();
            let num = (up - down) / (2.0 * h);
            let diff = (num - g.data[i]).abs();
            assert!(diff <= 1e-6 || diff <= 1e-3 * num.abs().max(g.data[i].abs()), "{i}: {} vs {num}", g.data[i]);
        }
    }
}
