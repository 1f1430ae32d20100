use crate::error::{Error, Result};
use crate::metrics::ssim_with_grad;
use crate::model::ImageBuffer;

/// Photometric loss `(1 - λ)·L1 + λ·(1 - SSIM)/2` and its gradient with
/// respect to `render`. L1 is the mean absolute error over all channels.
///
/// With `lambda == 0` the SSIM term is skipped entirely, so images smaller
/// than the SSIM window are accepted.
pub fn compute_loss(render: &ImageBuffer, truth: &ImageBuffer, lambda: f64) -> Result<(f64, ImageBuffer)> {
    render.same_dims(truth)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} not in [0, 1]")));
    }
    let n = render.data.len() as f64;
    let mut grad = ImageBuffer::new(render.width, render.height);
    let mut l1 = 0.0;
    let w1 = (1.0 - lambda) / n;
    for ((g, r), t) in grad.data.iter_mut().zip(&render.data).zip(&truth.data) {
        let d = r - t;
        l1 += d.abs();
        // sign(0) = 0: identical pixels contribute no gradient.
        *g = if d > 0.0 {
            w1
        } else if d < 0.0 {
            -w1
        } else {
            0.0
        };
    }
    let mut loss = (1.0 - lambda) * l1 / n;
    if lambda > 0.0 {
        let (s, ds) = ssim_with_grad(render, truth)?;
        loss += lambda * (1.0 - s) / 2.0;
        for (g, d) in grad.data.iter_mut().zip(&ds.data) {
            *g -= 0.5 * lambda * d;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::fd;
    use crate::metrics::d_ssim;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, rng: &mut impl Rng) -> ImageBuffer {
        ImageBuffer::from_data(w, h, (0..w * h * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn identical_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(16, 16, &mut rng);
        let (l, g) = compute_loss(&a, &a, 0.2).unwrap();
        assert!(l.abs() < 1e-15);
        assert!(g.data.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn pure_l1_offset() {
        let a = ImageBuffer::filled(4, 4, [0.3, 0.4, 0.5]);
        let b = ImageBuffer::filled(4, 4, [0.4, 0.5, 0.6]);
        let (l, _) = compute_loss(&a, &b, 0.0).unwrap();
        assert!((l - 0.1).abs() < 1e-12);
    }

    #[test]
    fn composes_metric_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = (random(16, 16, &mut rng), random(16, 16, &mut rng));
        let l1 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64;
        let want = 0.8 * l1 + 0.2 * d_ssim(&a, &b).unwrap();
        assert!((compute_loss(&a, &b, 0.2).unwrap().0 - want).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(12, 12, &mut rng);
        let b = random(12, 12, &mut rng);
        let (_, g) = compute_loss(&a, &b, 0.2).unwrap();
        for k in (0..a.data.len()).step_by(7) {
            let n = fd::central(a.data[k], |x| {
                let mut p = a.clone();
                p.data[k] = x;
                compute_loss(&p, &b, 0.2).unwrap().0
            });
            assert!(fd::close(g.data[k], n), "{k}: {} vs {n}", g.data[k]);
        }
    }

    #[test]
    fn mismatched_dims() {
        assert!(compute_loss(&ImageBuffer::new(4, 4), &ImageBuffer::new(4, 5), 0.2).is_err());
    }
}
