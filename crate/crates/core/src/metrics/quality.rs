use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Peak signal-to-noise ratio in dB for peak 1.0. Identical inputs give
/// `f64::INFINITY`.
pub fn psnr(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape("psnr", gt.shape(), pred.shape()));
    }
    let mse = mse(pred, gt);
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn mse(a: &Tensor, b: &Tensor) -> f64 {
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum();
    sum / a.len().max(1) as f64
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Valid-mode separable filtering of one plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| taps[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| taps[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5, no padding) for data
/// range 1, computed per channel and averaged.
pub fn ssim(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape("ssim", gt.shape(), pred.shape()));
    }
    let s = pred.shape();
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            s.w, s.h
        )));
    }
    let taps = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for n in 0..s.n {
        for c in 0..s.c {
            let x: Vec<f64> = pred.plane(n, c).iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = gt.plane(n, c).iter().map(|&v| v as f64).collect();
            let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
            let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
            let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
            let mx = filter_valid(&x, s.h, s.w, &taps);
            let my = filter_valid(&y, s.h, s.w, &taps);
            let exx = filter_valid(&xx, s.h, s.w, &taps);
            let eyy = filter_valid(&yy, s.h, s.w, &taps);
            let exy = filter_valid(&xy, s.h, s.w, &taps);
            let mut sum = 0.0;
            for i in 0..mx.len() {
                let (a, b) = (mx[i], my[i]);
                let vx = exx[i] - a * a;
                let vy = eyy[i] - b * b;
                let cov = exy[i] - a * b;
                sum += ((2.0 * a * b + c1) * (2.0 * cov + c2))
                    / ((a * a + b * b + c1) * (vx + vy + c2));
            }
            total += sum / mx.len() as f64;
        }
    }
    Ok(total / (s.n * s.c) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psnr_closed_form() {
        let a = Tensor::full(Shape::new(1, 3, 8, 8), 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&b, &a).unwrap() - 20.0).abs() < 1e-5);
    }

    #[test]
    fn ssim_self_and_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = Shape::new(1, 3, 32, 32);
        let a = Tensor::uniform(s, 0.0, 1.0, &mut rng);
        let b = Tensor::uniform(s, 0.0, 1.0, &mut rng);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!(ssim(&a, &b).unwrap() < 0.2);
        assert!(ssim(
            &Tensor::zeros(Shape::new(1, 3, 10, 40)),
            &Tensor::zeros(Shape::new(1, 3, 10, 40))
        )
        .is_err());
    }

    #[test]
    fn ssim_constant_offset_is_luminance_term() {
        // Constant images: variances vanish so only the luminance term remains.
        let a = Tensor::full(Shape::new(1, 1, 16, 16), 0.4);
        let b = a.map(|v| v + 0.1);
        let (mx, my) = (0.4f64, 0.5f64);
        let c1 = SSIM_K1 * SSIM_K1;
        let expected = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        let got = ssim(&b, &a).unwrap();
        assert!(got < 1.0);
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }
}
