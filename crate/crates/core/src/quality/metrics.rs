use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::Image;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 1e-4;
const C2: f64 = 9e-4;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.same_dims(b) {
        Ok(())
    } else {
        Err(Error::shape(
            format!("{}x{}x{}", a.height(), a.width(), a.channels()),
            format!("{}x{}x{}", b.height(), b.width(), b.channels()),
        ))
    }
}

/// Peak signal-to-noise ratio in dB for unit-range images, capped at
/// [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sum / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * libm::log10(mse)).min(PSNR_CAP))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let t = i as f64 - r;
        *v = libm::exp(-t * t / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable valid-mode filtering of one plane.
fn filter(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * plane[y * w + x + i];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * rows[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), averaged over
/// channels and all positions where the window fits.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (h, w, ch) = (a.height(), a.width(), a.channels());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::shape(
            format!("at least {SSIM_WINDOW}x{SSIM_WINDOW}"),
            format!("{h}x{w}"),
        ));
    }
    let k = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ch {
        let pa: Vec<f64> = a.data().iter().skip(c).step_by(ch).map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.data().iter().skip(c).step_by(ch).map(|&v| v as f64).collect();
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
        let mu_a = filter(&pa, h, w, &k);
        let mu_b = filter(&pb, h, w, &k);
        let e_aa = filter(&prod(&pa, &pa), h, w, &k);
        let e_bb = filter(&prod(&pb, &pb), h, w, &k);
        let e_ab = filter(&prod(&pa, &pb), h, w, &k);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_values() {
        let a = Image::filled(4, 4, 1, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = Image::filled(4, 4, 1, 0.6);
        // MSE 0.01 up to f32 rounding of 0.6
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        let zero = Image::filled(4, 4, 3, 0.0);
        let one = Image::filled(4, 4, 3, 1.0);
        assert_eq!(psnr(&zero, &one).unwrap(), 0.0);
        assert!(psnr(&a, &zero).is_err());
    }

    #[test]
    fn ssim_of_constants_is_the_luminance_term() {
        let a = Image::filled(16, 16, 1, 0.25);
        let b = Image::filled(16, 16, 1, 0.75);
        let expect = (2.0 * 0.25 * 0.75 + 1e-4) / (0.25f64 * 0.25 + 0.75 * 0.75 + 1e-4);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-9);
        assert!((expect - 0.6).abs() < 1e-3);
    }

    #[test]
    fn ssim_identity_and_small_images() {
        let a = Image::from_fn(20, 17, 3, |y, x, c| ((y * x + c) % 5) as f32 / 4.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let small = Image::filled(10, 30, 1, 0.5);
        assert!(matches!(ssim(&small, &small), Err(Error::Shape { .. })));
    }

    #[test]
    fn window_is_normalized_and_symmetric() {
        let k = gaussian_window();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(k[i], k[SSIM_WINDOW - 1 - i]);
        }
    }
}
