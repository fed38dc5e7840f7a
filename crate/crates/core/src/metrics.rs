//! PSNR and SSIM on the 0–255 intensity scale.

use crate::error::{Error, Result};
use crate::synth::ImageBuf;

/// Reported PSNR when the mean squared error is exactly zero; keeps CSV
/// output free of infinities.
pub const PSNR_CAP: f64 = 99.0;

/// Peak signal-to-noise ratio `10·log10(peak² / MSE)` over all elements.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "psnr operands differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Usage("psnr of empty buffers".into()));
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_L: f64 = 255.0;

/// ITU-R 601 luma from planar RGB.
fn luma(img: &ImageBuf) -> Vec<f64> {
    let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
    r.iter()
        .zip(g)
        .zip(b)
        .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect()
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - half;
            let dx = x as f64 - half;
            w.push((-(dy * dy + dx * dx) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean local SSIM between two grayscale planes (valid windows only,
/// 11×11 Gaussian weighting, σ = 1.5, dynamic range 255).
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::Shape("ssim operand size mismatch".into()));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Config(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window"
        )));
    }
    let window = gaussian_window();
    let c1 = (SSIM_K1 * SSIM_L) * (SSIM_K1 * SSIM_L);
    let c2 = (SSIM_K2 * SSIM_L) * (SSIM_K2 * SSIM_L);

    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            for wy in 0..SSIM_WINDOW {
                for wx in 0..SSIM_WINDOW {
                    let wv = window[wy * SSIM_WINDOW + wx];
                    mu_a += wv * a[(y0 + wy) * w + x0 + wx];
                    mu_b += wv * b[(y0 + wy) * w + x0 + wx];
                }
            }
            let mut var_a = 0.0;
            let mut var_b = 0.0;
            let mut cov = 0.0;
            for wy in 0..SSIM_WINDOW {
                for wx in 0..SSIM_WINDOW {
                    let wv = window[wy * SSIM_WINDOW + wx];
                    let da = a[(y0 + wy) * w + x0 + wx] - mu_a;
                    let db = b[(y0 + wy) * w + x0 + wx] - mu_b;
                    var_a += wv * da * da;
                    var_b += wv * db * db;
                    cov += wv * da * db;
                }
            }
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM between two RGB images, computed on the luma plane.
pub fn ssim(a: &ImageBuf, b: &ImageBuf) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Shape(format!(
            "ssim images differ in size: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    ssim_plane(&luma(a), &luma(b), a.height(), a.width())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sample::sample_image;

    #[test]
    fn identical_images_hit_the_cap() {
        let img = sample_image(32, 32, 1);
        assert_eq!(psnr(img.data(), img.data(), 255.0).unwrap(), PSNR_CAP);
    }

    #[test]
    fn uniform_difference_closed_form() {
        // 20·log10(255/16) = 24.0486 dB.
        let a = vec![100.0; 300];
        let b = vec![116.0; 300];
        let p = psnr(&a, &b, 255.0).unwrap();
        assert!((p - 24.05).abs() < 0.01, "psnr {p}");
    }

    #[test]
    fn psnr_matches_direct_formula_and_is_symmetric() {
        let a = sample_image(24, 24, 2);
        let b = sample_image(24, 24, 3);
        let p = psnr(a.data(), b.data(), 255.0).unwrap();
        let mse = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / a.data().len() as f64;
        let want = 10.0 * (255.0 * 255.0 / mse).log10();
        assert!((p - want).abs() < 1e-9);
        assert_eq!(p, psnr(b.data(), a.data(), 255.0).unwrap());
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let img = sample_image(32, 32, 5);
        let s = ssim(&img, &img).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_vs_constant_closed_form() {
        // Zero variance everywhere: ssim = (2 μa μb + C1)/(μa² + μb² + C1).
        let a = ImageBuf::constant(16, 16, 120.0);
        let b = ImageBuf::constant(16, 16, 140.0);
        let c1 = (0.01 * 255.0) * (0.01 * 255.0);
        let want = (2.0 * 120.0 * 140.0 + c1) / (120.0 * 120.0 + 140.0 * 140.0 + c1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
    }

    #[test]
    fn inversion_destroys_structure() {
        let img = sample_image(48, 48, 8);
        let mut inverted = img.clone();
        for v in inverted.data_mut() {
            *v = 255.0 - *v;
        }
        let s = ssim(&img, &inverted).unwrap();
        assert!(s < 0.2, "ssim of inverted image {s}");
    }

    #[test]
    fn too_small_images_are_rejected() {
        let img = ImageBuf::constant(8, 8, 1.0);
        assert!(matches!(ssim(&img, &img), Err(Error::Config(_))));
    }
}
