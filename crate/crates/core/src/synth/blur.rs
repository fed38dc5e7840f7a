//! Separable Gaussian blur with reflective padding.

use crate::synth::image::{ImageBuf, CHANNELS};

/// Normalized 1-D Gaussian taps with radius `ceil(3σ)` (at least 1 for any
/// positive σ).
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k = Vec::with_capacity(2 * radius + 1);
    let denom = 2.0 * sigma * sigma;
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        k.push((-d * d / denom).exp());
    }
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Mirror an out-of-range index back into `[0, n)` (edge-repeating
/// reflection: -1 -> 0, n -> n-1).
#[inline]
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Gaussian blur; `sigma = 0` returns the input unchanged. The kernel sums
/// to one, so constant images are fixed points.
pub fn gaussian_blur(img: &ImageBuf, sigma: f64) -> ImageBuf {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let (h, w) = (img.height(), img.width());
    let mut out = ImageBuf::new(h, w);
    let mut row_pass = vec![0.0; h * w];

    for c in 0..CHANNELS {
        let src = img.channel(c);
        // Horizontal pass.
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (t, kv) in kernel.iter().enumerate() {
                    let sx = reflect(x as isize + t as isize - radius as isize, w);
                    acc += kv * src[y * w + sx];
                }
                row_pass[y * w + x] = acc;
            }
        }
        // Vertical pass.
        let dst = out.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (t, kv) in kernel.iter().enumerate() {
                    let sy = reflect(y as isize + t as isize - radius as isize, h);
                    acc += kv * row_pass[sy * w + x];
                }
                dst[y * w + x] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let img = ImageBuf::constant(8, 8, 42.0);
        assert_eq!(gaussian_blur(&img, 0.0), img);
    }

    #[test]
    fn constant_image_is_a_fixed_point() {
        let img = ImageBuf::constant(16, 16, 200.0);
        let out = gaussian_blur(&img, 3.5);
        for v in out.data() {
            assert!((v - 200.0).abs() < 1e-9);
        }
    }

    #[test]
    fn impulse_response_is_the_separable_kernel() {
        let sigma = 2.0;
        let (h, w) = (31, 31);
        let mut img = ImageBuf::new(h, w);
        img.set(0, 15, 15, 255.0);
        let out = gaussian_blur(&img, sigma);
        let k = gaussian_kernel(sigma);
        let radius = k.len() / 2;
        for y in 0..h {
            for x in 0..w {
                let dy = (y as isize - 15).unsigned_abs();
                let dx = (x as isize - 15).unsigned_abs();
                let want = if dy <= radius && dx <= radius {
                    255.0 * k[radius + dy] * k[radius + dx]
                } else {
                    0.0
                };
                assert!(
                    (out.get(0, y, x) - want).abs() < 1e-12,
                    "mismatch at ({y},{x})"
                );
            }
        }
    }

    #[test]
    fn kernel_radius_has_a_floor_of_one() {
        assert_eq!(gaussian_kernel(0.05).len(), 3);
    }
}
