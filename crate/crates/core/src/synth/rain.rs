//! Procedural rain streaks: a sparse bright mask, motion-blurred along the
//! streak angle, screen-blended onto the image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::synth::image::{ImageBuf, CHANNELS};

/// Rasterize a unit line kernel of the given length and angle (degrees from
/// the x-axis) by bilinear splatting; normalized to sum 1.
fn line_kernel(angle_deg: f64, length: f64) -> (Vec<f64>, usize) {
    let radius = (length / 2.0).ceil() as usize + 1;
    let size = 2 * radius + 1;
    let mut k = vec![0.0; size * size];
    let theta = angle_deg.to_radians();
    let (dx, dy) = (theta.cos(), theta.sin());
    let steps = (length.ceil() as usize).max(1) * 2;
    for s in 0..=steps {
        let t = (s as f64 / steps as f64 - 0.5) * length;
        let x = radius as f64 + t * dx;
        let y = radius as f64 + t * dy;
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        for (oy, wy) in [(0usize, 1.0 - fy), (1, fy)] {
            for (ox, wx) in [(0usize, 1.0 - fx), (1, fx)] {
                let yy = y0 + oy;
                let xx = x0 + ox;
                if yy < size && xx < size {
                    k[yy * size + xx] += wy * wx;
                }
            }
        }
    }
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    (k, size)
}

/// Overlay rain streaks. `density` is the per-pixel seeding probability,
/// `length` the streak extent in pixels. Deterministic per seed;
/// `density = 0` is the identity. Screen blending only brightens, so the
/// output mean never drops below the input mean.
pub fn rain_streaks(img: &ImageBuf, density: f64, angle_deg: f64, length: f64, seed: u64) -> ImageBuf {
    if density <= 0.0 {
        return img.clone();
    }
    let (h, w) = (img.height(), img.width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Seed bright points.
    let mut mask = vec![0.0; h * w];
    for v in mask.iter_mut() {
        if rng.gen_range(0.0..1.0) < density {
            *v = 255.0 * rng.gen_range(0.6..1.0);
        }
    }

    // Motion-blur the mask along the streak direction. The kernel is
    // normalized, so rescale by the streak length to keep streaks visible.
    let (kernel, ksize) = line_kernel(angle_deg, length.max(1.0));
    let radius = (ksize / 2) as isize;
    let gain = 0.6 * length.max(1.0);
    let mut streaks = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..ksize {
                let sy = y as isize + ky as isize - radius;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..ksize {
                    let sx = x as isize + kx as isize - radius;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let kv = kernel[ky * ksize + kx];
                    if kv != 0.0 {
                        acc += kv * mask[sy as usize * w + sx as usize];
                    }
                }
            }
            streaks[y * w + x] = (acc * gain).min(255.0);
        }
    }

    // Screen blend: out = 255 - (255 - img)(255 - streak)/255.
    let mut out = img.clone();
    for c in 0..CHANNELS {
        let plane = out.channel_mut(c);
        for (v, s) in plane.iter_mut().zip(&streaks) {
            *v = 255.0 - (255.0 - *v) * (255.0 - s) / 255.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_density_is_identity() {
        let img = ImageBuf::constant(16, 16, 90.0);
        assert_eq!(rain_streaks(&img, 0.0, 80.0, 12.0, 3), img);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let img = ImageBuf::constant(32, 32, 90.0);
        let a = rain_streaks(&img, 0.01, 80.0, 12.0, 5);
        let b = rain_streaks(&img, 0.01, 80.0, 12.0, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn streaks_only_brighten() {
        let img = crate::synth::sample::sample_image(48, 48, 11);
        let out = rain_streaks(&img, 0.02, 95.0, 10.0, 8);
        assert!(out.mean() >= img.mean());
        for (o, i) in out.data().iter().zip(img.data()) {
            assert!(*o >= *i - 1e-9);
        }
    }
}
