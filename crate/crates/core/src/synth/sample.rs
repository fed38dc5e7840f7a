//! Procedural stand-in "clean" images: piecewise-smooth content with
//! edges and texture, enough structure for metric ordering checks and toy
//! training runs without shipping photographic datasets.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::synth::image::{ImageBuf, CHANNELS};

/// One deterministic sample image: smooth multi-sinusoid base, soft
/// ellipses, and a faint diagonal texture.
pub fn sample_image(h: usize, w: usize, seed: u64) -> ImageBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = ImageBuf::new(h, w);

    // Low-frequency waves, luma-dominated: a strong field shared by all
    // channels plus a weak per-channel chroma field, matching the smooth
    // low-energy chroma statistics of photographic content.
    let mut shared_waves = Vec::new();
    for _ in 0..4 {
        shared_waves.push((
            rng.gen_range(0.5..3.5) * std::f64::consts::TAU / w as f64,
            rng.gen_range(0.5..3.5) * std::f64::consts::TAU / h as f64,
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(10.0..35.0),
        ));
    }
    for c in 0..CHANNELS {
        let mut waves = shared_waves.clone();
        for _ in 0..2 {
            waves.push((
                rng.gen_range(0.5..2.5) * std::f64::consts::TAU / w as f64,
                rng.gen_range(0.5..2.5) * std::f64::consts::TAU / h as f64,
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(3.0..9.0),
            ));
        }
        let base = rng.gen_range(80.0..170.0);
        let plane = img.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut v = base;
                for &(fx, fy, phase, amp) in &waves {
                    v += amp * (fx * x as f64 + fy * y as f64 + phase).sin();
                }
                plane[y * w + x] = v;
            }
        }
    }

    // Soft ellipses (edges for SSIM/JPEG to react to). Offsets are mostly
    // shared across channels with a smaller chroma component, mirroring the
    // luma-dominated edge statistics of photographic content.
    let blobs = rng.gen_range(4..9);
    for _ in 0..blobs {
        let cy = rng.gen_range(0.0..h as f64);
        let cx = rng.gen_range(0.0..w as f64);
        let ry = rng.gen_range(0.06..0.3) * h as f64;
        let rx = rng.gen_range(0.06..0.3) * w as f64;
        let sharp = rng.gen_range(2.0..6.0);
        let luma_shift = rng.gen_range(-55.0..55.0);
        let color: Vec<f64> = (0..CHANNELS)
            .map(|_| luma_shift + rng.gen_range(-18.0..18.0))
            .collect();
        for y in 0..h {
            for x in 0..w {
                let dy = (y as f64 - cy) / ry;
                let dx = (x as f64 - cx) / rx;
                let d = (dy * dy + dx * dx).sqrt();
                // Smooth step from 1 inside to 0 outside.
                let t = 1.0 / (1.0 + (sharp * (d - 1.0)).exp());
                if t > 1e-4 {
                    for (c, &col) in color.iter().enumerate() {
                        let v = img.get(c, y, x) + col * t;
                        img.set(c, y, x, v);
                    }
                }
            }
        }
    }

    // Faint diagonal texture.
    let tex_amp = rng.gen_range(2.0..6.0);
    let tex_freq = rng.gen_range(0.6..1.4);
    for c in 0..CHANNELS {
        let plane = img.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] += tex_amp * ((x + 2 * y) as f64 * tex_freq).sin();
            }
        }
    }

    img.clamp();
    img
}

/// Write `count` sample images into `dir` as `clean_###.png`, returning
/// their paths in index order.
pub fn generate_clean_images(
    dir: &Path,
    count: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let img = sample_image(h, w, crate::seeds::derive_seed(seed, "clean-image", i as u64));
        let path = dir.join(format!("clean_{i:03}.png"));
        img.save_png(&path)?;
        paths.push(path);
    }
    Ok(paths)
}
