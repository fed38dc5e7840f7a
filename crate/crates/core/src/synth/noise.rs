//! Additive Gaussian noise on the 0–255 intensity scale.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::synth::image::ImageBuf;

/// Add i.i.d. zero-mean Gaussian noise and clamp into `[0, 255]`.
/// Deterministic per seed; `sigma = 0` is the identity.
pub fn add_gaussian_noise(img: &ImageBuf, sigma: f64, seed: u64) -> ImageBuf {
    if sigma <= 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 255.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let img = ImageBuf::constant(8, 8, 100.0);
        assert_eq!(add_gaussian_noise(&img, 0.0, 7), img);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let img = ImageBuf::constant(16, 16, 128.0);
        let a = add_gaussian_noise(&img, 25.0, 99);
        let b = add_gaussian_noise(&img, 25.0, 99);
        assert_eq!(a, b);
        let c = add_gaussian_noise(&img, 25.0, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_std_matches_sigma_on_midgray() {
        let img = ImageBuf::constant(256, 256, 128.0);
        let out = add_gaussian_noise(&img, 25.0, 1);
        let n = out.data().len() as f64;
        let mean_diff: f64 = out
            .data()
            .iter()
            .zip(img.data())
            .map(|(o, i)| o - i)
            .sum::<f64>()
            / n;
        let var: f64 = out
            .data()
            .iter()
            .zip(img.data())
            .map(|(o, i)| {
                let d = o - i - mean_diff;
                d * d
            })
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        assert!((24.0..=26.0).contains(&std), "empirical std {std}");
    }
}
