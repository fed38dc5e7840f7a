//! Deterministic hybrid-distortion synthesis.
//!
//! A [`DistortionSpec`] fully determines one distorted rendition of a clean
//! image: `(clean, spec) -> distorted` is a pure function, so manifests are
//! sufficient for bit-exact regeneration. Operators apply in the fixed
//! order rain → blur → noise → JPEG (capture-then-compress); the order is
//! recorded in the manifest.

mod blur;
mod dataset;
pub mod image;
mod jpeg;
mod manifest;
mod noise;
mod rain;
pub mod sample;

pub use blur::gaussian_blur;
pub use dataset::{build_dataset, regenerate_entry, DatasetOptions};
pub use image::ImageBuf;
pub use jpeg::jpeg_artifacts;
pub use manifest::{DatasetManifest, ManifestEntry};
pub use noise::add_gaussian_noise;
pub use rain::rain_streaks;

use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seeds::derive_seed;

pub const BLUR_SIGMA_RANGE: RangeInclusive<f64> = 0.0..=10.0;
pub const NOISE_SIGMA_RANGE: RangeInclusive<f64> = 0.0..=50.0;
pub const JPEG_QUALITY_RANGE: RangeInclusive<u32> = 10..=100;
/// Sampled rain densities stay well below full coverage.
pub const RAIN_DENSITY_MAX: f64 = 0.03;

/// Degradation level class. Parameter ranges split into thirds: mild takes
/// the lowest third of blur/noise (and the highest third of JPEG quality),
/// severe the opposite, moderate the middle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Severity {
    Mild,
    Moderate,
    Severe,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Mild, Severity::Moderate, Severity::Severe];

    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        }
    }

    /// `[lo, hi)` sub-range of blur sigma for this class.
    pub fn blur_range(&self) -> (f64, f64) {
        match self {
            Severity::Mild => (0.0, 10.0 / 3.0),
            Severity::Moderate => (10.0 / 3.0, 20.0 / 3.0),
            Severity::Severe => (20.0 / 3.0, 10.0),
        }
    }

    pub fn noise_range(&self) -> (f64, f64) {
        match self {
            Severity::Mild => (0.0, 50.0 / 3.0),
            Severity::Moderate => (50.0 / 3.0, 100.0 / 3.0),
            Severity::Severe => (100.0 / 3.0, 50.0),
        }
    }

    /// Inclusive JPEG quality sub-range; mild keeps the highest qualities.
    pub fn quality_range(&self) -> (u32, u32) {
        match self {
            Severity::Mild => (70, 100),
            Severity::Moderate => (40, 69),
            Severity::Severe => (10, 39),
        }
    }

    pub fn rain_density_range(&self) -> (f64, f64) {
        let third = RAIN_DENSITY_MAX / 3.0;
        match self {
            Severity::Mild => (0.0, third),
            Severity::Moderate => (third, 2.0 * third),
            Severity::Severe => (2.0 * third, RAIN_DENSITY_MAX),
        }
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mild" => Ok(Severity::Mild),
            "moderate" => Ok(Severity::Moderate),
            "severe" => Ok(Severity::Severe),
            other => Err(Error::Config(format!(
                "unknown severity '{other}' (expected mild|moderate|severe)"
            ))),
        }
    }
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rain overlay parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RainSpec {
    /// Per-pixel streak seeding probability in `[0, 1]`.
    pub density: f64,
    /// Streak angle in degrees from the horizontal axis.
    pub angle_deg: f64,
    /// Streak length in pixels.
    pub length_px: f64,
}

/// One complete synthesis recipe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionSpec {
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub jpeg_quality: u32,
    pub rain: Option<RainSpec>,
    pub severity: Severity,
    pub seed: u64,
}

impl DistortionSpec {
    /// The do-nothing recipe: no blur, no noise, quality 100, no rain.
    pub fn identity(severity: Severity, seed: u64) -> Self {
        DistortionSpec {
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            jpeg_quality: 100,
            rain: None,
            severity,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !BLUR_SIGMA_RANGE.contains(&self.blur_sigma) {
            return Err(Error::Config(format!(
                "blur sigma {} outside [0, 10]",
                self.blur_sigma
            )));
        }
        if !NOISE_SIGMA_RANGE.contains(&self.noise_sigma) {
            return Err(Error::Config(format!(
                "noise sigma {} outside [0, 50]",
                self.noise_sigma
            )));
        }
        if !JPEG_QUALITY_RANGE.contains(&self.jpeg_quality) {
            return Err(Error::Config(format!(
                "jpeg quality {} outside [10, 100]",
                self.jpeg_quality
            )));
        }
        if let Some(rain) = &self.rain {
            if !(0.0..=1.0).contains(&rain.density) {
                return Err(Error::Config(format!(
                    "rain density {} outside [0, 1]",
                    rain.density
                )));
            }
            if rain.length_px < 0.0 {
                return Err(Error::Config("rain streak length must be nonnegative".into()));
            }
        }
        Ok(())
    }

    /// Check that each parameter sits inside its severity sub-range.
    pub fn matches_severity(&self) -> bool {
        let (blo, bhi) = self.severity.blur_range();
        let (nlo, nhi) = self.severity.noise_range();
        let (qlo, qhi) = self.severity.quality_range();
        let blur_ok = self.blur_sigma >= blo && (self.blur_sigma < bhi || bhi == 10.0);
        let noise_ok = self.noise_sigma >= nlo && (self.noise_sigma < nhi || nhi == 50.0);
        let quality_ok = (qlo..=qhi).contains(&self.jpeg_quality);
        let rain_ok = self.rain.is_none_or(|r| {
            let (rlo, rhi) = self.severity.rain_density_range();
            r.density >= rlo && (r.density < rhi || rhi == RAIN_DENSITY_MAX)
        });
        blur_ok && noise_ok && quality_ok && rain_ok
    }

    /// Sample a recipe uniformly inside the severity class. `seed` becomes
    /// the spec's own randomness root (noise draws, rain placement).
    pub fn sample<R: Rng>(severity: Severity, with_rain: bool, rng: &mut R, seed: u64) -> Self {
        let (blo, bhi) = severity.blur_range();
        let (nlo, nhi) = severity.noise_range();
        let (qlo, qhi) = severity.quality_range();
        let rain = with_rain.then(|| {
            let (rlo, rhi) = severity.rain_density_range();
            RainSpec {
                density: rng.gen_range(rlo..rhi),
                angle_deg: rng.gen_range(70.0..110.0),
                length_px: rng.gen_range(8.0..16.0),
            }
        });
        DistortionSpec {
            blur_sigma: rng.gen_range(blo..bhi),
            noise_sigma: rng.gen_range(nlo..nhi),
            jpeg_quality: rng.gen_range(qlo..=qhi),
            rain,
            severity,
            seed,
        }
    }
}

/// Apply the full recipe in the fixed order rain → blur → noise → JPEG and
/// return `(distorted, clean)`.
pub fn synthesize_pair(clean: &ImageBuf, spec: &DistortionSpec) -> Result<(ImageBuf, ImageBuf)> {
    spec.validate()?;
    let mut img = clean.clone();
    if let Some(rain) = &spec.rain {
        img = rain_streaks(
            &img,
            rain.density,
            rain.angle_deg,
            rain.length_px,
            derive_seed(spec.seed, "rain", 0),
        );
    }
    img = gaussian_blur(&img, spec.blur_sigma);
    img = add_gaussian_noise(&img, spec.noise_sigma, derive_seed(spec.seed, "noise", 0));
    img = jpeg_artifacts(&img, spec.jpeg_quality);
    Ok((img, clean.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_spec_is_nearly_lossless() {
        let clean = sample::sample_image(63, 63, 1);
        let spec = DistortionSpec::identity(Severity::Mild, 0);
        let (distorted, clean_out) = synthesize_pair(&clean, &spec).unwrap();
        assert_eq!(clean_out, clean);
        let p = psnr(distorted.data(), clean.data(), 255.0).unwrap();
        assert!(p > 45.0, "identity spec PSNR {p} dB");
    }

    #[test]
    fn sampled_specs_sit_inside_their_severity_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for severity in Severity::ALL {
            for i in 0..200 {
                let spec = DistortionSpec::sample(severity, true, &mut rng, i);
                spec.validate().unwrap();
                assert!(spec.matches_severity(), "{spec:?}");
            }
        }
    }

    #[test]
    fn severity_means_order_as_expected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean_blur = |sev: Severity, rng: &mut ChaCha8Rng| {
            (0..1000)
                .map(|i| DistortionSpec::sample(sev, false, rng, i).blur_sigma)
                .sum::<f64>()
                / 1000.0
        };
        let mild = mean_blur(Severity::Mild, &mut rng);
        let severe = mean_blur(Severity::Severe, &mut rng);
        assert!(mild < severe, "mild {mild} vs severe {severe}");
    }

    #[test]
    fn synthesis_is_a_pure_function_of_clean_and_spec() {
        let clean = sample::sample_image(63, 63, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = DistortionSpec::sample(Severity::Moderate, true, &mut rng, 1234);
        let (a, _) = synthesize_pair(&clean, &spec).unwrap();
        let (b, _) = synthesize_pair(&clean, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn each_single_operator_strictly_degrades_natural_images() {
        let clean = sample::sample_image(64, 64, 21);
        let cap = psnr(clean.data(), clean.data(), 255.0).unwrap();
        let mut base = DistortionSpec::identity(Severity::Moderate, 7);

        base.blur_sigma = 2.0;
        let (d, _) = synthesize_pair(&clean, &base).unwrap();
        let p_blur = psnr(d.data(), clean.data(), 255.0).unwrap();
        assert!(p_blur < cap);

        let mut spec = DistortionSpec::identity(Severity::Moderate, 7);
        spec.noise_sigma = 15.0;
        let (d, _) = synthesize_pair(&clean, &spec).unwrap();
        assert!(psnr(d.data(), clean.data(), 255.0).unwrap() < cap);

        let mut spec = DistortionSpec::identity(Severity::Moderate, 7);
        spec.jpeg_quality = 20;
        let (d, _) = synthesize_pair(&clean, &spec).unwrap();
        assert!(psnr(d.data(), clean.data(), 255.0).unwrap() < cap);

        let mut spec = DistortionSpec::identity(Severity::Moderate, 7);
        spec.rain = Some(RainSpec {
            density: 0.02,
            angle_deg: 85.0,
            length_px: 10.0,
        });
        let (d, _) = synthesize_pair(&clean, &spec).unwrap();
        assert!(psnr(d.data(), clean.data(), 255.0).unwrap() < cap);
    }

    #[test]
    fn rejects_out_of_range_specs() {
        let mut spec = DistortionSpec::identity(Severity::Mild, 0);
        spec.blur_sigma = 11.0;
        assert!(spec.validate().is_err());
        let mut spec = DistortionSpec::identity(Severity::Mild, 0);
        spec.jpeg_quality = 5;
        assert!(spec.validate().is_err());
    }
}
