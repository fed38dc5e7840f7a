//! Dataset manifest: a self-describing UTF-8 text format, one `key=value`
//! header per line followed by one `entry ...` line per synthesized pair.
//!
//! Header keys, in order: `version`, `global_seed`, `order`, `severity`,
//! `patch`, `with_rain`, `count`. Entry fields, in order: `index`,
//! `source`, `clean`, `distorted`, `oy`, `ox`, `blur_sigma`, `noise_sigma`,
//! `jpeg_quality`, `rain` (`none` or `density,angle,length`), `severity`,
//! `seed`. Floats print in shortest round-trip form, so re-reading a
//! manifest reproduces every value bit-exactly.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::synth::{DistortionSpec, RainSpec, Severity};

pub const MANIFEST_VERSION: u32 = 1;
pub const OPERATOR_ORDER: &str = "rain,blur,noise,jpeg";

/// One synthesized pair: where it came from and how it was made.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub index: usize,
    /// Source image file name, relative to the clean directory.
    pub source: String,
    /// Clean patch file name, relative to the dataset directory.
    pub clean: String,
    /// Distorted patch file name, relative to the dataset directory.
    pub distorted: String,
    /// Patch origin (top-left corner) in the source image.
    pub origin: (usize, usize),
    pub spec: DistortionSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub global_seed: u64,
    pub severity: Severity,
    pub patch: usize,
    pub with_rain: bool,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version={MANIFEST_VERSION}");
        let _ = writeln!(out, "global_seed={}", self.global_seed);
        let _ = writeln!(out, "order={OPERATOR_ORDER}");
        let _ = writeln!(out, "severity={}", self.severity);
        let _ = writeln!(out, "patch={}", self.patch);
        let _ = writeln!(out, "with_rain={}", self.with_rain);
        let _ = writeln!(out, "count={}", self.entries.len());
        for e in &self.entries {
            let rain = match &e.spec.rain {
                Some(r) => format!("{},{},{}", r.density, r.angle_deg, r.length_px),
                None => "none".to_string(),
            };
            let _ = writeln!(
                out,
                "entry index={} source={} clean={} distorted={} oy={} ox={} \
                 blur_sigma={} noise_sigma={} jpeg_quality={} rain={} severity={} seed={}",
                e.index,
                e.source,
                e.clean,
                e.distorted,
                e.origin.0,
                e.origin.1,
                e.spec.blur_sigma,
                e.spec.noise_sigma,
                e.spec.jpeg_quality,
                rain,
                e.spec.severity,
                e.spec.seed,
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut global_seed = None;
        let mut severity = None;
        let mut patch = None;
        let mut with_rain = None;
        let mut declared_count = None;
        let mut entries = Vec::new();

        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("entry ") {
                entries.push(parse_entry(rest, lineno + 1)?);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("manifest line {} is not key=value", lineno + 1))
            })?;
            match key {
                "version" => {
                    let v: u32 = parse_field(value, "version")?;
                    if v != MANIFEST_VERSION {
                        return Err(Error::Config(format!(
                            "unsupported manifest version {v} (expected {MANIFEST_VERSION})"
                        )));
                    }
                }
                "global_seed" => global_seed = Some(parse_field(value, "global_seed")?),
                "order" => {
                    if value != OPERATOR_ORDER {
                        return Err(Error::Config(format!(
                            "unsupported operator order '{value}'"
                        )));
                    }
                }
                "severity" => severity = Some(Severity::from_str(value)?),
                "patch" => patch = Some(parse_field(value, "patch")?),
                "with_rain" => with_rain = Some(parse_field(value, "with_rain")?),
                "count" => declared_count = Some(parse_field::<usize>(value, "count")?),
                other => {
                    return Err(Error::Config(format!("unknown manifest key '{other}'")));
                }
            }
        }

        let manifest = DatasetManifest {
            global_seed: global_seed
                .ok_or_else(|| Error::Config("manifest missing global_seed".into()))?,
            severity: severity.ok_or_else(|| Error::Config("manifest missing severity".into()))?,
            patch: patch.ok_or_else(|| Error::Config("manifest missing patch".into()))?,
            with_rain: with_rain
                .ok_or_else(|| Error::Config("manifest missing with_rain".into()))?,
            entries,
        };
        if let Some(count) = declared_count {
            if count != manifest.entries.len() {
                return Err(Error::Config(format!(
                    "manifest declares {count} entries but contains {}",
                    manifest.entries.len()
                )));
            }
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

fn parse_field<T: FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse manifest field {key}='{value}'")))
}

fn parse_entry(rest: &str, lineno: usize) -> Result<ManifestEntry> {
    let mut fields = std::collections::HashMap::new();
    for token in rest.split_whitespace() {
        let (k, v) = token.split_once('=').ok_or_else(|| {
            Error::Config(format!("entry token '{token}' on line {lineno} is not key=value"))
        })?;
        fields.insert(k, v);
    }
    let get = |k: &str| -> Result<&str> {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::Config(format!("entry on line {lineno} missing field '{k}'")))
    };
    let rain = match get("rain")? {
        "none" => None,
        triplet => {
            let parts: Vec<&str> = triplet.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!(
                    "rain field '{triplet}' on line {lineno} must be density,angle,length"
                )));
            }
            Some(RainSpec {
                density: parse_field(parts[0], "rain density")?,
                angle_deg: parse_field(parts[1], "rain angle")?,
                length_px: parse_field(parts[2], "rain length")?,
            })
        }
    };
    Ok(ManifestEntry {
        index: parse_field(get("index")?, "index")?,
        source: get("source")?.to_string(),
        clean: get("clean")?.to_string(),
        distorted: get("distorted")?.to_string(),
        origin: (
            parse_field(get("oy")?, "oy")?,
            parse_field(get("ox")?, "ox")?,
        ),
        spec: DistortionSpec {
            blur_sigma: parse_field(get("blur_sigma")?, "blur_sigma")?,
            noise_sigma: parse_field(get("noise_sigma")?, "noise_sigma")?,
            jpeg_quality: parse_field(get("jpeg_quality")?, "jpeg_quality")?,
            rain,
            severity: Severity::from_str(get("severity")?)?,
            seed: parse_field(get("seed")?, "seed")?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_manifest() -> DatasetManifest {
        DatasetManifest {
            global_seed: 42,
            severity: Severity::Moderate,
            patch: 63,
            with_rain: true,
            entries: vec![ManifestEntry {
                index: 0,
                source: "clean_000.png".into(),
                clean: "clean_00000.png".into(),
                distorted: "dist_00000.png".into(),
                origin: (12, 34),
                spec: DistortionSpec {
                    blur_sigma: 4.123456789012345,
                    noise_sigma: 20.000000000000004,
                    jpeg_quality: 55,
                    rain: Some(RainSpec {
                        density: 0.0123456789,
                        angle_deg: 85.5,
                        length_px: 10.25,
                    }),
                    severity: Severity::Moderate,
                    seed: 987654321,
                },
            }],
        }
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let m = sample_manifest();
        let text = m.to_text();
        let back = DatasetManifest::parse(&text).unwrap();
        assert_eq!(m, back);
        // Serializing again produces identical text.
        assert_eq!(text, back.to_text());
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let m = sample_manifest();
        let text = m.to_text().replace("count=1", "count=2");
        assert!(DatasetManifest::parse(&text).is_err());
    }
}
