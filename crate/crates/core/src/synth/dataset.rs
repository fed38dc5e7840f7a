//! Patch-pair dataset builder.
//!
//! For each entry an RNG derived from `(global seed, "entry", index)` picks
//! a source image, a patch origin and a distortion recipe, so generation is
//! reproducible and independent of execution order — parallel and serial
//! builds emit identical files and manifests.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::seeds::{component_rng, derive_seed};
use crate::synth::image::ImageBuf;
use crate::synth::manifest::{DatasetManifest, ManifestEntry};
use crate::synth::{synthesize_pair, DistortionSpec, Severity};

#[derive(Clone, Copy, Debug)]
pub struct DatasetOptions {
    pub count: usize,
    pub severity: Severity,
    pub patch_size: usize,
    pub seed: u64,
    pub with_rain: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            count: 100,
            severity: Severity::Moderate,
            patch_size: 63,
            seed: 0,
            with_rain: false,
        }
    }
}

/// Sorted PNG listing of a directory.
fn list_pngs(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no PNG images in {}", dir.display()),
        )));
    }
    Ok(names)
}

/// Synthesize `count` distorted/clean patch pairs from the images in
/// `clean_dir`, writing PNGs and `manifest.txt` into `out_dir`.
pub fn build_dataset(clean_dir: &Path, out_dir: &Path, opts: &DatasetOptions) -> Result<DatasetManifest> {
    if opts.patch_size < 16 {
        return Err(Error::Config(format!(
            "patch size {} below the minimum of 16",
            opts.patch_size
        )));
    }
    let names = list_pngs(clean_dir)?;
    let sources: Vec<ImageBuf> = names
        .iter()
        .map(|n| ImageBuf::load_png(&clean_dir.join(n)))
        .collect::<Result<_>>()?;
    let usable: Vec<usize> = (0..sources.len())
        .filter(|&i| sources[i].height() >= opts.patch_size && sources[i].width() >= opts.patch_size)
        .collect();
    if usable.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!(
                "no source image in {} is at least {}x{}",
                clean_dir.display(),
                opts.patch_size,
                opts.patch_size
            ),
        )));
    }

    std::fs::create_dir_all(out_dir)?;
    let results = par::map_indexed(opts.count, |i| -> Result<(ManifestEntry, ImageBuf, ImageBuf)> {
        let mut rng = component_rng(opts.seed, "entry", i as u64);
        let src_idx = usable[rng.gen_range(0..usable.len())];
        let src = &sources[src_idx];
        let oy = rng.gen_range(0..=src.height() - opts.patch_size);
        let ox = rng.gen_range(0..=src.width() - opts.patch_size);
        let spec = DistortionSpec::sample(
            opts.severity,
            opts.with_rain,
            &mut rng,
            derive_seed(opts.seed, "spec", i as u64),
        );
        let clean_patch = src.crop(oy, ox, opts.patch_size)?;
        let (distorted, clean_patch) = synthesize_pair(&clean_patch, &spec)?;
        let entry = ManifestEntry {
            index: i,
            source: names[src_idx].clone(),
            clean: format!("clean_{i:05}.png"),
            distorted: format!("dist_{i:05}.png"),
            origin: (oy, ox),
            spec,
        };
        Ok((entry, clean_patch, distorted))
    });

    let mut entries = Vec::with_capacity(opts.count);
    for result in results {
        let (entry, clean_patch, distorted) = result?;
        clean_patch.save_png(&out_dir.join(&entry.clean))?;
        distorted.save_png(&out_dir.join(&entry.distorted))?;
        entries.push(entry);
    }

    let manifest = DatasetManifest {
        global_seed: opts.seed,
        severity: opts.severity,
        patch: opts.patch_size,
        with_rain: opts.with_rain,
        entries,
    };
    manifest.write(&out_dir.join("manifest.txt"))?;
    Ok(manifest)
}

/// Re-run the synthesis of one manifest entry from the original source
/// image. By the determinism contract the result is bit-identical to the
/// files produced by [`build_dataset`].
pub fn regenerate_entry(
    entry: &ManifestEntry,
    clean_dir: &Path,
    patch_size: usize,
) -> Result<(ImageBuf, ImageBuf)> {
    let src = ImageBuf::load_png(&clean_dir.join(&entry.source))?;
    let clean_patch = src.crop(entry.origin.0, entry.origin.1, patch_size)?;
    let (distorted, clean_patch) = synthesize_pair(&clean_patch, &entry.spec)?;
    Ok((distorted, clean_patch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sample::generate_clean_images;

    #[test]
    fn builds_are_deterministic_and_regenerable() {
        let dir = tempfile::tempdir().unwrap();
        let clean_dir = dir.path().join("clean");
        generate_clean_images(&clean_dir, 3, 96, 96, 7).unwrap();

        let opts = DatasetOptions {
            count: 6,
            severity: Severity::Mild,
            patch_size: 63,
            seed: 11,
            with_rain: true,
        };
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let ma = build_dataset(&clean_dir, &out_a, &opts).unwrap();
        let mb = build_dataset(&clean_dir, &out_b, &opts).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(
            std::fs::read_to_string(out_a.join("manifest.txt")).unwrap(),
            std::fs::read_to_string(out_b.join("manifest.txt")).unwrap()
        );

        // Bit-exact regeneration from the manifest.
        let manifest = DatasetManifest::read(&out_a.join("manifest.txt")).unwrap();
        for entry in &manifest.entries {
            let (distorted, clean) =
                regenerate_entry(entry, &clean_dir, manifest.patch).unwrap();
            let stored_d = ImageBuf::load_png(&out_a.join(&entry.distorted)).unwrap();
            let stored_c = ImageBuf::load_png(&out_a.join(&entry.clean)).unwrap();
            // Stored files hold the quantized rendition.
            assert_eq!(stored_d.to_rgb8(), distorted.to_rgb8());
            assert_eq!(stored_c.to_rgb8(), clean.to_rgb8());
        }
    }

    #[test]
    fn every_patch_has_the_requested_size() {
        let dir = tempfile::tempdir().unwrap();
        let clean_dir = dir.path().join("clean");
        generate_clean_images(&clean_dir, 2, 80, 80, 3).unwrap();
        let opts = DatasetOptions {
            count: 4,
            severity: Severity::Moderate,
            patch_size: 63,
            seed: 2,
            with_rain: false,
        };
        let out = dir.path().join("out");
        let manifest = build_dataset(&clean_dir, &out, &opts).unwrap();
        for entry in &manifest.entries {
            let img = ImageBuf::load_png(&out.join(&entry.distorted)).unwrap();
            assert_eq!((img.height(), img.width()), (63, 63));
        }
    }

    #[test]
    fn empty_clean_dir_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let clean_dir = dir.path().join("clean");
        std::fs::create_dir_all(&clean_dir).unwrap();
        let out = dir.path().join("out");
        assert!(matches!(
            build_dataset(&clean_dir, &out, &DatasetOptions::default()),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn tiny_patch_size_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let opts = DatasetOptions {
            patch_size: 8,
            ..DatasetOptions::default()
        };
        assert!(matches!(
            build_dataset(dir.path(), dir.path(), &opts),
            Err(Error::Config(_))
        ));
    }
}
