// Temporary pilot for the trained-behavior criteria.
use std::path::Path;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use fdrnet_core::diagnostics::{channel_response_profile, correlation_delta, DistortionKind};
use fdrnet_core::net::NetworkConfig;
use fdrnet_core::synth::{sample::sample_image, synthesize_pair, DatasetManifest, DistortionSpec, ImageBuf, ManifestEntry, Severity};
use fdrnet_core::tensor::{Shape, Tensor};
use fdrnet_core::train::{evaluate, train, LoadedDataset, TrainConfig};

fn write_fixed_noise_dataset(dir: &Path, count: usize, seed: u64, sigma: f64) -> std::path::PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let sources: Vec<ImageBuf> = (0..8).map(|i| sample_image(96, 96, fdrnet_core::seeds::derive_seed(seed, "src", i))).collect();
    let mut entries = Vec::new();
    for i in 0..count {
        let mut rng = fdrnet_core::seeds::component_rng(seed, "entry", i as u64);
        use rand::Rng;
        let s = rng.gen_range(0..sources.len());
        let oy = rng.gen_range(0..=96 - 63);
        let ox = rng.gen_range(0..=96 - 63);
        let mut spec = DistortionSpec::identity(Severity::Moderate, fdrnet_core::seeds::derive_seed(seed, "spec", i as u64));
        spec.noise_sigma = sigma;
        let clean = sources[s].crop(oy, ox, 63).unwrap();
        let (dist, clean) = synthesize_pair(&clean, &spec).unwrap();
        let cname = format!("clean_{i:05}.png");
        let dname = format!("dist_{i:05}.png");
        clean.save_png(&dir.join(&cname)).unwrap();
        dist.save_png(&dir.join(&dname)).unwrap();
        entries.push(ManifestEntry { index: i, source: format!("src{s}"), clean: cname, distorted: dname, origin: (oy, ox), spec });
    }
    let m = DatasetManifest { global_seed: seed, severity: Severity::Moderate, patch: 63, with_rain: false, entries };
    let p = dir.join("manifest.txt");
    m.write(&p).unwrap();
    p
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let tmp = std::env::temp_dir().join("fdr_pilot");
    let _ = std::fs::remove_dir_all(&tmp);

    // --- criterion 5 pilot: denoise sigma 25
    let train_m = write_fixed_noise_dataset(&tmp.join("train"), 500, 1, 25.0);
    let val_m = write_fixed_noise_dataset(&tmp.join("val"), 50, 2, 25.0);
    let net_cfg = NetworkConfig { phases: 2, channels: 8, fd_layers: 3, aux_blocks: 1, reduction: 4, in_channels: 3 };
    let cfg = TrainConfig { max_iters: iters, batch_size: 8, seed: 7, checkpoint_interval: 0, val_interval: 0, ..TrainConfig::default() };
    let t0 = std::time::Instant::now();
    let report = train(&net_cfg, &train_m, None, &cfg, &tmp.join("run5")).unwrap();
    let ds_val = LoadedDataset::load(&val_m).unwrap();
    let ev = evaluate(&report.net, &ds_val).unwrap();
    println!("[crit5 pilot {iters} iters, {:.1} min] loss first10 {:.4} last10 {:.4} | val psnr_in {:.2} -> psnr_out {:.2} (gain {:+.2} dB)",
        t0.elapsed().as_secs_f64()/60.0,
        report.losses[..10].iter().map(|r| r.total).sum::<f64>()/10.0,
        report.losses[report.losses.len()-10..].iter().map(|r| r.total).sum::<f64>()/10.0,
        ev.mean_psnr_in(), ev.mean_psnr_out(), ev.mean_psnr_out()-ev.mean_psnr_in());

    // --- criterion 6/7 pilot: hybrid mild, P=1
    let clean_dir = tmp.join("clean");
    fdrnet_core::synth::sample::generate_clean_images(&clean_dir, 8, 96, 96, 3).unwrap();
    let ds_dir = tmp.join("hybrid");
    fdrnet_core::synth::build_dataset(&clean_dir, &ds_dir, &fdrnet_core::synth::DatasetOptions {
        count: 400, severity: Severity::Mild, patch_size: 63, seed: 4, with_rain: false }).unwrap();
    let test_dir = tmp.join("hybrid_test");
    fdrnet_core::synth::build_dataset(&clean_dir, &test_dir, &fdrnet_core::synth::DatasetOptions {
        count: 100, severity: Severity::Mild, patch_size: 63, seed: 5, with_rain: false }).unwrap();

    let net_cfg1 = NetworkConfig { phases: 1, ..net_cfg };
    let t0 = std::time::Instant::now();
    let report = train(&net_cfg1, &ds_dir.join("manifest.txt"), None, &cfg, &tmp.join("run6")).unwrap();
    println!("[crit6 train {:.1} min] loss first10 {:.4} last10 {:.4}", t0.elapsed().as_secs_f64()/60.0,
        report.losses[..10].iter().map(|r| r.total).sum::<f64>()/10.0,
        report.losses[report.losses.len()-10..].iter().map(|r| r.total).sum::<f64>()/10.0);

    let test_ds = LoadedDataset::load(&test_dir.join("manifest.txt")).unwrap();
    let mut lower = 0;
    for i in 0..test_ds.len() {
        let (x, _) = test_ds.batch(&[i]).unwrap();
        let deltas = correlation_delta(&report.net, &x).unwrap();
        if deltas[0].1 < deltas[0].0 { lower += 1; }
    }
    println!("[crit6] post<pre on {lower}/100 patches");

    // criterion 7: top-5 stability
    let probes: Vec<ImageBuf> = (0..6).map(|i| sample_image(63, 63, 100+i)).collect();
    for kind in DistortionKind::ALL {
        let profiles = channel_response_profile(&report.net, &probes, kind, &(1..=10).collect::<Vec<_>>(), 0).unwrap();
        let sets: Vec<Vec<usize>> = profiles.iter().map(|p| p.top_channels(5)).collect();
        let stable = sets[2..].windows(2).all(|w| w[0] == w[1]);
        println!("[crit7] {:?}: levels3-10 stable={} sets={:?}", kind, stable, &sets[2..]);
    }
    let _ = Tensor::zeros(Shape::new(1,1,1,1));
}
