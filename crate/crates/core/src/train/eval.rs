//! Checkpoint evaluation: per-image and per-severity PSNR/SSIM against the
//! distorted-input baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::Result;
use crate::metrics::{psnr, ssim};
use crate::net::Network;
use crate::synth::{image::CHANNELS, ImageBuf, Severity};
use crate::tensor::Graph;
use crate::train::data::LoadedDataset;

#[derive(Clone, Debug)]
pub struct EvalRow {
    pub index: usize,
    pub severity: Severity,
    /// Distorted input vs clean.
    pub psnr_in: f64,
    pub ssim_in: f64,
    /// Restored output vs clean.
    pub psnr_out: f64,
    pub ssim_out: f64,
}

#[derive(Clone, Debug, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// `(severity, count, mean psnr_in, mean ssim_in, mean psnr_out, mean ssim_out)`.
    pub fn severity_means(&self) -> Vec<(Severity, usize, f64, f64, f64, f64)> {
        let mut groups: BTreeMap<&'static str, (Severity, usize, f64, f64, f64, f64)> =
            BTreeMap::new();
        for row in &self.rows {
            let g = groups.entry(row.severity.as_str()).or_insert((
                row.severity,
                0,
                0.0,
                0.0,
                0.0,
                0.0,
            ));
            g.1 += 1;
            g.2 += row.psnr_in;
            g.3 += row.ssim_in;
            g.4 += row.psnr_out;
            g.5 += row.ssim_out;
        }
        groups
            .into_values()
            .map(|(s, n, a, b, c, d)| {
                let n_f = n as f64;
                (s, n, a / n_f, b / n_f, c / n_f, d / n_f)
            })
            .collect()
    }

    pub fn mean_psnr_out(&self) -> f64 {
        self.rows.iter().map(|r| r.psnr_out).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn mean_psnr_in(&self) -> f64 {
        self.rows.iter().map(|r| r.psnr_in).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn mean_ssim_out(&self) -> f64 {
        self.rows.iter().map(|r| r.ssim_out).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,severity,psnr_in,ssim_in,psnr_out,ssim_out\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.index, r.severity, r.psnr_in, r.ssim_in, r.psnr_out, r.ssim_out
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>9} {:>8} {:>9} {:>8}",
            "severity", "count", "psnr_in", "ssim_in", "psnr_out", "ssim_out"
        );
        for (sev, n, pi, si, po, so) in self.severity_means() {
            let _ = writeln!(
                out,
                "{:<10} {:>6} {:>9.3} {:>8.4} {:>9.3} {:>8.4}",
                sev.as_str(),
                n,
                pi,
                si,
                po,
                so
            );
        }
        out
    }
}

fn to_image(buf: &[f64], h: usize, w: usize) -> Result<ImageBuf> {
    let mut img = ImageBuf::from_data(h, w, buf.iter().map(|v| v * 255.0).collect())?;
    img.clamp();
    Ok(img)
}

/// Run the network over every pair in a dataset. Deterministic; images are
/// processed in small batches for throughput, metrics per image.
pub fn evaluate(net: &Network, dataset: &LoadedDataset) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(dataset.len());
    let chunk = 8;
    let chw = CHANNELS * dataset.h * dataset.w;
    let mut start = 0;
    while start < dataset.len() {
        let end = (start + chunk).min(dataset.len());
        let indices: Vec<usize> = (start..end).collect();
        let (x, _) = dataset.batch(&indices)?;
        let mut graph = Graph::no_grad();
        let trace = net.forward(&mut graph, &x)?;
        for (offset, &index) in indices.iter().enumerate() {
            let pair = &dataset.pairs[index];
            let clean = to_image(&pair.clean, dataset.h, dataset.w)?;
            let distorted = to_image(&pair.distorted, dataset.h, dataset.w)?;
            let restored = to_image(
                &trace.restored.data()[offset * chw..(offset + 1) * chw],
                dataset.h,
                dataset.w,
            )?;
            rows.push(EvalRow {
                index,
                severity: dataset.severities[index],
                psnr_in: psnr(distorted.data(), clean.data(), 255.0)?,
                ssim_in: ssim(&distorted, &clean)?,
                psnr_out: psnr(restored.data(), clean.data(), 255.0)?,
                ssim_out: ssim(&restored, &clean)?,
            });
        }
        start = end;
    }
    Ok(EvalReport { rows })
}
