//! Interpretability diagnostics: channel correlation matrices around the
//! disentanglement modules and per-distortion channel response profiles.

use std::path::Path;

use crate::error::{Error, Result};
use crate::net::Network;
use crate::synth::{add_gaussian_noise, gaussian_blur, jpeg_artifacts, ImageBuf};
use crate::tensor::{Graph, Shape, Tensor};

/// Pearson correlation matrix of a feature's channels.
#[derive(Clone, Debug)]
pub struct CorrelationReport {
    /// Row-major `C × C` matrix. Rows/columns of zero-variance channels are
    /// zeroed and flagged rather than aborting.
    pub matrix: Vec<f64>,
    pub channels: usize,
    /// Mean of `|r_ij|` over `i != j`.
    pub mean_abs_offdiag: f64,
    /// Which channels had (numerically) zero variance.
    pub zero_variance: Vec<bool>,
    /// Where the feature was tapped, e.g. `pre-fdm/phase0`.
    pub tap: String,
}

/// Correlations between channels, each flattened over batch and space.
pub fn channel_correlation(f: &Tensor, tap: &str) -> CorrelationReport {
    let s = f.shape();
    let (n, c, hw) = (s.n(), s.c(), s.hw());
    let samples = n * hw;
    let data = f.data();

    let mut means = vec![0.0; c];
    for ni in 0..n {
        for ci in 0..c {
            means[ci] += data[(ni * c + ci) * hw..][..hw].iter().sum::<f64>();
        }
    }
    for m in &mut means {
        *m /= samples as f64;
    }

    // Covariance accumulation over batch elements.
    let mut cov = vec![0.0; c * c];
    for ni in 0..n {
        for i in 0..c {
            let pi = &data[(ni * c + i) * hw..][..hw];
            for j in 0..=i {
                let pj = &data[(ni * c + j) * hw..][..hw];
                let mut acc = 0.0;
                for (a, b) in pi.iter().zip(pj) {
                    acc += (a - means[i]) * (b - means[j]);
                }
                cov[i * c + j] += acc;
            }
        }
    }

    let var: Vec<f64> = (0..c).map(|i| cov[i * c + i] / samples as f64).collect();
    let zero_variance: Vec<bool> = var.iter().map(|&v| v <= 0.0).collect();
    let mut matrix = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..=i {
            let r = if zero_variance[i] || zero_variance[j] {
                0.0
            } else if i == j {
                1.0
            } else {
                (cov[i * c + j] / samples as f64) / (var[i] * var[j]).sqrt()
            };
            matrix[i * c + j] = r;
            matrix[j * c + i] = r;
        }
    }

    let mut off = 0.0;
    for i in 0..c {
        for j in 0..c {
            if i != j {
                off += matrix[i * c + j].abs();
            }
        }
    }
    let denom = (c * c - c).max(1);
    CorrelationReport {
        matrix,
        channels: c,
        mean_abs_offdiag: off / denom as f64,
        zero_variance,
        tap: tap.to_string(),
    }
}

/// Mean absolute off-diagonal correlation at the pre-FDM and post-FDM taps
/// of every phase for one input batch.
pub fn correlation_delta(net: &Network, input: &Tensor) -> Result<Vec<(f64, f64)>> {
    let mut graph = Graph::no_grad();
    let trace = net.forward(&mut graph, input)?;
    Ok(trace
        .fdm_inputs
        .iter()
        .zip(&trace.fdm_outputs)
        .enumerate()
        .map(|(p, (pre, post))| {
            let pre = channel_correlation(pre, &format!("pre-fdm/phase{p}"));
            let post = channel_correlation(post, &format!("post-fdm/phase{p}"));
            (pre.mean_abs_offdiag, post.mean_abs_offdiag)
        })
        .collect())
}

/// Distortion families probed by the response profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistortionKind {
    Blur,
    Noise,
    Jpeg,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 3] =
        [DistortionKind::Blur, DistortionKind::Noise, DistortionKind::Jpeg];

    pub fn as_str(&self) -> &'static str {
        match self {
            DistortionKind::Blur => "blur",
            DistortionKind::Noise => "noise",
            DistortionKind::Jpeg => "jpeg",
        }
    }

    /// Level grids mapping the 1–10 convention onto the synthesis ranges:
    /// blur σ = level, noise σ = 5·level, JPEG quality = 105 − 10·level.
    pub fn apply(&self, img: &ImageBuf, level: u32, seed: u64) -> ImageBuf {
        match self {
            DistortionKind::Blur => gaussian_blur(img, f64::from(level)),
            DistortionKind::Noise => add_gaussian_noise(img, 5.0 * f64::from(level), seed),
            DistortionKind::Jpeg => jpeg_artifacts(img, 105 - 10 * level),
        }
    }
}

/// Per-channel mean absolute activation at the post-FDM tap for one
/// distortion type and level.
#[derive(Clone, Debug)]
pub struct ResponseProfile {
    pub distortion: String,
    pub level: u32,
    pub per_channel: Vec<f64>,
}

impl ResponseProfile {
    /// Indices of the `k` strongest channels, descending by response.
    pub fn top_channels(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.per_channel.len()).collect();
        idx.sort_by(|&a, &b| {
            self.per_channel[b]
                .partial_cmp(&self.per_channel[a])
                .expect("responses are finite")
                .then(a.cmp(&b))
        });
        idx.truncate(k);
        idx.sort_unstable();
        idx
    }
}

fn probe_batch(probes: &[ImageBuf]) -> Result<Tensor> {
    let (h, w) = (probes[0].height(), probes[0].width());
    let mut data = Vec::with_capacity(probes.len() * 3 * h * w);
    for p in probes {
        if p.height() != h || p.width() != w {
            return Err(Error::Shape("probe images must share a size".into()));
        }
        data.extend(p.data().iter().map(|v| v / 255.0));
    }
    Tensor::from_vec(Shape::new(probes.len(), 3, h, w), data)
}

/// Run single-distortion probes through the model and record per-channel
/// mean absolute activations at `phase`'s post-FDM tap, one profile per
/// level in `levels`.
pub fn channel_response_profile(
    net: &Network,
    probes: &[ImageBuf],
    kind: DistortionKind,
    levels: &[u32],
    phase: usize,
) -> Result<Vec<ResponseProfile>> {
    if probes.is_empty() {
        return Err(Error::Usage("response profile needs at least one probe image".into()));
    }
    if phase >= net.config().phases {
        return Err(Error::Config(format!(
            "phase {phase} out of range for a {}-phase network",
            net.config().phases
        )));
    }
    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        let distorted: Vec<ImageBuf> = probes
            .iter()
            .enumerate()
            .map(|(i, p)| kind.apply(p, level, crate::seeds::derive_seed(level.into(), kind.as_str(), i as u64)))
            .collect();
        let batch = probe_batch(&distorted)?;
        let mut graph = Graph::no_grad();
        let trace = net.forward(&mut graph, &batch)?;
        let d = &trace.fdm_outputs[phase];
        let s = d.shape();
        let (n, c, hw) = (s.n(), s.c(), s.hw());
        let mut per_channel = vec![0.0; c];
        for ni in 0..n {
            for ci in 0..c {
                per_channel[ci] += d.data()[(ni * c + ci) * hw..][..hw]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>();
            }
        }
        for v in &mut per_channel {
            *v /= (n * hw) as f64;
        }
        out.push(ResponseProfile {
            distortion: kind.as_str().to_string(),
            level,
            per_channel,
        });
    }
    Ok(out)
}

/// Write a matrix as a binary portable graymap, mapping `[-1, 1]` linearly
/// onto `[0, 255]` (clamped outside).
pub fn render_heatmap(matrix: &[f64], rows: usize, cols: usize, path: &Path) -> Result<()> {
    if matrix.len() != rows * cols {
        return Err(Error::Shape(format!(
            "matrix length {} does not match {rows}x{cols}",
            matrix.len()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("heatmap input contains non-finite values".into()));
    }
    let mut bytes = Vec::with_capacity(64 + matrix.len());
    bytes.extend_from_slice(format!("P5\n{cols} {rows}\n255\n").as_bytes());
    for v in matrix {
        bytes.push(((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8);
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Parse a binary PGM written by [`render_heatmap`].
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let header_err = || Error::Config(format!("{} is not a P5 graymap", path.display()));
    // Header: magic, dimensions, maxval, single whitespace, then raster.
    let text_end = bytes
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .ok_or_else(header_err)?;
    let header = std::str::from_utf8(&bytes[..text_end]).map_err(|_| header_err())?;
    let mut lines = header.lines();
    if lines.next() != Some("P5") {
        return Err(header_err());
    }
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(header_err)?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| header_err()))
        .collect::<Result<_>>()?;
    if dims.len() != 2 || lines.next() != Some("255") {
        return Err(header_err());
    }
    let raster = bytes[text_end + 1..].to_vec();
    if raster.len() != dims[0] * dims[1] {
        return Err(header_err());
    }
    Ok((dims[1], dims[0], raster))
}

/// CSV rendering of response profiles: `distortion,level,channel,response`.
pub fn profiles_to_csv(profiles: &[ResponseProfile]) -> String {
    let mut out = String::from("distortion,level,channel,response\n");
    for p in profiles {
        for (c, v) in p.per_channel.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", p.distortion, p.level, c, v));
        }
    }
    out
}

/// CSV rendering of a correlation summary per phase:
/// `phase,pre_mean_abs_offdiag,post_mean_abs_offdiag`.
pub fn deltas_to_csv(deltas: &[(f64, f64)]) -> String {
    let mut out = String::from("phase,pre_mean_abs_offdiag,post_mean_abs_offdiag\n");
    for (p, (pre, post)) in deltas.iter().enumerate() {
        out.push_str(&format!("{p},{pre},{post}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_channels_correlate_fully() {
        let plane: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let mut data = plane.clone();
        data.extend(&plane);
        let f = Tensor::from_vec(Shape::new(1, 2, 4, 4), data).unwrap();
        let report = channel_correlation(&f, "t");
        assert!((report.matrix[1] - 1.0).abs() < 1e-12);
        assert!((report.mean_abs_offdiag - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negated_channel_correlates_at_minus_one() {
        let plane: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let mut data = plane.clone();
        data.extend(plane.iter().map(|v| -v));
        let f = Tensor::from_vec(Shape::new(1, 2, 4, 4), data).unwrap();
        let report = channel_correlation(&f, "t");
        assert!((report.matrix[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_noise_channels_decorrelate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = Tensor::randn(Shape::new(1, 64, 100, 100), 1.0, &mut rng);
        let report = channel_correlation(&f, "t");
        assert!(
            report.mean_abs_offdiag < 0.05,
            "mean |offdiag| {} for independent channels",
            report.mean_abs_offdiag
        );
    }

    #[test]
    fn zero_variance_channels_are_flagged_not_fatal() {
        let mut data = vec![5.0; 16];
        data.extend((0..16).map(|i| i as f64));
        let f = Tensor::from_vec(Shape::new(1, 2, 4, 4), data).unwrap();
        let report = channel_correlation(&f, "t");
        assert!(report.zero_variance[0]);
        assert!(!report.zero_variance[1]);
        assert_eq!(report.matrix[0], 0.0);
        assert_eq!(report.matrix[1], 0.0);
    }

    #[test]
    fn heatmap_values_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let eye = vec![1.0, 0.0, 0.0, 1.0];
        render_heatmap(&eye, 2, 2, &path).unwrap();
        let (h, w, raster) = read_pgm(&path).unwrap();
        assert_eq!((h, w), (2, 2));
        assert_eq!(raster, vec![255, 128, 128, 255]);

        // Render -> parse -> render is byte-stable.
        let first = std::fs::read(&path).unwrap();
        let matrix: Vec<f64> = raster.iter().map(|&b| f64::from(b) / 127.5 - 1.0).collect();
        let path2 = dir.path().join("m2.pgm");
        render_heatmap(&matrix, h, w, &path2).unwrap();
        let second = std::fs::read(&path2).unwrap();
        assert_eq!(first, second);

        let zeros = vec![0.0; 4];
        let path3 = dir.path().join("z.pgm");
        render_heatmap(&zeros, 2, 2, &path3).unwrap();
        let (_, _, raster) = read_pgm(&path3).unwrap();
        assert!(raster.iter().all(|&b| b == 128));
    }

    #[test]
    fn top_channels_are_deterministic_and_sorted() {
        let p = ResponseProfile {
            distortion: "blur".into(),
            level: 3,
            per_channel: vec![0.5, 2.0, 1.0, 2.0],
        };
        assert_eq!(p.top_channels(2), vec![1, 3]);
        assert_eq!(p.top_channels(3), vec![1, 2, 3]);
    }
}
