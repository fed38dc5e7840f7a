//! JPEG compression artifacts via the baseline transform path.
//!
//! RGB → YCbCr, 4:2:0 chroma subsampling, per-8×8-block level shift +
//! 2-D DCT, quantize/dequantize against the standard baseline tables scaled
//! by the conventional quality law, inverse DCT, bilinear chroma upsample,
//! back to RGB with clamping. No entropy coding: quantization is the sole
//! artifact source, which is exactly what the distortion model needs.

use crate::synth::image::ImageBuf;

/// Standard baseline luminance quantization table, row-major zig-zag-free
/// (natural) order.
const LUMA_BASE: [i32; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Standard baseline chrominance quantization table.
const CHROMA_BASE: [i32; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Scale a base table by the conventional quality law:
/// `scale = 5000/q` for `q < 50`, else `200 - 2q` (integer arithmetic),
/// `entry = clamp((base*scale + 50) / 100, 1, 255)`. Quality 100 yields
/// all-ones tables.
fn scaled_table(base: &[i32; 64], quality: u32) -> [f64; 64] {
    let q = quality.clamp(1, 100) as i32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &b) in out.iter_mut().zip(base.iter()) {
        *o = ((b * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

/// 8-point DCT-II basis with orthonormal scaling folded in:
/// `basis[u][x] = 0.5 * C(u) * cos((2x+1)uπ/16)`.
fn dct_basis() -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (u, row) in b.iter_mut().enumerate() {
        let cu = if u == 0 { (0.5_f64).sqrt() } else { 1.0 };
        for (x, v) in row.iter_mut().enumerate() {
            *v = 0.5 * cu * ((2.0 * x as f64 + 1.0) * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    b
}

/// Quantize-dequantize one 8×8 block in place (values level-shifted by
/// the caller).
fn transform_block(block: &mut [f64; 64], table: &[f64; 64], basis: &[[f64; 8]; 8]) {
    // Forward DCT: rows then columns.
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            let mut acc = 0.0;
            for x in 0..8 {
                acc += basis[u][x] * block[y * 8 + x];
            }
            tmp[y * 8 + u] = acc;
        }
    }
    let mut coef = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                acc += basis[v][y] * tmp[y * 8 + u];
            }
            coef[v * 8 + u] = acc;
        }
    }
    // Quantize and dequantize.
    for (c, q) in coef.iter_mut().zip(table.iter()) {
        *c = (*c / q).round() * q;
    }
    // Inverse DCT: columns then rows.
    for u in 0..8 {
        for y in 0..8 {
            let mut acc = 0.0;
            for v in 0..8 {
                acc += basis[v][y] * coef[v * 8 + u];
            }
            tmp[y * 8 + u] = acc;
        }
    }
    for y in 0..8 {
        for x in 0..8 {
            let mut acc = 0.0;
            for u in 0..8 {
                acc += basis[u][x] * tmp[y * 8 + u];
            }
            block[y * 8 + x] = acc;
        }
    }
}

/// Pad a plane to multiples of `align` by edge replication.
fn pad_plane(src: &[f64], h: usize, w: usize, align: usize) -> (Vec<f64>, usize, usize) {
    let ph = h.div_ceil(align) * align;
    let pw = w.div_ceil(align) * align;
    let mut out = vec![0.0; ph * pw];
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            let sx = x.min(w - 1);
            out[y * pw + x] = src[sy * w + sx];
        }
    }
    (out, ph, pw)
}

fn process_plane(plane: &mut [f64], h: usize, w: usize, table: &[f64; 64], basis: &[[f64; 8]; 8]) {
    debug_assert!(h % 8 == 0 && w % 8 == 0);
    let mut block = [0.0; 64];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = plane[(by + y) * w + bx + x] - 128.0;
                }
            }
            transform_block(&mut block, table, basis);
            for y in 0..8 {
                for x in 0..8 {
                    plane[(by + y) * w + bx + x] = block[y * 8 + x] + 128.0;
                }
            }
        }
    }
}

/// Average 2×2 boxes (4:2:0 subsampling).
fn downsample2(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (hh, hw) = (h / 2, w / 2);
    let mut out = vec![0.0; hh * hw];
    for y in 0..hh {
        for x in 0..hw {
            let s = src[2 * y * w + 2 * x]
                + src[2 * y * w + 2 * x + 1]
                + src[(2 * y + 1) * w + 2 * x]
                + src[(2 * y + 1) * w + 2 * x + 1];
            out[y * hw + x] = s / 4.0;
        }
    }
    out
}

/// Bilinear 2× upsample with samples centered on their 2×2 boxes.
fn upsample2(src: &[f64], hh: usize, hw: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let fy = (y as f64 - 0.5) / 2.0;
        let y0 = fy.floor().clamp(0.0, (hh - 1) as f64) as usize;
        let y1 = (y0 + 1).min(hh - 1);
        let ty = (fy - y0 as f64).clamp(0.0, 1.0);
        for x in 0..w {
            let fx = (x as f64 - 0.5) / 2.0;
            let x0 = fx.floor().clamp(0.0, (hw - 1) as f64) as usize;
            let x1 = (x0 + 1).min(hw - 1);
            let tx = (fx - x0 as f64).clamp(0.0, 1.0);
            let a = src[y0 * hw + x0] * (1.0 - tx) + src[y0 * hw + x1] * tx;
            let b = src[y1 * hw + x0] * (1.0 - tx) + src[y1 * hw + x1] * tx;
            out[y * w + x] = a * (1.0 - ty) + b * ty;
        }
    }
    out
}

/// Apply JPEG quantization artifacts at the given quality (1–100).
pub fn jpeg_artifacts(img: &ImageBuf, quality: u32) -> ImageBuf {
    let (h, w) = (img.height(), img.width());
    let hw = h * w;
    let basis = dct_basis();
    let luma_table = scaled_table(&LUMA_BASE, quality);
    let chroma_table = scaled_table(&CHROMA_BASE, quality);

    // RGB -> YCbCr (JFIF convention).
    let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
    let mut yy = vec![0.0; hw];
    let mut cb = vec![0.0; hw];
    let mut cr = vec![0.0; hw];
    for p in 0..hw {
        let (rv, gv, bv) = (r[p], g[p], b[p]);
        yy[p] = 0.299 * rv + 0.587 * gv + 0.114 * bv;
        cb[p] = 128.0 - 0.168735892 * rv - 0.331264108 * gv + 0.5 * bv;
        cr[p] = 128.0 + 0.5 * rv - 0.418687589 * gv - 0.081312411 * bv;
    }

    // Luma: pad to 8, transform, crop.
    let (mut y_pad, yh, yw) = pad_plane(&yy, h, w, 8);
    process_plane(&mut y_pad, yh, yw, &luma_table, &basis);

    // Chroma: pad to 16 so the subsampled planes align to 8.
    let mut chroma_out = Vec::with_capacity(2);
    for plane in [&cb, &cr] {
        let (pad, ph, pw) = pad_plane(plane, h, w, 16);
        let mut small = downsample2(&pad, ph, pw);
        process_plane(&mut small, ph / 2, pw / 2, &chroma_table, &basis);
        let full = upsample2(&small, ph / 2, pw / 2, ph, pw);
        chroma_out.push((full, pw));
    }

    let mut out = ImageBuf::new(h, w);
    for y in 0..h {
        for x in 0..w {
            let yv = y_pad[y * yw + x];
            let cbv = chroma_out[0].0[y * chroma_out[0].1 + x] - 128.0;
            let crv = chroma_out[1].0[y * chroma_out[1].1 + x] - 128.0;
            let rv = yv + 1.402 * crv;
            let gv = yv - 0.344136 * cbv - 0.714136 * crv;
            let bv = yv + 1.772 * cbv;
            out.set(0, y, x, rv.clamp(0.0, 255.0));
            out.set(1, y, x, gv.clamp(0.0, 255.0));
            out.set(2, y, x, bv.clamp(0.0, 255.0));
        }
    }
    out
}
