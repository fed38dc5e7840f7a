//! Direct 2-D convolution ("same" zero padding, stride 1) with backward
//! rules for input, kernel bank and bias.
//!
//! The kernels parallelize over `(batch, output channel)` planes; each
//! plane is owned by exactly one task and accumulated in a fixed order, so
//! results are identical with and without the `parallel` feature.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Backward, Graph, Shape, Tensor};

/// `dst[y, x] += w * src[y + dy, x + dx]` over all positions where the
/// shifted index is in bounds. Both planes are `h × wd` row-major.
#[inline]
fn shifted_axpy(dst: &mut [f64], src: &[f64], h: usize, wd: usize, dy: isize, dx: isize, w: f64) {
    let y0 = (-dy).max(0) as usize;
    let y1 = ((h as isize - dy).min(h as isize)).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = ((wd as isize - dx).min(wd as isize)).max(0) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let sx = (x0 as isize + dx) as usize;
        let d = &mut dst[y * wd + x0..y * wd + x1];
        let s = &src[sy * wd + sx..sy * wd + sx + (x1 - x0)];
        for (di, si) in d.iter_mut().zip(s) {
            *di += w * si;
        }
    }
}

/// `Σ a[y, x] * b[y + dy, x + dx]` over in-bounds positions.
#[inline]
fn shifted_dot(a: &[f64], b: &[f64], h: usize, wd: usize, dy: isize, dx: isize) -> f64 {
    let y0 = (-dy).max(0) as usize;
    let y1 = ((h as isize - dy).min(h as isize)).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = ((wd as isize - dx).min(wd as isize)).max(0) as usize;
    if x0 >= x1 {
        return 0.0;
    }
    let mut acc = 0.0;
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let sx = (x0 as isize + dx) as usize;
        let ap = &a[y * wd + x0..y * wd + x1];
        let bp = &b[sy * wd + sx..sy * wd + sx + (x1 - x0)];
        let mut s = 0.0;
        for (x, y) in ap.iter().zip(bp) {
            s += x * y;
        }
        acc += s;
    }
    acc
}

fn validate(x: Shape, w: Shape, b: Shape) -> Result<(usize, usize, usize)> {
    let (c_out, c_in, k, kk) = (w.n(), w.c(), w.h(), w.w());
    if k != kk {
        return Err(Error::Config(format!("conv kernel must be square, got {k}x{kk}")));
    }
    if k % 2 == 0 {
        return Err(Error::Config(format!("conv kernel size must be odd, got {k}")));
    }
    if c_in != x.c() {
        return Err(Error::Shape(format!(
            "conv input has {} channels but the kernel bank expects {}",
            x.c(),
            c_in
        )));
    }
    if b.0 != [1, c_out, 1, 1] {
        return Err(Error::Shape(format!(
            "conv bias must have shape [1, {c_out}, 1, 1], got {b}"
        )));
    }
    Ok((c_out, c_in, k))
}

fn conv_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(Shape, Vec<f64>)> {
    let (c_out, c_in, k) = validate(x.shape(), weight.shape(), bias.shape())?;
    let s = x.shape();
    let (n, h, wd, hw) = (s.n(), s.h(), s.w(), s.hw());
    let pad = (k / 2) as isize;
    let out_shape = Shape::new(n, c_out, h, wd);
    let mut out = vec![0.0; out_shape.count()];
    let (xd, kd, bd) = (x.data(), weight.data(), bias.data());

    par::for_each_chunk_mut(&mut out, hw, |plane_idx, plane| {
        let ni = plane_idx / c_out;
        let co = plane_idx % c_out;
        plane.fill(bd[co]);
        for ci in 0..c_in {
            let in_plane = &xd[(ni * c_in + ci) * hw..][..hw];
            let kbase = (co * c_in + ci) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = kd[kbase + ky * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    shifted_axpy(
                        plane,
                        in_plane,
                        h,
                        wd,
                        ky as isize - pad,
                        kx as isize - pad,
                        wv,
                    );
                }
            }
        }
    });
    Ok((out_shape, out))
}

struct Conv2dRule {
    k: usize,
}

impl Backward for Conv2dRule {
    fn input_grads(
        &self,
        inputs: &[Tensor],
        grad_out: &[f64],
        needed: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let (x, weight, _bias) = (&inputs[0], &inputs[1], &inputs[2]);
        let s = x.shape();
        let (n, h, wd, hw) = (s.n(), s.h(), s.w(), s.hw());
        let c_in = s.c();
        let c_out = weight.shape().n();
        let k = self.k;
        let pad = (k / 2) as isize;
        let (xd, kd) = (x.data(), weight.data());

        // d/d input: correlate the output gradient with the flipped kernel.
        let gx = if needed[0] {
            let mut gx = vec![0.0; s.count()];
            par::for_each_chunk_mut(&mut gx, hw, |plane_idx, plane| {
                let ni = plane_idx / c_in;
                let ci = plane_idx % c_in;
                for co in 0..c_out {
                    let g_plane = &grad_out[(ni * c_out + co) * hw..][..hw];
                    let kbase = (co * c_in + ci) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = kd[kbase + ky * k + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            shifted_axpy(
                                plane,
                                g_plane,
                                h,
                                wd,
                                pad - ky as isize,
                                pad - kx as isize,
                                wv,
                            );
                        }
                    }
                }
            });
            Some(gx)
        } else {
            None
        };

        // d/d kernel: per output channel, dot the gradient plane against
        // shifted input planes, batch-accumulated in index order.
        let gw = if needed[1] {
            let mut gw = vec![0.0; weight.shape().count()];
            par::for_each_chunk_mut(&mut gw, c_in * k * k, |co, wslice| {
                for ni in 0..n {
                    let g_plane = &grad_out[(ni * c_out + co) * hw..][..hw];
                    for ci in 0..c_in {
                        let in_plane = &xd[(ni * c_in + ci) * hw..][..hw];
                        for ky in 0..k {
                            for kx in 0..k {
                                wslice[(ci * k + ky) * k + kx] += shifted_dot(
                                    g_plane,
                                    in_plane,
                                    h,
                                    wd,
                                    ky as isize - pad,
                                    kx as isize - pad,
                                );
                            }
                        }
                    }
                }
            });
            Some(gw)
        } else {
            None
        };

        let gb = if needed[2] {
            let mut gb = vec![0.0; c_out];
            for ni in 0..n {
                for (co, gb_slot) in gb.iter_mut().enumerate() {
                    *gb_slot += grad_out[(ni * c_out + co) * hw..][..hw].iter().sum::<f64>();
                }
            }
            Some(gb)
        } else {
            None
        };

        Ok(vec![gx, gw, gb])
    }
}

impl Graph {
    /// 2-D convolution with "same" zero padding and stride 1.
    ///
    /// `weight` is a `[C_out, C_in, k, k]` kernel bank (odd `k`); `bias` is
    /// per-output-channel, shaped `[1, C_out, 1, 1]`. Differentiable with
    /// respect to all three inputs.
    pub fn conv2d(&mut self, x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (_, _, k) = validate(x.shape(), weight.shape(), bias.shape())?;
        let (shape, data) = conv_forward(x, weight, bias)?;
        let rec = self.wants_grad(&[x, weight, bias]);
        let out = Tensor::from_op(shape, data, rec);
        if rec {
            self.push_node(
                vec![x.clone(), weight.clone(), bias.clone()],
                &out,
                Box::new(Conv2dRule { k }),
            );
        }
        Ok(out)
    }
}
