//! Elementwise, broadcast, reduction and shape operations with their
//! backward rules.
//!
//! Broadcasting is deliberately narrow: an operand is either the full
//! output shape, a scalar `[1,1,1,1]`, a per-channel `[N,C,1,1]`, or a
//! shared per-channel `[1,C,1,1]`. Anything richer is rejected so every
//! backward reduction stays auditable.

use crate::error::{Error, Result};
use crate::tensor::{Backward, Graph, Shape, Tensor};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// How an operand maps onto the output grid.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Operand {
    Full,
    Scalar,
    ChanBatch,
    Chan,
}

fn classify(op_shape: Shape, out: Shape) -> Option<Operand> {
    if op_shape == out {
        Some(Operand::Full)
    } else if op_shape.is_scalar() {
        Some(Operand::Scalar)
    } else if op_shape.0 == [out.n(), out.c(), 1, 1] {
        Some(Operand::ChanBatch)
    } else if op_shape.0 == [1, out.c(), 1, 1] {
        Some(Operand::Chan)
    } else {
        None
    }
}

fn binary_layout(a: Shape, b: Shape) -> Result<(Shape, Operand, Operand)> {
    // The output takes the larger operand's shape.
    let out = if a.count() >= b.count() { a } else { b };
    match (classify(a, out), classify(b, out)) {
        (Some(pa), Some(pb)) => Ok((out, pa, pb)),
        _ => Err(Error::Shape(format!(
            "operands {a} and {b} are not broadcast-compatible \
             (allowed: equal shapes, scalar, [N,C,1,1], [1,C,1,1])"
        ))),
    }
}

/// Flat index into an operand buffer for output plane `(n, c)`; `None`
/// means the operand is a full plane slice rather than one value.
fn plane_const(op: Operand, data: &[f64], n: usize, c: usize, channels: usize) -> Option<f64> {
    match op {
        Operand::Full => None,
        Operand::Scalar => Some(data[0]),
        Operand::ChanBatch => Some(data[n * channels + c]),
        Operand::Chan => Some(data[c]),
    }
}

fn apply(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
    }
}

fn binary_forward(op: BinOp, a: &Tensor, b: &Tensor) -> Result<(Shape, Vec<f64>)> {
    let (out, pa, pb) = binary_layout(a.shape(), b.shape())?;
    if op == BinOp::Div && b.data().iter().any(|&v| v == 0.0) {
        return Err(Error::Domain("division by zero".into()));
    }
    let (n, c, hw) = (out.n(), out.c(), out.hw());
    let mut data = vec![0.0; out.count()];
    let (ad, bd) = (a.data(), b.data());
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * hw;
            let dst = &mut data[base..base + hw];
            let ac = plane_const(pa, ad, ni, ci, c);
            let bc = plane_const(pb, bd, ni, ci, c);
            match (ac, bc) {
                (None, None) => {
                    let ap = &ad[base..base + hw];
                    let bp = &bd[base..base + hw];
                    for ((d, &x), &y) in dst.iter_mut().zip(ap).zip(bp) {
                        *d = apply(op, x, y);
                    }
                }
                (None, Some(y)) => {
                    let ap = &ad[base..base + hw];
                    for (d, &x) in dst.iter_mut().zip(ap) {
                        *d = apply(op, x, y);
                    }
                }
                (Some(x), None) => {
                    let bp = &bd[base..base + hw];
                    for (d, &y) in dst.iter_mut().zip(bp) {
                        *d = apply(op, x, y);
                    }
                }
                (Some(x), Some(y)) => {
                    for d in dst.iter_mut() {
                        *d = apply(op, x, y);
                    }
                }
            }
        }
    }
    Ok((out, data))
}

struct BinaryRule {
    op: BinOp,
}

impl BinaryRule {
    /// Accumulate `contrib` for output position `(n, c, k)` into the
    /// gradient buffer of an operand with layout `pat`.
    #[inline]
    fn slot(pat: Operand, n: usize, c: usize, channels: usize, flat: usize) -> usize {
        match pat {
            Operand::Full => flat,
            Operand::Scalar => 0,
            Operand::ChanBatch => n * channels + c,
            Operand::Chan => c,
        }
    }
}

impl Backward for BinaryRule {
    fn input_grads(
        &self,
        inputs: &[Tensor],
        grad_out: &[f64],
        needed: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let (a, b) = (&inputs[0], &inputs[1]);
        let (out, pa, pb) = binary_layout(a.shape(), b.shape())?;
        let (n, c, hw) = (out.n(), out.c(), out.hw());
        let (ad, bd) = (a.data(), b.data());
        let mut ga = needed[0].then(|| vec![0.0; a.shape().count()]);
        let mut gb = needed[1].then(|| vec![0.0; b.shape().count()]);
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * hw;
                for k in 0..hw {
                    let flat = base + k;
                    let g = grad_out[flat];
                    let ai = Self::slot(pa, ni, ci, c, flat);
                    let bi = Self::slot(pb, ni, ci, c, flat);
                    match self.op {
                        BinOp::Add => {
                            if let Some(ga) = ga.as_mut() {
                                ga[ai] += g;
                            }
                            if let Some(gb) = gb.as_mut() {
                                gb[bi] += g;
                            }
                        }
                        BinOp::Sub => {
                            if let Some(ga) = ga.as_mut() {
                                ga[ai] += g;
                            }
                            if let Some(gb) = gb.as_mut() {
                                gb[bi] -= g;
                            }
                        }
                        BinOp::Mul => {
                            if let Some(ga) = ga.as_mut() {
                                ga[ai] += g * bd[bi];
                            }
                            if let Some(gb) = gb.as_mut() {
                                gb[bi] += g * ad[ai];
                            }
                        }
                        BinOp::Div => {
                            let bv = bd[bi];
                            if let Some(ga) = ga.as_mut() {
                                ga[ai] += g / bv;
                            }
                            if let Some(gb) = gb.as_mut() {
                                gb[bi] -= g * ad[ai] / (bv * bv);
                            }
                        }
                    }
                }
            }
        }
        Ok(vec![ga, gb])
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum UnOp {
    Square,
    Sqrt,
    Relu,
    Sigmoid,
    Exp,
    Abs,
    Neg,
}

struct UnaryRule {
    op: UnOp,
    /// Forward output, saved for rules whose derivative is cheapest in
    /// terms of y (sqrt, sigmoid, exp).
    output: Vec<f64>,
}

impl Backward for UnaryRule {
    fn input_grads(
        &self,
        inputs: &[Tensor],
        grad_out: &[f64],
        _needed: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let x = inputs[0].data();
        let y = &self.output;
        let mut gx = vec![0.0; x.len()];
        match self.op {
            UnOp::Square => {
                for i in 0..x.len() {
                    gx[i] = grad_out[i] * 2.0 * x[i];
                }
            }
            UnOp::Sqrt => {
                for i in 0..x.len() {
                    gx[i] = grad_out[i] / (2.0 * y[i]);
                }
            }
            UnOp::Relu => {
                for i in 0..x.len() {
                    gx[i] = if x[i] > 0.0 { grad_out[i] } else { 0.0 };
                }
            }
            UnOp::Sigmoid => {
                for i in 0..x.len() {
                    gx[i] = grad_out[i] * y[i] * (1.0 - y[i]);
                }
            }
            UnOp::Exp => {
                for i in 0..x.len() {
                    gx[i] = grad_out[i] * y[i];
                }
            }
            UnOp::Abs => {
                for i in 0..x.len() {
                    gx[i] = grad_out[i] * if x[i] > 0.0 { 1.0 } else if x[i] < 0.0 { -1.0 } else { 0.0 };
                }
            }
            UnOp::Neg => {
                for i in 0..x.len() {
                    gx[i] = -grad_out[i];
                }
            }
        }
        Ok(vec![Some(gx)])
    }
}

struct ScalarRule {
    /// Multiplier applied to the upstream gradient (1 for add, alpha for mul).
    factor: f64,
}

impl Backward for ScalarRule {
    fn input_grads(
        &self,
        _inputs: &[Tensor],
        grad_out: &[f64],
        _needed: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        Ok(vec![Some(grad_out.iter().map(|g| g * self.factor).collect())])
    }
}

enum ReduceKind {
    Sum,
    Mean,
    /// Global average pool over H×W, producing `[N, C, 1, 1]`.
    Gap,
}

struct ReduceRule {
    kind: ReduceKind,
    in_shape: Shape,
}

impl Backward for ReduceRule {
    fn input_grads(
        &self,
        _inputs: &[Tensor],
        grad_out: &[f64],
        _needed: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let count = self.in_shape.count();
        let gx = match self.kind {
            ReduceKind::Sum => vec![grad_out[0]; count],
            ReduceKind::Mean => vec![grad_out[0] / count as f64; count],
            ReduceKind::Gap => {
                let hw = self.in_shape.hw();
                let mut gx = vec![0.0; count];
                for (plane, gx_plane) in gx.chunks_mut(hw).enumerate() {
                    let g = grad_out[plane] / hw as f64;
                    gx_plane.fill(g);
                }
                gx
            }
        };
        Ok(vec![Some(gx)])
    }
}

struct ReshapeRule;

impl Backward for ReshapeRule {
    fn input_grads(
        &self,
        _inputs: &[Tensor],
        grad_out: &[f64],
        _needed: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        Ok(vec![Some(grad_out.to_vec())])
    }
}

struct ConcatRule {
    c_a: usize,
}

impl Backward for ConcatRule {
    fn input_grads(
        &self,
        inputs: &[Tensor],
        grad_out: &[f64],
        needed: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let sa = inputs[0].shape();
        let sb = inputs[1].shape();
        let (n, hw) = (sa.n(), sa.hw());
        let (ca, cb) = (self.c_a, sb.c());
        let mut ga = needed[0].then(|| vec![0.0; sa.count()]);
        let mut gb = needed[1].then(|| vec![0.0; sb.count()]);
        let c_out = ca + cb;
        for ni in 0..n {
            for ci in 0..c_out {
                let src = &grad_out[(ni * c_out + ci) * hw..][..hw];
                if ci < ca {
                    if let Some(ga) = ga.as_mut() {
                        ga[(ni * ca + ci) * hw..][..hw].copy_from_slice(src);
                    }
                } else if let Some(gb) = gb.as_mut() {
                    gb[(ni * cb + (ci - ca)) * hw..][..hw].copy_from_slice(src);
                }
            }
        }
        Ok(vec![ga, gb])
    }
}

impl Graph {
    fn binary(&mut self, op: BinOp, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (shape, data) = binary_forward(op, a, b)?;
        let rec = self.wants_grad(&[a, b]);
        let out = Tensor::from_op(shape, data, rec);
        if rec {
            self.push_node(vec![a.clone(), b.clone()], &out, Box::new(BinaryRule { op }));
        }
        Ok(out)
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(BinOp::Add, a, b)
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(BinOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(BinOp::Mul, a, b)
    }

    pub fn div(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(BinOp::Div, a, b)
    }

    fn unary(&mut self, op: UnOp, x: &Tensor) -> Result<Tensor> {
        let xd = x.data();
        if op == UnOp::Sqrt && xd.iter().any(|&v| v < 0.0) {
            return Err(Error::Domain("sqrt of negative value".into()));
        }
        let data: Vec<f64> = match op {
            UnOp::Square => xd.iter().map(|v| v * v).collect(),
            UnOp::Sqrt => xd.iter().map(|v| v.sqrt()).collect(),
            UnOp::Relu => xd.iter().map(|v| v.max(0.0)).collect(),
            UnOp::Sigmoid => xd.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
            UnOp::Exp => xd.iter().map(|v| v.exp()).collect(),
            UnOp::Abs => xd.iter().map(|v| v.abs()).collect(),
            UnOp::Neg => xd.iter().map(|v| -v).collect(),
        };
        let rec = self.wants_grad(&[x]);
        let out = Tensor::from_op(x.shape(), data.clone(), rec);
        if rec {
            self.push_node(
                vec![x.clone()],
                &out,
                Box::new(UnaryRule { op, output: data }),
            );
        }
        Ok(out)
    }

    pub fn square(&mut self, x: &Tensor) -> Result<Tensor> {
        self.unary(UnOp::Square, x)
    }

    pub fn sqrt(&mut self, x: &Tensor) -> Result<Tensor> {
        self.unary(UnOp::Sqrt, x)
    }

    pub fn relu(&mut self, x: &Tensor) -> Result<Tensor> {
        self.unary(UnOp::Relu, x)
    }

    pub fn sigmoid(&mut self, x: &Tensor) -> Result<Tensor> {
        self.unary(UnOp::Sigmoid, x)
    }

    pub fn exp(&mut self, x: &Tensor) -> Result<Tensor> {
        self.unary(UnOp::Exp, x)
    }

    pub fn abs(&mut self, x: &Tensor) -> Result<Tensor> {
        self.unary(UnOp::Abs, x)
    }

    pub fn neg(&mut self, x: &Tensor) -> Result<Tensor> {
        self.unary(UnOp::Neg, x)
    }

    pub fn add_scalar(&mut self, x: &Tensor, value: f64) -> Result<Tensor> {
        let data = x.data().iter().map(|v| v + value).collect();
        let rec = self.wants_grad(&[x]);
        let out = Tensor::from_op(x.shape(), data, rec);
        if rec {
            self.push_node(vec![x.clone()], &out, Box::new(ScalarRule { factor: 1.0 }));
        }
        Ok(out)
    }

    pub fn mul_scalar(&mut self, x: &Tensor, value: f64) -> Result<Tensor> {
        let data = x.data().iter().map(|v| v * value).collect();
        let rec = self.wants_grad(&[x]);
        let out = Tensor::from_op(x.shape(), data, rec);
        if rec {
            self.push_node(vec![x.clone()], &out, Box::new(ScalarRule { factor: value }));
        }
        Ok(out)
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&mut self, x: &Tensor) -> Result<Tensor> {
        let total: f64 = x.data().iter().sum();
        let rec = self.wants_grad(&[x]);
        let out = Tensor::from_op(Shape::new(1, 1, 1, 1), vec![total], rec);
        if rec {
            self.push_node(
                vec![x.clone()],
                &out,
                Box::new(ReduceRule {
                    kind: ReduceKind::Sum,
                    in_shape: x.shape(),
                }),
            );
        }
        Ok(out)
    }

    /// Mean of all elements, as a scalar tensor.
    pub fn mean(&mut self, x: &Tensor) -> Result<Tensor> {
        let total: f64 = x.data().iter().sum();
        let mean = total / x.shape().count() as f64;
        let rec = self.wants_grad(&[x]);
        let out = Tensor::from_op(Shape::new(1, 1, 1, 1), vec![mean], rec);
        if rec {
            self.push_node(
                vec![x.clone()],
                &out,
                Box::new(ReduceRule {
                    kind: ReduceKind::Mean,
                    in_shape: x.shape(),
                }),
            );
        }
        Ok(out)
    }

    /// Mean over the spatial extent of each channel: `[N,C,H,W] -> [N,C,1,1]`.
    pub fn global_avg_pool(&mut self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        let hw = s.hw();
        let data: Vec<f64> = x
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().sum::<f64>() / hw as f64)
            .collect();
        let rec = self.wants_grad(&[x]);
        let out = Tensor::from_op(Shape::new(s.n(), s.c(), 1, 1), data, rec);
        if rec {
            self.push_node(
                vec![x.clone()],
                &out,
                Box::new(ReduceRule {
                    kind: ReduceKind::Gap,
                    in_shape: s,
                }),
            );
        }
        Ok(out)
    }

    /// Reinterpret the data under a new shape with the same element count.
    pub fn reshape(&mut self, x: &Tensor, shape: Shape) -> Result<Tensor> {
        if shape.count() != x.shape().count() {
            return Err(Error::Shape(format!(
                "cannot reshape {} into {}",
                x.shape(),
                shape
            )));
        }
        let rec = self.wants_grad(&[x]);
        let out = Tensor::from_op(shape, x.data().to_vec(), rec);
        if rec {
            self.push_node(vec![x.clone()], &out, Box::new(ReshapeRule));
        }
        Ok(out)
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.n() != sb.n() || sa.h() != sb.h() || sa.w() != sb.w() {
            return Err(Error::Shape(format!(
                "concat_channels requires matching batch and spatial dims, got {sa} and {sb}"
            )));
        }
        let (n, hw) = (sa.n(), sa.hw());
        let (ca, cb) = (sa.c(), sb.c());
        let out_shape = Shape::new(n, ca + cb, sa.h(), sa.w());
        let mut data = vec![0.0; out_shape.count()];
        for ni in 0..n {
            for ci in 0..ca {
                data[(ni * (ca + cb) + ci) * hw..][..hw]
                    .copy_from_slice(&a.data()[(ni * ca + ci) * hw..][..hw]);
            }
            for ci in 0..cb {
                data[(ni * (ca + cb) + ca + ci) * hw..][..hw]
                    .copy_from_slice(&b.data()[(ni * cb + ci) * hw..][..hw]);
            }
        }
        let rec = self.wants_grad(&[a, b]);
        let out = Tensor::from_op(out_shape, data, rec);
        if rec {
            self.push_node(
                vec![a.clone(), b.clone()],
                &out,
                Box::new(ConcatRule { c_a: ca }),
            );
        }
        Ok(out)
    }
}
