//! Reusable network blocks: convolution wrapper, squeeze-and-excitation
//! channel attention, residual block, and the two-branch fusion block.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Shape, Tensor};

/// A 2-D convolution layer: `[C_out, C_in, k, k]` kernel bank plus
/// per-output-channel bias, "same" padding, stride 1.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    c_in: usize,
    c_out: usize,
    k: usize,
}

impl Conv2d {
    /// Fan-in-scaled uniform initialization: kernel entries from
    /// `U(-1/sqrt(C_in·k²), +1/sqrt(C_in·k²))`, bias zero.
    pub fn new<R: Rng>(c_in: usize, c_out: usize, k: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        let weight: Vec<f64> = (0..c_out * c_in * k * k)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self::from_parts(c_in, c_out, k, weight, vec![0.0; c_out])
    }

    pub fn from_parts(
        c_in: usize,
        c_out: usize,
        k: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if k % 2 == 0 || k == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {k}")));
        }
        Ok(Conv2d {
            weight: Tensor::param_from_vec(Shape::new(c_out, c_in, k, k), weight)?,
            bias: Tensor::param_from_vec(Shape::new(1, c_out, 1, 1), bias)?,
            c_in,
            c_out,
            k,
        })
    }

    /// All-zero kernels and biases; maps everything to zero.
    pub fn zeroed(c_in: usize, c_out: usize, k: usize) -> Self {
        Self::from_parts(c_in, c_out, k, vec![0.0; c_out * c_in * k * k], vec![0.0; c_out])
            .expect("zero initialization is valid")
    }

    /// Identity map for `C -> C`: center tap 1 on the matching channel.
    pub fn identity(c: usize, k: usize) -> Self {
        let mut weight = vec![0.0; c * c * k * k];
        let center = (k / 2) * k + (k / 2);
        for ch in 0..c {
            weight[(ch * c + ch) * k * k + center] = 1.0;
        }
        Self::from_parts(c, c, k, weight, vec![0.0; c]).expect("identity kernel is valid")
    }

    pub fn forward(&self, graph: &mut Graph, x: &Tensor) -> Result<Tensor> {
        graph.conv2d(x, &self.weight, &self.bias)
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn kernel_size(&self) -> usize {
        self.k
    }

    /// Learnable scalar count of a conv layer with these dimensions.
    pub fn param_count(c_in: usize, c_out: usize, k: usize) -> usize {
        c_out * c_in * k * k + c_out
    }
}

/// Squeeze-and-excitation channel attention: a global average pool feeds a
/// `C -> C/r -> C` bottleneck whose sigmoid output scales each channel.
#[derive(Clone, Debug)]
pub struct ChannelAttentionParams {
    pub fc1: Conv2d,
    pub fc2: Conv2d,
    channels: usize,
    reduction: usize,
}

impl ChannelAttentionParams {
    pub fn new<R: Rng>(channels: usize, reduction: usize, rng: &mut R) -> Result<Self> {
        Self::check_dims(channels, reduction)?;
        Ok(ChannelAttentionParams {
            fc1: Conv2d::new(channels, channels / reduction, 1, rng)?,
            fc2: Conv2d::new(channels / reduction, channels, 1, rng)?,
            channels,
            reduction,
        })
    }

    /// All weights and biases zero: the gate sits at `sigmoid(0) = 0.5`.
    pub fn zeroed(channels: usize, reduction: usize) -> Result<Self> {
        Self::check_dims(channels, reduction)?;
        Ok(ChannelAttentionParams {
            fc1: Conv2d::zeroed(channels, channels / reduction, 1),
            fc2: Conv2d::zeroed(channels / reduction, channels, 1),
            channels,
            reduction,
        })
    }

    /// Zero weights with a large positive `fc2` bias: the gate saturates to
    /// 1 and the block passes features through (up to 1e-9).
    pub fn saturated(channels: usize, reduction: usize) -> Result<Self> {
        let mut ca = Self::zeroed(channels, reduction)?;
        ca.fc2 = Conv2d::from_parts(
            channels / reduction,
            channels,
            1,
            vec![0.0; channels * (channels / reduction)],
            vec![20.0; channels],
        )?;
        Ok(ca)
    }

    fn check_dims(channels: usize, reduction: usize) -> Result<()> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(Error::Config(format!(
                "attention reduction {reduction} must divide the channel count {channels}"
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn reduction(&self) -> usize {
        self.reduction
    }

    pub fn param_count(channels: usize, reduction: usize) -> usize {
        let hidden = channels / reduction;
        Conv2d::param_count(channels, hidden, 1) + Conv2d::param_count(hidden, channels, 1)
    }
}

/// Scale each channel of `f` by `sigmoid(fc2(relu(fc1(gap(f)))))`.
pub fn channel_attention(
    graph: &mut Graph,
    f: &Tensor,
    params: &ChannelAttentionParams,
) -> Result<Tensor> {
    if f.shape().c() != params.channels {
        return Err(Error::Shape(format!(
            "channel attention built for {} channels applied to {}",
            params.channels,
            f.shape()
        )));
    }
    let pooled = graph.global_avg_pool(f)?;
    let hidden = params.fc1.forward(graph, &pooled)?;
    let hidden = graph.relu(&hidden)?;
    let gate = params.fc2.forward(graph, &hidden)?;
    let gate = graph.sigmoid(&gate)?;
    graph.mul(f, &gate)
}

/// Residual block: two 3×3 convolutions at constant width.
#[derive(Clone, Debug)]
pub struct ResBlockParams {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

impl ResBlockParams {
    pub fn new<R: Rng>(channels: usize, rng: &mut R) -> Result<Self> {
        Ok(ResBlockParams {
            conv1: Conv2d::new(channels, channels, 3, rng)?,
            conv2: Conv2d::new(channels, channels, 3, rng)?,
        })
    }

    /// Zeroed convolutions make the block an exact identity map.
    pub fn zeroed(channels: usize) -> Self {
        ResBlockParams {
            conv1: Conv2d::zeroed(channels, channels, 3),
            conv2: Conv2d::zeroed(channels, channels, 3),
        }
    }

    pub fn param_count(channels: usize) -> usize {
        2 * Conv2d::param_count(channels, channels, 3)
    }
}

/// `f + conv2(relu(conv1(f)))`.
pub fn resblock(graph: &mut Graph, f: &Tensor, params: &ResBlockParams) -> Result<Tensor> {
    let h = params.conv1.forward(graph, f)?;
    let h = graph.relu(&h)?;
    let h = params.conv2.forward(graph, &h)?;
    graph.add(f, &h)
}

/// Fusion of two same-shape branches: channel attention over the
/// 2C-channel concatenation followed by a 1×1 channel-mixing convolution
/// back to C.
#[derive(Clone, Debug)]
pub struct FusionParams {
    pub ca: ChannelAttentionParams,
    pub conv: Conv2d,
}

impl FusionParams {
    pub fn new<R: Rng>(channels: usize, reduction: usize, rng: &mut R) -> Result<Self> {
        Ok(FusionParams {
            ca: ChannelAttentionParams::new(2 * channels, reduction, rng)?,
            conv: Conv2d::new(2 * channels, channels, 1, rng)?,
        })
    }

    pub fn param_count(channels: usize, reduction: usize) -> usize {
        ChannelAttentionParams::param_count(2 * channels, reduction)
            + Conv2d::param_count(2 * channels, channels, 1)
    }
}

/// `conv1x1(CA(concat_channels(lower, upper)))`.
pub fn fuse_branches(
    graph: &mut Graph,
    lower: &Tensor,
    upper: &Tensor,
    params: &FusionParams,
) -> Result<Tensor> {
    if lower.shape() != upper.shape() {
        return Err(Error::Shape(format!(
            "fusion branches must share a shape, got {} and {}",
            lower.shape(),
            upper.shape()
        )));
    }
    let stacked = graph.concat_channels(lower, upper)?;
    let gated = channel_attention(graph, &stacked, &params.ca)?;
    params.conv.forward(graph, &gated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_difference_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zeroed_attention_halves_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = Tensor::randn(Shape::new(2, 4, 3, 3), 1.0, &mut rng);
        let ca = ChannelAttentionParams::zeroed(4, 4).unwrap();
        let mut g = Graph::no_grad();
        let out = channel_attention(&mut g, &f, &ca).unwrap();
        for (o, i) in out.data().iter().zip(f.data()) {
            assert!((o - i / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_attention_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = Tensor::randn(Shape::new(1, 4, 3, 3), 1.0, &mut rng);
        let ca = ChannelAttentionParams::saturated(4, 2).unwrap();
        let mut g = Graph::no_grad();
        let out = channel_attention(&mut g, &f, &ca).unwrap();
        for (o, i) in out.data().iter().zip(f.data()) {
            assert!((o - i).abs() < 1e-8);
        }
    }

    #[test]
    fn attention_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (c, r) = (4, 2);
        let f = Tensor::randn(Shape::new(2, c, 3, 5), 1.0, &mut rng);
        let ca = ChannelAttentionParams::new(c, r, &mut rng).unwrap();
        let mut g = Graph::no_grad();
        let out = channel_attention(&mut g, &f, &ca).unwrap();

        // Straight-line reimplementation.
        let hw = 15;
        let hiddenc = c / r;
        let (w1, b1) = (ca.fc1.weight.data(), ca.fc1.bias.data());
        let (w2, b2) = (ca.fc2.weight.data(), ca.fc2.bias.data());
        for n in 0..2 {
            let mut pooled = vec![0.0; c];
            for ch in 0..c {
                pooled[ch] =
                    f.data()[(n * c + ch) * hw..][..hw].iter().sum::<f64>() / hw as f64;
            }
            let mut hid = vec![0.0; hiddenc];
            for o in 0..hiddenc {
                let mut acc = b1[o];
                for i in 0..c {
                    acc += w1[o * c + i] * pooled[i];
                }
                hid[o] = acc.max(0.0);
            }
            for o in 0..c {
                let mut acc = b2[o];
                for i in 0..hiddenc {
                    acc += w2[o * hiddenc + i] * hid[i];
                }
                let s = 1.0 / (1.0 + (-acc).exp());
                for p in 0..hw {
                    let idx = (n * c + o) * hw + p;
                    let want = f.data()[idx] * s;
                    assert!((out.data()[idx] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn attention_scale_is_per_channel_and_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Tensor::randn(Shape::new(1, 4, 4, 4), 1.0, &mut rng);
        let ca = ChannelAttentionParams::new(4, 4, &mut rng).unwrap();
        let mut g = Graph::no_grad();
        let out = channel_attention(&mut g, &f, &ca).unwrap();
        for ch in 0..4 {
            let mut scale = None;
            for p in 0..16 {
                let idx = ch * 16 + p;
                let fv = f.data()[idx];
                if fv != 0.0 {
                    let s = out.data()[idx] / fv;
                    assert!(s > 0.0 && s < 1.0);
                    match scale {
                        None => scale = Some(s),
                        Some(prev) => assert!((s - prev).abs() < 1e-12),
                    }
                }
            }
        }
    }

    #[test]
    fn zeroed_resblock_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = Tensor::randn(Shape::new(2, 3, 4, 4), 1.0, &mut rng);
        let mut g = Graph::no_grad();
        let out = resblock(&mut g, &f, &ResBlockParams::zeroed(3)).unwrap();
        assert_eq!(out.data(), f.data());
    }

    #[test]
    fn zero_input_zero_bias_resblock_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = ResBlockParams::new(3, &mut rng).unwrap();
        let f = Tensor::zeros(Shape::new(1, 3, 4, 4));
        let mut g = Graph::no_grad();
        let out = resblock(&mut g, &f, &params).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resblock_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = ResBlockParams::new(2, &mut rng).unwrap();
        let f = Tensor::randn(Shape::new(1, 2, 4, 4), 1.0, &mut rng);
        let err = finite_difference_check(
            |g, x| {
                let y = resblock(g, x, &params)?;
                g.sum(&y)
            },
            &f,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "resblock gradient error {err}");
    }

    #[test]
    fn fusion_of_duplicate_branches_can_reduce_to_identity() {
        // CA saturated to 1; 1x1 conv averages the duplicated channels.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = 3;
        let f = Tensor::randn(Shape::new(1, c, 4, 4), 1.0, &mut rng);
        let mut conv_w = vec![0.0; c * 2 * c];
        for o in 0..c {
            conv_w[o * 2 * c + o] = 0.5;
            conv_w[o * 2 * c + c + o] = 0.5;
        }
        let fusion = FusionParams {
            ca: ChannelAttentionParams::saturated(2 * c, 2).unwrap(),
            conv: Conv2d::from_parts(2 * c, c, 1, conv_w, vec![0.0; c]).unwrap(),
        };
        let mut g = Graph::no_grad();
        let out = fuse_branches(&mut g, &f, &f, &fusion).unwrap();
        for (o, i) in out.data().iter().zip(f.data()) {
            assert!((o - i).abs() < 1e-7);
        }
    }

    #[test]
    fn fusion_of_zero_inputs_with_zero_biases_is_zero() {
        // `FusionParams::new` initializes every bias at zero.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = 2;
        let fusion = FusionParams::new(c, 2, &mut rng).unwrap();
        let z = Tensor::zeros(Shape::new(1, c, 3, 3));
        let mut g = Graph::no_grad();
        let out = fuse_branches(&mut g, &z, &z, &fusion).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fusion_matches_composition_of_suboperations() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let c = 3;
        let lower = Tensor::randn(Shape::new(2, c, 3, 3), 1.0, &mut rng);
        let upper = Tensor::randn(Shape::new(2, c, 3, 3), 1.0, &mut rng);
        let fusion = FusionParams::new(c, 2, &mut rng).unwrap();
        let mut g = Graph::no_grad();
        let fused = fuse_branches(&mut g, &lower, &upper, &fusion).unwrap();

        let stacked = g.concat_channels(&lower, &upper).unwrap();
        let gated = channel_attention(&mut g, &stacked, &fusion.ca).unwrap();
        let want = fusion.conv.forward(&mut g, &gated).unwrap();
        for (a, b) in fused.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ca = ChannelAttentionParams::new(4, 2, &mut rng).unwrap();
        let f = Tensor::randn(Shape::new(1, 4, 3, 3), 1.0, &mut rng);
        let err = finite_difference_check(
            |g, x| {
                let y = channel_attention(g, x, &ca)?;
                g.sum(&y)
            },
            &f,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "attention gradient error {err}");
    }

    #[test]
    fn rejects_channel_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ca = ChannelAttentionParams::new(4, 2, &mut rng).unwrap();
        let f = Tensor::zeros(Shape::new(1, 3, 4, 4));
        let mut g = Graph::no_grad();
        assert!(matches!(
            channel_attention(&mut g, &f, &ca),
            Err(Error::Shape(_))
        ));
    }
}
