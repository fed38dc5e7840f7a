//! The multi-phase restoration network.
//!
//! Each phase runs two branches over the feature stream: the lower branch
//! disentangles (FDM: stacked conv+GDN "FDlayers"), processes, and
//! re-aggregates (FAM: mirrored PM+attention+IGDN "FAlayers" fed by skip
//! connections from the FDlayers); the upper branch is a plain ResBlock
//! chain that carries image content past the disentanglement. Branch
//! outputs are fused by channel attention plus a 1×1 convolution, each
//! phase adds its own input back, and consecutive phase outputs are chained
//! with a second residual stream. A head convolution lifts the RGB input to
//! the working width, a tail convolution projects back, and the input image
//! is added globally.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gain_control::{gdn_forward, igdn_forward, GainControlParams};
use crate::layers::{
    channel_attention, fuse_branches, resblock, ChannelAttentionParams, Conv2d, FusionParams,
    ResBlockParams,
};
use crate::tensor::{Graph, Tensor};

/// Architecture hyperparameters; the ablation axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Number of phases `P`.
    pub phases: usize,
    /// Working channel width `C`.
    pub channels: usize,
    /// FDlayers per FDM (mirrored by the FAM).
    pub fd_layers: usize,
    /// ResBlocks per phase in the auxiliary branch.
    pub aux_blocks: usize,
    /// Channel-attention bottleneck reduction ratio.
    pub reduction: usize,
    /// Input/output image channels.
    pub in_channels: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            phases: 6,
            channels: 32,
            fd_layers: 3,
            aux_blocks: 8,
            reduction: 4,
            in_channels: 3,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phases == 0 {
            return Err(Error::Config("network needs at least one phase".into()));
        }
        if self.fd_layers == 0 {
            return Err(Error::Config("each FDM needs at least one FDlayer".into()));
        }
        if self.in_channels == 0 {
            return Err(Error::Config("input channel count must be positive".into()));
        }
        if self.channels < self.reduction || self.channels % self.reduction != 0 {
            return Err(Error::Config(format!(
                "channel width {} must be a multiple of the attention reduction {}",
                self.channels, self.reduction
            )));
        }
        Ok(())
    }
}

/// One FDlayer: 3×3 convolution followed by gain-control normalization.
#[derive(Clone, Debug)]
pub struct FdLayer {
    pub conv: Conv2d,
    pub gdn: GainControlParams,
}

/// Feature disentanglement module: a stack of FDlayers whose intermediate
/// outputs are kept as the skip stack for the mirrored FAM.
#[derive(Clone, Debug)]
pub struct Fdm {
    pub layers: Vec<FdLayer>,
}

impl Fdm {
    fn new<R: Rng>(channels: usize, fd_layers: usize, rng: &mut R) -> Result<Self> {
        let layers = (0..fd_layers)
            .map(|_| {
                Ok(FdLayer {
                    conv: Conv2d::new(channels, channels, 3, rng)?,
                    gdn: GainControlParams::new(channels),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fdm { layers })
    }

    /// Returns the disentangled feature and the per-FDlayer skip stack
    /// (`skips[l]` is FDlayer `l`'s output; the last entry equals the
    /// returned feature).
    pub fn forward(&self, graph: &mut Graph, f_in: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut x = f_in.clone();
        let mut skips = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let s = layer.conv.forward(graph, &x)?;
            x = gdn_forward(graph, &s, &layer.gdn)?;
            skips.push(x.clone());
        }
        Ok((x, skips))
    }
}

/// One FAlayer: process module (3×3 conv + ReLU), channel attention, and
/// the inverse gain-control transform.
#[derive(Clone, Debug)]
pub struct FaLayer {
    pub pm: Conv2d,
    pub ca: ChannelAttentionParams,
    pub igdn: GainControlParams,
}

/// Feature aggregation module: FAlayers mirroring the FDM's FDlayers.
#[derive(Clone, Debug)]
pub struct Fam {
    pub layers: Vec<FaLayer>,
}

impl Fam {
    fn new<R: Rng>(channels: usize, fd_layers: usize, reduction: usize, rng: &mut R) -> Result<Self> {
        let layers = (0..fd_layers)
            .map(|_| {
                Ok(FaLayer {
                    pm: Conv2d::new(channels, channels, 3, rng)?,
                    ca: ChannelAttentionParams::new(channels, reduction, rng)?,
                    igdn: GainControlParams::new(channels),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fam { layers })
    }

    /// Consume the skip stack in mirror order: FAlayer `l` adds the output
    /// of FDlayer `L-1-l` to its input before processing.
    pub fn forward(&self, graph: &mut Graph, d: &Tensor, skips: &[Tensor]) -> Result<Tensor> {
        if skips.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "skip stack depth {} does not match the {} FAlayers",
                skips.len(),
                self.layers.len()
            )));
        }
        let mut x = d.clone();
        let depth = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            x = graph.add(&x, &skips[depth - 1 - l])?;
            let p = layer.pm.forward(graph, &x)?;
            let p = graph.relu(&p)?;
            let p = channel_attention(graph, &p, &layer.ca)?;
            x = igdn_forward(graph, &p, &layer.igdn)?;
        }
        Ok(x)
    }
}

/// One phase: FDM→FAM lower branch, ResBlock auxiliary branch, fusion.
#[derive(Clone, Debug)]
pub struct Phase {
    pub fdm: Fdm,
    pub fam: Fam,
    pub aux: Vec<ResBlockParams>,
    pub fusion: FusionParams,
}

impl Phase {
    fn new<R: Rng>(config: &NetworkConfig, rng: &mut R) -> Result<Self> {
        Ok(Phase {
            fdm: Fdm::new(config.channels, config.fd_layers, rng)?,
            fam: Fam::new(config.channels, config.fd_layers, config.reduction, rng)?,
            aux: (0..config.aux_blocks)
                .map(|_| ResBlockParams::new(config.channels, rng))
                .collect::<Result<Vec<_>>>()?,
            fusion: FusionParams::new(config.channels, config.reduction, rng)?,
        })
    }

    /// Returns `(out, d)`: the phase output `fuse(lower, upper) + input`
    /// and the disentangled feature `d` tapped for the decorrelation loss
    /// and diagnostics.
    pub fn forward(&self, graph: &mut Graph, f: &Tensor) -> Result<(Tensor, Tensor)> {
        let (d, skips) = self.fdm.forward(graph, f)?;
        let lower = self.fam.forward(graph, &d, &skips)?;
        let mut upper = f.clone();
        for block in &self.aux {
            upper = resblock(graph, &upper, block)?;
        }
        let fused = fuse_branches(graph, &lower, &upper, &self.fusion)?;
        let out = graph.add(&fused, f)?;
        Ok((out, d))
    }
}

/// Everything a forward pass exposes: the restored image plus the per-phase
/// taps used by the decorrelation loss and the diagnostics.
pub struct ForwardTrace {
    pub restored: Tensor,
    /// Feature entering each phase's FDM.
    pub fdm_inputs: Vec<Tensor>,
    /// Final FDlayer output of each phase's FDM.
    pub fdm_outputs: Vec<Tensor>,
}

/// The assembled multi-phase network.
#[derive(Clone, Debug)]
pub struct Network {
    pub head: Conv2d,
    pub phases: Vec<Phase>,
    pub tail: Conv2d,
    config: NetworkConfig,
}

impl Network {
    pub fn new<R: Rng>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(Network {
            head: Conv2d::new(config.in_channels, config.channels, 3, rng)?,
            phases: (0..config.phases)
                .map(|_| Phase::new(&config, rng))
                .collect::<Result<Vec<_>>>()?,
            tail: Conv2d::new(config.channels, config.in_channels, 3, rng)?,
            config,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Full forward pass.
    ///
    /// Phase chaining: with `out_0` the head output, phase `p` receives
    /// `out_{p-1} + out_{p-2}` (dual residual), and the tail output is added
    /// to the input image (global residual).
    pub fn forward(&self, graph: &mut Graph, image: &Tensor) -> Result<ForwardTrace> {
        let s = image.shape();
        if s.c() != self.config.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels, s
            )));
        }
        if s.h() < 8 || s.w() < 8 {
            return Err(Error::Shape(format!(
                "input must be at least 8x8, got {s}"
            )));
        }
        let head_out = self.head.forward(graph, image)?;
        let mut prev = head_out; // out_{p-1}
        let mut prev2: Option<Tensor> = None; // out_{p-2}
        let mut fdm_inputs = Vec::with_capacity(self.phases.len());
        let mut fdm_outputs = Vec::with_capacity(self.phases.len());
        for phase in &self.phases {
            let input = match &prev2 {
                Some(p2) => graph.add(&prev, p2)?,
                None => prev.clone(),
            };
            let (out, d) = phase.forward(graph, &input)?;
            fdm_inputs.push(input);
            fdm_outputs.push(d);
            prev2 = Some(prev);
            prev = out;
        }
        let projected = self.tail.forward(graph, &prev)?;
        let restored = graph.add(&projected, image)?;
        Ok(ForwardTrace {
            restored,
            fdm_inputs,
            fdm_outputs,
        })
    }

    /// Visit every learnable tensor with a stable name, in a fixed order.
    /// The order defines checkpoint layout and optimizer slot alignment.
    pub fn for_each_param<F: FnMut(&str, &Tensor)>(&self, f: &mut F) {
        f("head.weight", &self.head.weight);
        f("head.bias", &self.head.bias);
        for (p, phase) in self.phases.iter().enumerate() {
            for (l, layer) in phase.fdm.layers.iter().enumerate() {
                f(&format!("phase{p}.fdm{l}.conv.weight"), &layer.conv.weight);
                f(&format!("phase{p}.fdm{l}.conv.bias"), &layer.conv.bias);
                f(&format!("phase{p}.fdm{l}.gdn.w"), &layer.gdn.w);
                f(&format!("phase{p}.fdm{l}.gdn.b"), &layer.gdn.b);
            }
            for (l, layer) in phase.fam.layers.iter().enumerate() {
                f(&format!("phase{p}.fam{l}.pm.weight"), &layer.pm.weight);
                f(&format!("phase{p}.fam{l}.pm.bias"), &layer.pm.bias);
                f(&format!("phase{p}.fam{l}.ca.fc1.weight"), &layer.ca.fc1.weight);
                f(&format!("phase{p}.fam{l}.ca.fc1.bias"), &layer.ca.fc1.bias);
                f(&format!("phase{p}.fam{l}.ca.fc2.weight"), &layer.ca.fc2.weight);
                f(&format!("phase{p}.fam{l}.ca.fc2.bias"), &layer.ca.fc2.bias);
                f(&format!("phase{p}.fam{l}.igdn.w"), &layer.igdn.w);
                f(&format!("phase{p}.fam{l}.igdn.b"), &layer.igdn.b);
            }
            for (a, block) in phase.aux.iter().enumerate() {
                f(&format!("phase{p}.aux{a}.conv1.weight"), &block.conv1.weight);
                f(&format!("phase{p}.aux{a}.conv1.bias"), &block.conv1.bias);
                f(&format!("phase{p}.aux{a}.conv2.weight"), &block.conv2.weight);
                f(&format!("phase{p}.aux{a}.conv2.bias"), &block.conv2.bias);
            }
            f(&format!("phase{p}.fusion.ca.fc1.weight"), &phase.fusion.ca.fc1.weight);
            f(&format!("phase{p}.fusion.ca.fc1.bias"), &phase.fusion.ca.fc1.bias);
            f(&format!("phase{p}.fusion.ca.fc2.weight"), &phase.fusion.ca.fc2.weight);
            f(&format!("phase{p}.fusion.ca.fc2.bias"), &phase.fusion.ca.fc2.bias);
            f(&format!("phase{p}.fusion.conv.weight"), &phase.fusion.conv.weight);
            f(&format!("phase{p}.fusion.conv.bias"), &phase.fusion.conv.bias);
        }
        f("tail.weight", &self.tail.weight);
        f("tail.bias", &self.tail.bias);
    }

    /// Mutable traversal in the same order as [`Network::for_each_param`].
    pub fn for_each_param_mut<F>(&mut self, f: &mut F) -> Result<()>
    where
        F: FnMut(&str, &mut Tensor) -> Result<()>,
    {
        f("head.weight", &mut self.head.weight)?;
        f("head.bias", &mut self.head.bias)?;
        for (p, phase) in self.phases.iter_mut().enumerate() {
            for (l, layer) in phase.fdm.layers.iter_mut().enumerate() {
                f(&format!("phase{p}.fdm{l}.conv.weight"), &mut layer.conv.weight)?;
                f(&format!("phase{p}.fdm{l}.conv.bias"), &mut layer.conv.bias)?;
                f(&format!("phase{p}.fdm{l}.gdn.w"), &mut layer.gdn.w)?;
                f(&format!("phase{p}.fdm{l}.gdn.b"), &mut layer.gdn.b)?;
            }
            for (l, layer) in phase.fam.layers.iter_mut().enumerate() {
                f(&format!("phase{p}.fam{l}.pm.weight"), &mut layer.pm.weight)?;
                f(&format!("phase{p}.fam{l}.pm.bias"), &mut layer.pm.bias)?;
                f(&format!("phase{p}.fam{l}.ca.fc1.weight"), &mut layer.ca.fc1.weight)?;
                f(&format!("phase{p}.fam{l}.ca.fc1.bias"), &mut layer.ca.fc1.bias)?;
                f(&format!("phase{p}.fam{l}.ca.fc2.weight"), &mut layer.ca.fc2.weight)?;
                f(&format!("phase{p}.fam{l}.ca.fc2.bias"), &mut layer.ca.fc2.bias)?;
                f(&format!("phase{p}.fam{l}.igdn.w"), &mut layer.igdn.w)?;
                f(&format!("phase{p}.fam{l}.igdn.b"), &mut layer.igdn.b)?;
            }
            for (a, block) in phase.aux.iter_mut().enumerate() {
                f(&format!("phase{p}.aux{a}.conv1.weight"), &mut block.conv1.weight)?;
                f(&format!("phase{p}.aux{a}.conv1.bias"), &mut block.conv1.bias)?;
                f(&format!("phase{p}.aux{a}.conv2.weight"), &mut block.conv2.weight)?;
                f(&format!("phase{p}.aux{a}.conv2.bias"), &mut block.conv2.bias)?;
            }
            f(&format!("phase{p}.fusion.ca.fc1.weight"), &mut phase.fusion.ca.fc1.weight)?;
            f(&format!("phase{p}.fusion.ca.fc1.bias"), &mut phase.fusion.ca.fc1.bias)?;
            f(&format!("phase{p}.fusion.ca.fc2.weight"), &mut phase.fusion.ca.fc2.weight)?;
            f(&format!("phase{p}.fusion.ca.fc2.bias"), &mut phase.fusion.ca.fc2.bias)?;
            f(&format!("phase{p}.fusion.conv.weight"), &mut phase.fusion.conv.weight)?;
            f(&format!("phase{p}.fusion.conv.bias"), &mut phase.fusion.conv.bias)?;
        }
        f("tail.weight", &mut self.tail.weight)?;
        f("tail.bias", &mut self.tail.bias)?;
        Ok(())
    }

    /// Clamp every gain-control parameter group onto its feasible set.
    pub fn project_gain_params(&mut self) -> Result<()> {
        for phase in &mut self.phases {
            for layer in &mut phase.fdm.layers {
                layer.gdn.project()?;
            }
            for layer in &mut phase.fam.layers {
                layer.igdn.project()?;
            }
        }
        Ok(())
    }

    /// Reset every parameter gradient.
    pub fn zero_grads(&self) {
        self.for_each_param(&mut |_, t| t.zero_grad());
    }

    /// Learnable scalar count by traversal (cross-check for
    /// [`count_params`]).
    pub fn param_count(&self) -> usize {
        let mut total = 0;
        self.for_each_param(&mut |_, t| total += t.shape().count());
        total
    }
}

/// Exact learnable-scalar count of a configuration, in closed form.
/// Affine in the phase count: `head + tail + P * per_phase`.
pub fn count_params(config: &NetworkConfig) -> usize {
    let c = config.channels;
    let r = config.reduction;
    let head = Conv2d::param_count(config.in_channels, c, 3);
    let tail = Conv2d::param_count(c, config.in_channels, 3);
    let gain = c * c + c;
    let fd_layer = Conv2d::param_count(c, c, 3) + gain;
    let fa_layer =
        Conv2d::param_count(c, c, 3) + ChannelAttentionParams::param_count(c, r) + gain;
    let per_phase = config.fd_layers * (fd_layer + fa_layer)
        + config.aux_blocks * ResBlockParams::param_count(c)
        + FusionParams::param_count(c, r);
    head + tail + config.phases * per_phase
}
