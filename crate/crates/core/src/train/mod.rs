//! Training harness: hyperparameters, step-decay schedule, combined loss,
//! the optimization loop, checkpointing, and evaluation.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod eval;

pub use adam::{adam_step, adam_update, AdamState};
pub use checkpoint::Checkpoint;
pub use data::{BatchSampler, LoadedDataset};
pub use eval::{evaluate, EvalReport, EvalRow};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::net::{Network, NetworkConfig};
use crate::seeds::component_rng;
use crate::svdo::svdo_loss;
use crate::tensor::{Graph, Tensor};

/// Training hyperparameters. Defaults follow the reference protocol:
/// Adam at `1e-4` decayed by `0.8` every `9000` iterations, loss weight
/// `β = 1e-5`. The reference batch size is 28; the desk-scale default is 8.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_interval: u64,
    pub batch_size: usize,
    pub beta: f64,
    pub max_iters: u64,
    pub seed: u64,
    pub checkpoint_interval: u64,
    pub val_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-4,
            decay_factor: 0.8,
            decay_interval: 9000,
            batch_size: 8,
            beta: 1e-5,
            max_iters: 2000,
            seed: 0,
            checkpoint_interval: 1000,
            val_interval: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.decay_factor) || self.decay_factor == 0.0 {
            return Err(Error::Config("decay factor must lie in (0, 1)".into()));
        }
        if self.decay_interval == 0 {
            return Err(Error::Config("decay interval must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.beta < 0.0 {
            return Err(Error::Config("loss weight beta must be nonnegative".into()));
        }
        Ok(())
    }

    /// Piecewise-constant step decay:
    /// `lr0 · factor^⌊iteration / interval⌋`.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        self.lr0
            * self
                .decay_factor
                .powi((iteration / self.decay_interval) as i32)
    }
}

/// Combined objective: mean absolute error plus `beta` times the mean SVDO
/// loss over the disentangled features.
pub fn total_loss(
    graph: &mut Graph,
    pred: &Tensor,
    target: &Tensor,
    fdm_outputs: &[Tensor],
    beta: f64,
) -> Result<Tensor> {
    Ok(total_loss_parts(graph, pred, target, fdm_outputs, beta)?.0)
}

/// [`total_loss`] plus the scalar values of both terms for logging.
/// With `beta = 0` the decorrelation term is skipped entirely, so the
/// result is exactly the L1 term.
pub fn total_loss_parts(
    graph: &mut Graph,
    pred: &Tensor,
    target: &Tensor,
    fdm_outputs: &[Tensor],
    beta: f64,
) -> Result<(Tensor, f64, f64)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {} and target {} differ",
            pred.shape(),
            target.shape()
        )));
    }
    let diff = graph.sub(pred, target)?;
    let diff = graph.abs(&diff)?;
    let l1 = graph.mean(&diff)?;
    let l1_value = l1.item()?;
    if beta == 0.0 || fdm_outputs.is_empty() {
        return Ok((l1, l1_value, 0.0));
    }
    let mut svdo_sum: Option<Tensor> = None;
    for d in fdm_outputs {
        let term = svdo_loss(graph, d)?;
        svdo_sum = Some(match svdo_sum {
            Some(acc) => graph.add(&acc, &term)?,
            None => term,
        });
    }
    let svdo_mean = graph.mul_scalar(
        &svdo_sum.expect("at least one feature"),
        1.0 / fdm_outputs.len() as f64,
    )?;
    let svdo_value = svdo_mean.item()?;
    let weighted = graph.mul_scalar(&svdo_mean, beta)?;
    let total = graph.add(&l1, &weighted)?;
    Ok((total, l1_value, svdo_value))
}

#[derive(Clone, Copy, Debug)]
pub struct LossRow {
    pub iteration: u64,
    pub lr: f64,
    pub l1: f64,
    pub svdo: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ValRow {
    pub iteration: u64,
    pub psnr: f64,
    pub ssim: f64,
}

pub struct TrainReport {
    pub losses: Vec<LossRow>,
    pub vals: Vec<ValRow>,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    pub net: Network,
}

fn metrics_csv(losses: &[LossRow], vals: &[ValRow]) -> String {
    let mut out = String::from("iteration,lr,l1,svdo,total,val_psnr,val_ssim\n");
    let mut val_iter = vals.iter().peekable();
    for row in losses {
        let val = match val_iter.peek() {
            Some(v) if v.iteration == row.iteration => {
                let v = val_iter.next().unwrap();
                format!("{},{}", v.psnr, v.ssim)
            }
            _ => ",".to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.iteration, row.lr, row.l1, row.svdo, row.total, val
        );
    }
    out
}

/// Train a fresh network on a synthesized dataset.
///
/// Deterministic given the seed: initialization, shuffling, and every
/// kernel are seed- or order-fixed. Writes `metrics.csv` and checkpoints
/// under `out_dir` and returns the loss/validation trajectory.
pub fn train(
    net_config: &NetworkConfig,
    train_manifest: &Path,
    val_manifest: Option<&Path>,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport> {
    cfg.validate()?;
    net_config.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let dataset = LoadedDataset::load(train_manifest)?;
    let val_dataset = val_manifest.map(LoadedDataset::load).transpose()?;

    let mut rng = component_rng(cfg.seed, "train", 0);
    let mut net = Network::new(*net_config, &mut rng)?;
    let mut adam = AdamState::new(&net);
    let mut sampler = BatchSampler::new(dataset.len(), cfg.seed);

    let mut losses = Vec::new();
    let mut vals = Vec::new();
    let checkpoint_path = out_dir.join("final.ckpt");

    let run_val = |net: &Network, iteration: u64, vals: &mut Vec<ValRow>| -> Result<()> {
        if let Some(ds) = &val_dataset {
            let report = evaluate(net, ds)?;
            vals.push(ValRow {
                iteration,
                psnr: report.mean_psnr_out(),
                ssim: report.mean_ssim_out(),
            });
        }
        Ok(())
    };

    if cfg.max_iters == 0 {
        // Log the initial loss once and write the initial checkpoint.
        let indices = sampler.next_batch(cfg.batch_size);
        let (x, y) = dataset.batch(&indices)?;
        let mut graph = Graph::no_grad();
        let trace = net.forward(&mut graph, &x)?;
        let (_, l1, svdo) =
            total_loss_parts(&mut graph, &trace.restored, &y, &trace.fdm_outputs, cfg.beta)?;
        losses.push(LossRow {
            iteration: 0,
            lr: cfg.lr_at(0),
            l1,
            svdo,
            total: l1 + cfg.beta * svdo,
        });
        checkpoint::save(&checkpoint_path, &net, &adam, 0, &rng)?;
        let metrics_path = out_dir.join("metrics.csv");
        std::fs::write(&metrics_path, metrics_csv(&losses, &vals))?;
        return Ok(TrainReport {
            losses,
            vals,
            checkpoint_path,
            metrics_path,
            net,
        });
    }

    for iteration in 0..cfg.max_iters {
        let lr = cfg.lr_at(iteration);
        let indices = sampler.next_batch(cfg.batch_size);
        let (x, y) = dataset.batch(&indices)?;

        let mut graph = Graph::new();
        let trace = net.forward(&mut graph, &x)?;
        let (total, l1, svdo) =
            total_loss_parts(&mut graph, &trace.restored, &y, &trace.fdm_outputs, cfg.beta)?;
        let total_value = total.item()?;
        if !total_value.is_finite() {
            return Err(Error::Train(format!(
                "loss became non-finite at iteration {iteration}"
            )));
        }
        losses.push(LossRow {
            iteration,
            lr,
            l1,
            svdo,
            total: total_value,
        });

        graph.backward(&total)?;
        // Release the tape (it holds parameter references) before updating.
        drop(graph);
        drop(trace);
        adam_step(&mut net, &mut adam, lr)
            .map_err(|e| Error::Train(format!("iteration {iteration}: {e}")))?;
        net.zero_grads();

        let done = iteration + 1 == cfg.max_iters;
        if cfg.val_interval > 0 && ((iteration + 1) % cfg.val_interval == 0 || done) {
            run_val(&net, iteration + 1, &mut vals)?;
        }
        if (cfg.checkpoint_interval > 0 && (iteration + 1) % cfg.checkpoint_interval == 0) || done
        {
            let path = if done {
                checkpoint_path.clone()
            } else {
                out_dir.join(format!("iter_{:06}.ckpt", iteration + 1))
            };
            checkpoint::save(&path, &net, &adam, iteration + 1, &rng)?;
        }
    }

    let metrics_path = out_dir.join("metrics.csv");
    std::fs::write(&metrics_path, metrics_csv(&losses, &vals))?;
    Ok(TrainReport {
        losses,
        vals,
        checkpoint_path,
        metrics_path,
        net,
    })
}
