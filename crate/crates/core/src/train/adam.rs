//! Adam with bias correction, plus the post-step feasibility projection of
//! the gain-control parameters.

use crate::error::{Error, Result};
use crate::net::Network;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment buffers for every parameter tensor, aligned with the
/// network's traversal order.
#[derive(Clone, Debug)]
pub struct AdamState {
    step: u64,
    slots: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let mut slots = Vec::new();
        net.for_each_param(&mut |_, t| {
            let n = t.shape().count();
            slots.push((vec![0.0; n], vec![0.0; n]));
        });
        AdamState { step: 0, slots }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub(crate) fn from_parts(step: u64, slots: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        AdamState { step, slots }
    }

    pub(crate) fn slots(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.slots
    }
}

/// One Adam update on a flat parameter buffer. `step` is the 1-based step
/// count after incrementing.
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
) {
    let bc1 = 1.0 - BETA1.powi(step as i32);
    let bc2 = 1.0 - BETA2.powi(step as i32);
    for i in 0..param.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
}

/// Apply one optimizer step to every network parameter from its accumulated
/// gradient, then project the gain-control parameters back onto their
/// feasible set. Non-finite gradients abort with the offending parameter
/// group named.
pub fn adam_step(net: &mut Network, state: &mut AdamState, lr: f64) -> Result<()> {
    state.step += 1;
    let step = state.step;
    let slots = &mut state.slots;
    let mut index = 0usize;
    net.for_each_param_mut(&mut |name, t| {
        let grad = t.grad_or_zeros();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Train(format!(
                "non-finite gradient in parameter group {name}"
            )));
        }
        let (m, v) = &mut slots[index];
        index += 1;
        adam_update(t.data_mut()?, &grad, m, v, step, lr);
        Ok(())
    })?;
    net.project_gain_params()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = vec![1.5, -2.0, 0.25];
        let g = vec![0.0; 3];
        let mut m = vec![0.0; 3];
        let mut v = vec![0.0; 3];
        adam_update(&mut p, &g, &mut m, &mut v, 1, 0.1);
        assert_eq!(p, vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn first_step_moves_by_roughly_lr_in_gradient_sign() {
        let lr = 0.01;
        let mut p = vec![0.0; 4];
        let g = vec![3.0, -0.5, 10.0, -250.0];
        let mut m = vec![0.0; 4];
        let mut v = vec![0.0; 4];
        adam_update(&mut p, &g, &mut m, &mut v, 1, lr);
        for (pi, gi) in p.iter().zip(&g) {
            // Bias-corrected first step: p -= lr * g/|g| (up to epsilon).
            let want = -lr * gi.signum();
            assert!((pi - want).abs() < 1e-6, "{pi} vs {want}");
        }
    }

    #[test]
    fn converges_on_a_quadratic_and_matches_a_reference_run() {
        // f(x) = ||x||², x0 = 1, lr 0.1, 100 steps. Momentum makes the
        // iterate overshoot the optimum, so the norm converges through a
        // decaying oscillation: check the peak envelope and the endpoint,
        // and pin the whole trajectory against a straight-line reference
        // implementation of the textbook update.
        let lr = 0.1;
        let mut x = vec![1.0; 5];
        let mut m = vec![0.0; 5];
        let mut v = vec![0.0; 5];
        let mut rx = [1.0; 5];
        let mut rm = [0.0; 5];
        let mut rv = [0.0; 5];
        let mut norms = Vec::new();
        for step in 1..=100u64 {
            let g: Vec<f64> = x.iter().map(|xi| 2.0 * xi).collect();
            adam_update(&mut x, &g, &mut m, &mut v, step, lr);

            for i in 0..5 {
                let gi = 2.0 * rx[i];
                rm[i] = 0.9 * rm[i] + (1.0 - 0.9) * gi;
                rv[i] = 0.999 * rv[i] + (1.0 - 0.999) * gi * gi;
                let mh = rm[i] / (1.0 - 0.9_f64.powi(step as i32));
                let vh = rv[i] / (1.0 - 0.999_f64.powi(step as i32));
                rx[i] -= lr * mh / (vh.sqrt() + 1e-8);
            }
            for (a, b) in x.iter().zip(&rx) {
                assert_eq!(a.to_bits(), b.to_bits(), "diverged from reference at step {step}");
            }
            norms.push(x.iter().map(|v| v * v).sum::<f64>().sqrt());
        }

        // Local maxima of the norm must decay monotonically.
        let mut peaks = vec![norms[0]];
        for i in 1..norms.len() - 1 {
            if norms[i] > norms[i - 1] && norms[i] > norms[i + 1] {
                peaks.push(norms[i]);
            }
        }
        assert!(peaks.len() >= 3, "expected an oscillating approach");
        for w in peaks.windows(2) {
            assert!(w[1] < w[0], "peak envelope rose: {peaks:?}");
        }
        assert!(norms[99] < 0.05, "final ||x|| = {}", norms[99]);
    }
}
