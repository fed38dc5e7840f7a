//! Tape-based reverse-mode differentiation.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Backward rule of one recorded operation: maps the adjoint of the output
/// to adjoints of the inputs. `needed[i]` is false when input `i`'s gradient
/// would be discarded, letting expensive rules skip it.
pub(crate) trait Backward {
    fn input_grads(
        &self,
        inputs: &[Tensor],
        grad_out: &[f64],
        needed: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>>;
}

pub(crate) struct Node {
    pub inputs: Vec<Tensor>,
    pub output_id: u64,
    pub rule: Box<dyn Backward>,
}

/// Recorded sequence of operations.
///
/// Recording order doubles as a topological order: node `k`'s inputs were
/// all created before node `k`, so the backward pass is a single reverse
/// sweep. Gradients of leaf tensors flagged `requires_grad` accumulate
/// additively across uses and across repeated backward calls.
pub struct Graph {
    nodes: Vec<Node>,
    produced: HashSet<u64>,
    recording: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// A recording graph: ops whose inputs require gradients get taped.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            produced: HashSet::new(),
            recording: true,
        }
    }

    /// An evaluation-only graph: nothing is taped, backward is unavailable.
    pub fn no_grad() -> Self {
        Graph {
            nodes: Vec::new(),
            produced: HashSet::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Whether an op with these inputs must be recorded.
    pub(crate) fn wants_grad(&self, inputs: &[&Tensor]) -> bool {
        self.recording && inputs.iter().any(|t| t.requires_grad())
    }

    pub(crate) fn push_node(&mut self, inputs: Vec<Tensor>, output: &Tensor, rule: Box<dyn Backward>) {
        self.produced.insert(output.id());
        self.nodes.push(Node {
            inputs,
            output_id: output.id(),
            rule,
        });
    }

    /// True when `t` was produced by a recorded op of this graph (i.e. it is
    /// not a leaf).
    fn is_produced(&self, t: &Tensor) -> bool {
        self.produced.contains(&t.id())
    }

    /// Reverse sweep from a scalar loss. Populates `grad` on every
    /// `requires_grad` leaf reachable from the loss; unreachable leaves are
    /// left untouched (their gradient reads as zero).
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if !loss.shape().is_scalar() {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {}",
                loss.shape()
            )));
        }
        if !self.recording {
            return Err(Error::Usage(
                "backward on a no-grad graph; build the loss on a recording graph".into(),
            ));
        }

        // Adjoints of non-leaf tensors, keyed by tensor id. Entries are
        // complete by the time their producing node is visited because every
        // consumer was recorded later.
        let mut adjoints: HashMap<u64, Vec<f64>> = HashMap::new();
        adjoints.insert(loss.id(), vec![1.0]);

        for node in self.nodes.iter().rev() {
            let Some(grad_out) = adjoints.remove(&node.output_id) else {
                continue; // not on any path to the loss
            };
            let needed: Vec<bool> = node.inputs.iter().map(|t| t.requires_grad()).collect();
            if needed.iter().all(|n| !n) {
                continue;
            }
            let grads = node.rule.input_grads(&node.inputs, &grad_out, &needed)?;
            debug_assert_eq!(grads.len(), node.inputs.len());
            for (input, grad) in node.inputs.iter().zip(grads) {
                let Some(grad) = grad else { continue };
                debug_assert_eq!(grad.len(), input.shape().count());
                if self.is_produced(input) {
                    match adjoints.get_mut(&input.id()) {
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(&grad) {
                                *a += g;
                            }
                        }
                        None => {
                            adjoints.insert(input.id(), grad);
                        }
                    }
                } else if input.requires_grad() {
                    input.accumulate_grad(&grad);
                }
            }
        }
        Ok(())
    }
}
