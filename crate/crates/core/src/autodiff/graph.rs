use super::ops::{self, Op};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Source {
    Param,
    Constant,
    Op(Op, Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    source: Source,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, so every node's inputs precede it and
/// the reverse sweep in [`Graph::backward`] needs no sorting. A graph is built
/// for one loss evaluation and then dropped.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, source: Source, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            source,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Source::Param, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Source::Constant, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Evaluates `op` and records it. The node takes part in the backward
    /// pass only if one of its inputs does.
    pub fn apply(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor> = inputs.iter().map(|&i| &self.nodes[i.0].value).collect();
        let out = ops::forward(&op, &values)?;
        let requires_grad = inputs.iter().any(|&i| self.nodes[i.0].requires_grad);
        Ok(self.push(out, Source::Op(op, inputs.to_vec()), requires_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        self.apply(Op::AddRow, &[a, bias])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Op::Scale(c), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Relu, &[a])
    }

    pub fn pairwise_sqdist(&mut self, x: NodeId, y: NodeId) -> Result<NodeId> {
        self.apply(Op::PairwiseSqDist, &[x, y])
    }

    pub fn softmax(&mut self, x: NodeId, mask: Option<Vec<bool>>) -> Result<NodeId> {
        self.apply(Op::Softmax { mask }, &[x])
    }

    pub fn log_sum_exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::LogSumExp, &[x])
    }

    pub fn gaussian_log_density(
        &mut self,
        points: NodeId,
        means: NodeId,
        variances: NodeId,
    ) -> Result<NodeId> {
        self.apply(Op::GaussianLogDensity, &[points, means, variances])
    }

    pub fn weighted_mean(
        &mut self,
        points: NodeId,
        weights: NodeId,
        fallback: Option<NodeId>,
    ) -> Result<NodeId> {
        match fallback {
            Some(f) => self.apply(Op::WeightedMean, &[points, weights, f]),
            None => self.apply(Op::WeightedMean, &[points, weights]),
        }
    }

    pub fn exp_param(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::ExpParam, &[x])
    }

    pub fn gather_rows(&mut self, x: NodeId, idx: Vec<usize>) -> Result<NodeId> {
        self.apply(Op::GatherRows(idx), &[x])
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Op::ConcatRows, parts)
    }

    pub fn take_cols(&mut self, x: NodeId, idx: Vec<Vec<usize>>) -> Result<NodeId> {
        self.apply(Op::TakeCols(idx), &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Mean, &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum, &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.apply(Op::Reshape(shape), &[x])
    }

    /// Mean softmax cross-entropy of row-wise `logits [r, n]` against `labels`.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let rows = self.value(logits).rows();
        if labels.len() != rows {
            return Err(Error::Shape {
                op: "cross_entropy",
                shapes: vec![self.value(logits).shape().to_vec(), vec![labels.len()]],
            });
        }
        let lse = self.log_sum_exp(logits)?;
        let picked = self.take_cols(logits, labels.iter().map(|&y| vec![y]).collect())?;
        let picked = self.reshape(picked, vec![rows])?;
        let nll = self.sub(lse, picked)?;
        self.mean(nll)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar_like() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Source::Op(op, inputs) = &node.source else {
                continue;
            };
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let values: Vec<&Tensor> = inputs.iter().map(|i| &self.nodes[i.0].value).collect();
            let needs: Vec<bool> = inputs.iter().map(|i| self.nodes[i.0].requires_grad).collect();
            let input_grads = ops::vjp(op, &values, &node.value, &g, &needs);
            for (input, ig) in inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot => *slot = Some(ig),
                }
            }
        }
        let mut out = Gradients { grads: Vec::new() };
        out.grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match node.source {
                Source::Param => Some(g.unwrap_or_else(|| Tensor::zeros(node.value.shape()))),
                _ => None,
            })
            .collect();
        for g in out.grads.iter().flatten() {
            if !g.is_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
        }
        Ok(out)
    }
}

/// Gradients of a loss with respect to every parameter leaf of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a parameter leaf. `None` for non-parameter nodes.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}
