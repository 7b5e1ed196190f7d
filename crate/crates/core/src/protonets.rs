//! Embedding network and the two fixed-capacity baselines: prototypes
//! (class means) and stochastic nearest neighbors.

use rand::Rng;

use crate::autodiff::{ops, Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// One dense layer, `x W + b` with `W: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Fully-connected embedding `R^D -> R^M` with ReLU between layers and a
/// linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingParams {
    pub layers: Vec<Dense>,
}

impl EmbeddingParams {
    /// Uniform initialization in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], output_dim: usize, rng: &mut R) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Dense {
                    weight: Tensor::matrix(fan_in, fan_out, data).expect("layer shape"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        EmbeddingParams { layers }
    }

    /// A single identity layer: the embedding of `x` is `x`.
    pub fn identity(dim: usize) -> Self {
        let mut w = Tensor::zeros(&[dim, dim]);
        for i in 0..dim {
            w.data_mut()[i * dim + i] = 1.0;
        }
        EmbeddingParams {
            layers: vec![Dense {
                weight: w,
                bias: Tensor::zeros(&[dim]),
            }],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.shape()[0])
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.shape()[1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("embedding has no layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            let ws = l.weight.shape();
            let chained = k == 0 || self.layers[k - 1].weight.shape()[1] == ws[0];
            if ws.len() != 2 || l.bias.shape() != [ws[1]] || !chained {
                return Err(Error::Shape {
                    op: "embedding",
                    shapes: vec![ws.to_vec(), l.bias.shape().to_vec()],
                });
            }
            if !l.weight.is_finite() || !l.bias.is_finite() {
                return Err(Error::NonFinite { op: "embedding" });
            }
        }
        Ok(())
    }

    /// Records the layer parameters on `g`, as parameters or constants.
    pub fn register(&self, g: &mut Graph, trainable: bool) -> Vec<(NodeId, NodeId)> {
        self.layers
            .iter()
            .map(|l| {
                if trainable {
                    (g.param(l.weight.clone()), g.param(l.bias.clone()))
                } else {
                    (g.constant(l.weight.clone()), g.constant(l.bias.clone()))
                }
            })
            .collect()
    }

    /// Plain forward pass without recording gradients.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let nodes = self.register(&mut g, false);
        let xi = g.constant(x.clone());
        let out = embed(&mut g, &nodes, xi)?;
        Ok(g.value(out).clone())
    }
}

/// Embeds the rows of `x` through registered layers.
pub fn embed(g: &mut Graph, layers: &[(NodeId, NodeId)], x: NodeId) -> Result<NodeId> {
    let mut h = x;
    for (k, &(w, b)) in layers.iter().enumerate() {
        let z = g.matmul(h, w)?;
        h = g.add_row(z, b)?;
        if k + 1 < layers.len() {
            h = g.relu(h)?;
        }
    }
    Ok(h)
}

/// `[k, n]` one-hot weights: row `i` selects class `labels[i]`; `None` rows are zero.
pub fn one_hot(labels: &[Option<usize>], n: usize) -> Tensor {
    let mut w = Tensor::zeros(&[labels.len(), n]);
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            w.data_mut()[i * n + c] = 1.0;
        }
    }
    w
}

fn class_weights(labels: &[usize], n: usize) -> Result<Tensor> {
    let mut counts = vec![0usize; n];
    for &l in labels {
        if l >= n {
            return Err(Error::InvalidArgument(format!("label {l} outside 0..{n}")));
        }
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::Insufficient(format!("class {c} has no supports")));
    }
    let labels: Vec<Option<usize>> = labels.iter().map(|&l| Some(l)).collect();
    Ok(one_hot(&labels, n))
}

/// Class means of the support embeddings, one row per class `0..n`.
pub fn proto_means(embeddings: &Tensor, labels: &[usize], n: usize) -> Result<Tensor> {
    let w = class_weights(labels, n)?;
    ops::weighted_mean(embeddings, &w, None)
}

/// Graph version of [`proto_means`].
pub fn proto_means_graph(g: &mut Graph, embeddings: NodeId, labels: &[usize], n: usize) -> Result<NodeId> {
    let w = class_weights(labels, n)?;
    let w = g.constant(w);
    g.weighted_mean(embeddings, w, None)
}

/// Softmax over negative squared distances to the prototypes, divided by
/// `2 sigma` when a learned variance is given.
pub fn proto_classify(query_emb: &Tensor, means: &Tensor, sigma: Option<f64>) -> Result<Tensor> {
    let d = ops::pairwise_sqdist(query_emb, means)?;
    let scale = match sigma {
        None => -1.0,
        Some(s) if s > 0.0 => -1.0 / (2.0 * s),
        Some(s) => {
            return Err(Error::NonPositiveVariance {
                op: "proto_classify",
                value: s,
            })
        }
    };
    let logits = ops::forward(&crate::autodiff::Op::Scale(scale), &[&d])?;
    ops::softmax_rows(&logits, None)
}

/// Stochastic-neighbor class probabilities: each query's softmax over
/// negative squared distances to all supports, summed per class.
pub fn neighbor_classify(query_emb: &Tensor, support_emb: &Tensor, labels: &[usize], n: usize) -> Result<Tensor> {
    if support_emb.rows() == 0 || labels.len() != support_emb.rows() {
        return Err(Error::Shape {
            op: "neighbor_classify",
            shapes: vec![support_emb.shape().to_vec(), vec![labels.len()]],
        });
    }
    let d = ops::pairwise_sqdist(query_emb, support_emb)?;
    let p = ops::softmax_rows(&ops::forward(&crate::autodiff::Op::Scale(-1.0), &[&d])?, None)?;
    let q = query_emb.rows();
    let k = labels.len();
    let mut out = vec![0.0; q * n];
    for i in 0..q {
        for (j, &l) in labels.iter().enumerate() {
            if l >= n {
                return Err(Error::InvalidArgument(format!("label {l} outside 0..{n}")));
            }
            out[i * n + l] += p.data()[i * k + j];
        }
    }
    Tensor::matrix(q, n, out)
}

/// For each row of `scores [q, c]`, the best column per class among the
/// columns whose label is that class. Errors if a class has no column.
pub fn best_per_class(scores: &Tensor, col_labels: &[Option<usize>], n: usize, larger_is_better: bool) -> Result<Vec<Vec<usize>>> {
    let c = scores.cols();
    for class in 0..n {
        if !col_labels.contains(&Some(class)) {
            return Err(Error::Insufficient(format!("class {class} has no labeled cluster")));
        }
    }
    Ok((0..scores.rows())
        .map(|i| {
            let row = &scores.data()[i * c..(i + 1) * c];
            let mut best: Vec<Option<usize>> = vec![None; n];
            for (j, l) in col_labels.iter().enumerate() {
                let Some(l) = *l else { continue };
                let better = match best[l] {
                    None => true,
                    Some(b) if larger_is_better => row[j] > row[b],
                    Some(b) => row[j] < row[b],
                };
                if better {
                    best[l] = Some(j);
                }
            }
            best.into_iter().map(|b| b.expect("class has a column")).collect()
        })
        .collect())
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of rows of `scores` whose argmax equals the label.
pub fn accuracy(scores: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| argmax(scores.row(*i)) == y)
        .count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_embedding_is_identity() {
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        assert_eq!(EmbeddingParams::identity(3).forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let mut p = EmbeddingParams::init(3, &[4], 2, &mut ChaCha8Rng::seed_from_u64(0));
        for l in &mut p.layers {
            l.weight.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        assert!(p.forward(&x).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn embedding_gradient_matches_finite_differences() {
        let p = EmbeddingParams::init(3, &[5, 4], 2, &mut ChaCha8Rng::seed_from_u64(3));
        let x = Tensor::matrix(4, 3, (0..12).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let params: Vec<Tensor> = p
            .layers
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .collect();
        let report = grad_check(
            |g, ids| {
                let layers: Vec<(NodeId, NodeId)> = ids.chunks(2).map(|c| (c[0], c[1])).collect();
                let xi = g.constant(x.clone());
                let e = embed(g, &layers, xi)?;
                g.sum(e)
            },
            &params,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn prototypes_are_class_means() {
        let e = Tensor::matrix(3, 2, vec![0.0, 0.0, 5.0, 5.0, 2.0, 2.0]).unwrap();
        let m = proto_means(&e, &[0, 1, 0], 2).unwrap();
        assert_eq!(m.data(), &[1.0, 1.0, 5.0, 5.0]);
        // one support per class: means are the supports
        let m = proto_means(&e, &[2, 0, 1], 3).unwrap();
        assert_eq!(m.row(2), e.row(0));
        assert!(matches!(proto_means(&e, &[0, 0, 0], 2), Err(Error::Insufficient(_))));
    }

    #[test]
    fn proto_probabilities() {
        let q = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        let means = Tensor::matrix(2, 1, vec![1.0, -1.0]).unwrap();
        assert_eq!(proto_classify(&q, &means, None).unwrap().data(), &[0.5, 0.5]);

        let means = Tensor::matrix(2, 1, vec![1.0, 2f64.sqrt()]).unwrap();
        let p = proto_classify(&q, &means, None).unwrap();
        let e = (-1f64).exp() / ((-1f64).exp() + (-2f64).exp());
        assert!((p.data()[0] - e).abs() < 1e-12);
        assert!((p.data()[0] - 0.7311).abs() < 1e-4);
        let wide = proto_classify(&q, &means, Some(1e9)).unwrap();
        assert!((wide.data()[0] - 0.5).abs() < 1e-8);
        assert!(wide.data()[0] > wide.data()[1]);
    }

    #[test]
    fn neighbor_probabilities() {
        let s = Tensor::matrix(2, 1, vec![0.0, 10.0]).unwrap();
        let q = Tensor::matrix(1, 1, vec![5.0]).unwrap();
        assert_eq!(neighbor_classify(&q, &s, &[0, 1], 2).unwrap().data(), &[0.5, 0.5]);

        let s = Tensor::matrix(3, 1, vec![0.0, 10.0, -10.0]).unwrap();
        let q = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        let p = neighbor_classify(&q, &s, &[0, 1, 1], 2).unwrap();
        assert!(p.data()[0] > 0.99);
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
