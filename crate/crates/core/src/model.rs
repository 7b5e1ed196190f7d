//! Trainable parameters shared by every model kind, and the per-episode
//! loss/prediction dispatch used by the trainer.

use rand::Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::episodes::Episode;
use crate::error::{Error, Result};
use crate::imp::{self, ImpConfig, QueryMode};
use crate::protonets::{self, EmbeddingParams};

/// Embedding weights plus log-variances for labeled and unlabeled clusters.
///
/// Variances are `exp(log_sigma_*)`, so they stay positive under any update.
/// Prototype models ignore `log_sigma_u`; plain prototypes and neighbors
/// ignore both.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub embedding: EmbeddingParams,
    pub log_sigma_l: Tensor,
    pub log_sigma_u: Tensor,
    pub sigma_u_learnable: bool,
}

pub type ImpParams = ModelParams;
pub type ProtoParams = ModelParams;

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        sigma_l: f64,
        sigma_u: f64,
        rng: &mut R,
    ) -> Result<Self> {
        for (name, s) in [("sigma_l", sigma_l), ("sigma_u", sigma_u)] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::NonPositiveVariance { op: name, value: s });
            }
        }
        Ok(ModelParams {
            embedding: EmbeddingParams::init(input_dim, hidden, output_dim, rng),
            log_sigma_l: Tensor::scalar(sigma_l.ln()),
            log_sigma_u: Tensor::scalar(sigma_u.ln()),
            sigma_u_learnable: true,
        })
    }

    pub fn sigma_l(&self) -> f64 {
        self.log_sigma_l.item().exp()
    }

    pub fn sigma_u(&self) -> f64 {
        self.log_sigma_u.item().exp()
    }

    /// All parameter tensors in a fixed order: layer weights and biases,
    /// then `log_sigma_l`, then `log_sigma_u`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        for l in &self.embedding.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.log_sigma_l);
        out.push(&self.log_sigma_u);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.embedding.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.log_sigma_l);
        out.push(&mut self.log_sigma_u);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Records the parameters on `g`. With `trainable = false` everything is
    /// a constant; a frozen `sigma_u` is always a constant.
    pub fn register(&self, g: &mut Graph, trainable: bool) -> Result<ParamNodes> {
        let layers = self.embedding.register(g, trainable);
        let (log_sigma_l, log_sigma_u) = if trainable {
            let u = if self.sigma_u_learnable {
                g.param(self.log_sigma_u.clone())
            } else {
                g.constant(self.log_sigma_u.clone())
            };
            (g.param(self.log_sigma_l.clone()), u)
        } else {
            (g.constant(self.log_sigma_l.clone()), g.constant(self.log_sigma_u.clone()))
        };
        ParamNodes::from_leaves(g, layers, log_sigma_l, log_sigma_u)
    }
}

/// Graph handles for a registered [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ParamNodes {
    pub layers: Vec<(NodeId, NodeId)>,
    pub log_sigma_l: NodeId,
    pub log_sigma_u: NodeId,
    /// `exp(log_sigma_l)`
    pub sigma_l: NodeId,
    pub sigma_u: NodeId,
    /// `[sigma_l, sigma_u]`, for gathering per-cluster variance vectors.
    pub sigmas: NodeId,
}

impl ParamNodes {
    /// Derives the variance nodes from already registered leaves.
    pub fn from_leaves(
        g: &mut Graph,
        layers: Vec<(NodeId, NodeId)>,
        log_sigma_l: NodeId,
        log_sigma_u: NodeId,
    ) -> Result<Self> {
        let sigma_l = g.exp_param(log_sigma_l)?;
        let sigma_u = g.exp_param(log_sigma_u)?;
        let sigmas = g.concat_rows(&[sigma_l, sigma_u])?;
        Ok(ParamNodes {
            layers,
            log_sigma_l,
            log_sigma_u,
            sigma_l,
            sigma_u,
            sigmas,
        })
    }

    /// Leaf ids in the order of [`ModelParams::tensors`].
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self.layers.iter().flat_map(|&(w, b)| [w, b]).collect();
        out.push(self.log_sigma_l);
        out.push(self.log_sigma_u);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Imp,
    Proto,
    /// Prototypes with distances scaled by the learned variance.
    ProtoSigma,
    Neighbors,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Imp => "imp",
            ModelKind::Proto => "proto",
            ModelKind::ProtoSigma => "proto_sigma",
            ModelKind::Neighbors => "neighbors",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imp" => Ok(ModelKind::Imp),
            "proto" => Ok(ModelKind::Proto),
            "proto_sigma" => Ok(ModelKind::ProtoSigma),
            "neighbors" => Ok(ModelKind::Neighbors),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?} (expected imp, proto, proto_sigma or neighbors)"
            ))),
        }
    }
}

/// Loss node and summary statistics of one episode.
#[derive(Clone, Debug)]
pub struct EpisodeOutput {
    pub loss: NodeId,
    pub accuracy: f64,
    /// Number of clusters (prototypes or supports for the baselines).
    pub n_clusters: usize,
    pub predictions: Vec<usize>,
}

fn finish(g: &Graph, loss: NodeId, logits: NodeId, episode: &Episode, n_clusters: usize) -> EpisodeOutput {
    let scores = g.value(logits);
    let predictions: Vec<usize> = (0..scores.rows()).map(|i| protonets::argmax(scores.row(i))).collect();
    EpisodeOutput {
        loss,
        accuracy: protonets::accuracy(scores, &episode.query_y),
        n_clusters,
        predictions,
    }
}

/// Builds the training loss of `kind` on `episode`.
///
/// Prototype and neighbor models only see the labeled supports.
pub fn episode_loss(
    g: &mut Graph,
    nodes: &ParamNodes,
    kind: ModelKind,
    episode: &Episode,
    config: &ImpConfig,
) -> Result<EpisodeOutput> {
    match kind {
        ModelKind::Imp => imp::imp_episode_loss(g, nodes, episode, config),
        ModelKind::Proto | ModelKind::ProtoSigma => {
            let xs = g.constant(episode.support_x.clone());
            let hs = protonets::embed(g, &nodes.layers, xs)?;
            let xq = g.constant(episode.query_x.clone());
            let hq = protonets::embed(g, &nodes.layers, xq)?;
            let means = protonets::proto_means_graph(g, hs, &episode.support_y, episode.way)?;
            let logits = if kind == ModelKind::Proto {
                let d = g.pairwise_sqdist(hq, means)?;
                g.scale(d, -1.0)?
            } else {
                let vars = g.gather_rows(nodes.sigmas, vec![0; episode.way])?;
                g.gaussian_log_density(hq, means, vars)?
            };
            let loss = g.cross_entropy(logits, &episode.query_y)?;
            Ok(finish(g, loss, logits, episode, episode.way))
        }
        ModelKind::Neighbors => {
            let xs = g.constant(episode.support_x.clone());
            let hs = protonets::embed(g, &nodes.layers, xs)?;
            let xq = g.constant(episode.query_x.clone());
            let hq = protonets::embed(g, &nodes.layers, xq)?;
            let d = g.pairwise_sqdist(hq, hs)?;
            let neg = g.scale(d, -1.0)?;
            let labels: Vec<Option<usize>> = episode.support_y.iter().map(|&y| Some(y)).collect();
            let sel = protonets::best_per_class(g.value(neg), &labels, episode.way, true)?;
            let logits = g.take_cols(neg, sel)?;
            let loss = g.cross_entropy(logits, &episode.query_y)?;
            Ok(finish(g, loss, logits, episode, episode.n_support()))
        }
    }
}

/// Evaluation-time class probabilities for the queries of `episode`.
///
/// IMP uses `mode` for query classification (distance mode matches the
/// evaluation rule); the baselines use their own classification rules.
pub fn predict(
    params: &ModelParams,
    kind: ModelKind,
    episode: &Episode,
    config: &ImpConfig,
    mode: QueryMode,
) -> Result<Prediction> {
    let emb = &params.embedding;
    let hs = emb.forward(&episode.support_x)?;
    let hq = emb.forward(&episode.query_x)?;
    let (probs, n_clusters) = match kind {
        ModelKind::Imp => {
            let (x, labels) = episode.all_supports();
            let h = emb.forward(&x)?;
            let set = imp::build_clusters(&h, &labels, episode.way, params.sigma_l(), params.sigma_u(), config)?;
            (imp::classify_queries(&hq, &set, mode)?, set.len())
        }
        ModelKind::Proto => {
            let means = protonets::proto_means(&hs, &episode.support_y, episode.way)?;
            (protonets::proto_classify(&hq, &means, None)?, episode.way)
        }
        ModelKind::ProtoSigma => {
            let means = protonets::proto_means(&hs, &episode.support_y, episode.way)?;
            (protonets::proto_classify(&hq, &means, Some(params.sigma_l()))?, episode.way)
        }
        ModelKind::Neighbors => (
            protonets::neighbor_classify(&hq, &hs, &episode.support_y, episode.way)?,
            episode.n_support(),
        ),
    };
    let predictions = (0..probs.rows()).map(|i| protonets::argmax(probs.row(i))).collect();
    Ok(Prediction {
        accuracy: protonets::accuracy(&probs, &episode.query_y),
        probs,
        predictions,
        n_clusters,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Tensor,
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    pub n_clusters: usize,
}
