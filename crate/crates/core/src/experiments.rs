//! Evaluation routines shared by the command-line tool and the test suites:
//! λ sweeps, DP-means few-shot baselines, inference-scheme comparisons and
//! unsupervised clustering scores.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::altmix::{dp_means_classify, dp_means_hard, em_infer, map_dp, CrpConfig, LabeledInit};
use crate::autodiff::Tensor;
use crate::episodes::{sample_unsupervised, Dataset, Protocol, Split};
use crate::error::{Error, Result};
use crate::imp::{build_clusters, cluster_unlabeled, ImpConfig, LambdaMode, QueryMode};
use crate::metrics::{ami, nmi, purity};
use crate::model::ModelParams;
use crate::protonets::accuracy;
use crate::trainer::{evaluate_with, EpisodeRecord, EvalResult};

/// Iteration cap for DP-means inside episodes.
pub const DP_MEANS_MAX_ITERS: usize = 100;

/// `points` multipliers of `scale`, log-spaced from `low` to `high`.
pub fn lambda_grid(scale: f64, points: usize, low: f64, high: f64) -> Result<Vec<f64>> {
    if points < 2 || !(low > 0.0) || !(high > low) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda grid needs points >= 2 and 0 < low < high, got {points}, {low}, {high}"
        )));
    }
    let (a, b) = (low.ln(), high.ln());
    Ok((0..points)
        .map(|k| scale * (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect())
}

/// Mean of the per-episode estimated λ of a trained IMP model.
pub fn mean_estimated_lambda(
    params: &ModelParams,
    ds: &Dataset,
    split: Split,
    protocol: &Protocol,
    n_episodes: usize,
    seed: u64,
    config: &ImpConfig,
) -> Result<f64> {
    let cfg = ImpConfig {
        lambda_mode: LambdaMode::Estimated,
        ..config.clone()
    };
    let mut total = 0.0;
    let r = evaluate_with(ds, split, protocol, n_episodes, seed, |ep| {
        let (x, labels) = ep.all_supports();
        let h = params.embedding.forward(&x)?;
        let set = build_clusters(&h, &labels, ep.way, params.sigma_l(), params.sigma_u(), &cfg)?;
        total += set.lambda;
        Ok(EpisodeRecord {
            accuracy: 0.0,
            n_clusters: set.len(),
        })
    })?;
    Ok(total / r.episodes.len() as f64)
}

/// Few-shot accuracy of hard DP-means over all supports of each episode,
/// on the embedding of `params`.
pub fn evaluate_dp_means(
    params: &ModelParams,
    ds: &Dataset,
    split: Split,
    protocol: &Protocol,
    n_episodes: usize,
    seed: u64,
    lambda: f64,
) -> Result<EvalResult> {
    evaluate_with(ds, split, protocol, n_episodes, seed, |ep| {
        let (x, labels) = ep.all_supports();
        let h = params.embedding.forward(&x)?;
        let hq = params.embedding.forward(&ep.query_x)?;
        let (pred, c) = dp_means_classify(&h, &labels, ep.way, &hq, lambda, DP_MEANS_MAX_ITERS)?;
        let hits = pred.iter().zip(&ep.query_y).filter(|(a, b)| a == b).count();
        Ok(EpisodeRecord {
            accuracy: hits as f64 / pred.len() as f64,
            n_clusters: c,
        })
    })
}

/// Few-shot accuracy of single-pass EM on the embedding of `params`:
/// labeled supports seed the class clusters and unlabeled supports are
/// clustered around them.
pub fn evaluate_em(
    params: &ModelParams,
    ds: &Dataset,
    split: Split,
    protocol: &Protocol,
    n_episodes: usize,
    seed: u64,
    crp: &CrpConfig,
) -> Result<EvalResult> {
    evaluate_with(ds, split, protocol, n_episodes, seed, |ep| {
        let emb = &params.embedding;
        let init = LabeledInit {
            points: emb.forward(&ep.support_x)?,
            labels: ep.support_y.clone(),
            n_classes: ep.way,
        };
        let hq = emb.forward(&ep.query_x)?;
        if ep.n_unlabeled() == 0 {
            return Err(Error::Insufficient("EM inference needs unlabeled supports".into()));
        }
        let hu = emb.forward(&ep.unlabeled_x)?;
        let r = em_infer(&hu, Some(&init), crp, params.sigma_l(), params.sigma_u())?;
        let probs = r.classify(&hq, ep.way, QueryMode::Distance)?;
        let c = r.n_clusters();
        Ok(EpisodeRecord {
            accuracy: accuracy(&probs, &ep.query_y),
            n_clusters: c,
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterMethod {
    /// IMP clustering with every point unlabeled.
    Imp,
    DpMeans,
    MapDp,
    Em,
}

impl ClusterMethod {
    pub const ALL: [ClusterMethod; 4] = [ClusterMethod::Imp, ClusterMethod::DpMeans, ClusterMethod::MapDp, ClusterMethod::Em];

    pub fn as_str(self) -> &'static str {
        match self {
            ClusterMethod::Imp => "imp",
            ClusterMethod::DpMeans => "dp_means",
            ClusterMethod::MapDp => "map_dp",
            ClusterMethod::Em => "em",
        }
    }
}

/// Settings of one unsupervised clustering evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterEval {
    pub split: Split,
    pub n_classes: usize,
    pub per_class: usize,
    pub draws: usize,
    pub seed: u64,
    pub lambda: f64,
    pub crp: CrpConfig,
}

/// Metrics averaged over clustering draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterScores {
    pub purity: f64,
    pub nmi: f64,
    pub ami: f64,
    pub mean_clusters: f64,
}

/// Hard cluster assignments of `x` under `method` on the embedding of `params`.
pub fn cluster_points(params: &ModelParams, method: ClusterMethod, x: &Tensor, lambda: f64, crp: &CrpConfig) -> Result<Vec<usize>> {
    let h = params.embedding.forward(x)?;
    Ok(match method {
        ClusterMethod::Imp => {
            let cfg = ImpConfig {
                lambda_mode: LambdaMode::Fixed(lambda),
                ..Default::default()
            };
            cluster_unlabeled(&h, params.sigma_u(), &cfg)?.1
        }
        ClusterMethod::DpMeans => dp_means_hard(&h, lambda, DP_MEANS_MAX_ITERS)?.assignments,
        ClusterMethod::MapDp => map_dp(&h, None, crp, params.sigma_u())?.hard_assignments(),
        ClusterMethod::Em => em_infer(&h, None, crp, params.sigma_l(), params.sigma_u())?.hard_assignments(),
    })
}

/// Clusters `draws` unsupervised samples and averages purity, NMI and AMI.
/// Every method sees the same samples for the same seed.
pub fn evaluate_clustering(params: &ModelParams, ds: &Dataset, method: ClusterMethod, cfg: &ClusterEval) -> Result<ClusterScores> {
    if cfg.draws == 0 {
        return Err(Error::InvalidArgument("clustering needs at least one draw".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut acc = ClusterScores {
        purity: 0.0,
        nmi: 0.0,
        ami: 0.0,
        mean_clusters: 0.0,
    };
    for _ in 0..cfg.draws {
        let (x, y) = sample_unsupervised(ds, cfg.split, cfg.n_classes, cfg.per_class, &mut rng)?;
        let pred = cluster_points(params, method, &x, cfg.lambda, &cfg.crp)?;
        acc.purity += purity(&pred, &y)?;
        acc.nmi += nmi(&pred, &y)?;
        acc.ami += ami(&pred, &y)?;
        let mut distinct = pred.clone();
        distinct.sort_unstable();
        distinct.dedup();
        acc.mean_clusters += distinct.len() as f64;
    }
    let d = cfg.draws as f64;
    Ok(ClusterScores {
        purity: acc.purity / d,
        nmi: acc.nmi / d,
        ami: acc.ami / d,
        mean_clusters: acc.mean_clusters / d,
    })
}

/// Picks the λ with the best mean AMI on `ds`; ties go to the smaller λ.
pub fn select_lambda(params: &ModelParams, ds: &Dataset, method: ClusterMethod, grid: &[f64], cfg: &ClusterEval) -> Result<(f64, ClusterScores)> {
    let mut best: Option<(f64, ClusterScores)> = None;
    for &lambda in grid {
        let s = evaluate_clustering(params, ds, method, &ClusterEval { lambda, ..cfg.clone() })?;
        if best.is_none_or(|(_, b)| s.ami > b.ami) {
            best = Some((lambda, s));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty lambda grid".into()))
}
