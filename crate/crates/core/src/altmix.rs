//! Alternative infinite-mixture inference on fixed embeddings: hard
//! DP-means, single-pass MAP-DP and single-pass soft EM.

use crate::autodiff::{ops, Tensor};
use crate::error::{Error, Result};
use crate::imp::{self, QueryMode};

/// Base distribution and CRP settings for MAP-DP and EM.
#[derive(Clone, Debug, PartialEq)]
pub struct CrpConfig {
    /// Concentration. Zero is the limit in which no cluster is ever created
    /// once one exists.
    pub alpha: f64,
    /// Base mean; defaults to the mean of the clustered points.
    pub mu0: Option<Vec<f64>>,
    /// Base variance; defaults to the spread of the class means (or of the
    /// points when nothing is labeled).
    pub sigma0: Option<f64>,
    /// New-cluster probability threshold (EM only).
    pub epsilon: f64,
    /// Keep the `ln N_c` prior term on existing clusters.
    pub use_crp_prior: bool,
}

impl Default for CrpConfig {
    fn default() -> Self {
        CrpConfig {
            alpha: 0.1,
            mu0: None,
            sigma0: None,
            epsilon: 0.5,
            use_crp_prior: true,
        }
    }
}

impl CrpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if let Some(s) = self.sigma0 {
            if !(s > 0.0) {
                return Err(Error::NonPositiveVariance { op: "sigma0", value: s });
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Labeled supports used to seed one cluster per class.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledInit {
    pub points: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HardClustering {
    pub assignments: Vec<usize>,
    pub means: Tensor,
    pub objective: f64,
    /// Objective after every full pass.
    pub history: Vec<f64>,
}

impl HardClustering {
    pub fn n_clusters(&self) -> usize {
        self.means.rows()
    }
}

fn objective(points: &Tensor, means: &[Vec<f64>], assign: &[usize], lambda: f64) -> f64 {
    let fit: f64 = assign
        .iter()
        .enumerate()
        .map(|(i, &c)| ops::sq_dist(points.row(i), &means[c]))
        .sum();
    fit + lambda * means.len() as f64
}

fn check_points(op: &'static str, points: &Tensor) -> Result<()> {
    if points.shape().len() != 2 || points.rows() == 0 {
        return Err(Error::Shape {
            op,
            shapes: vec![points.shape().to_vec()],
        });
    }
    Ok(())
}

/// Classic DP-means: start from the global mean, spawn a cluster for any
/// point whose squared distance to every mean exceeds `lambda`, recompute
/// hard means, drop empty clusters, and repeat until assignments settle.
pub fn dp_means_hard(points: &Tensor, lambda: f64, max_iters: usize) -> Result<HardClustering> {
    check_points("dp_means_hard", points)?;
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    let (n, m) = (points.rows(), points.cols());
    let all = Tensor::full(&[n, 1], 1.0);
    let mut means: Vec<Vec<f64>> = vec![ops::weighted_mean(points, &all, None)?.into_data()];
    let mut assign = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iters {
        let mut changed = false;
        for i in 0..n {
            let x = points.row(i);
            let (best, d) = means
                .iter()
                .enumerate()
                .map(|(c, mu)| (c, ops::sq_dist(x, mu)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            let c = if d > lambda {
                means.push(x.to_vec());
                means.len() - 1
            } else {
                best
            };
            changed |= assign[i] != c;
            assign[i] = c;
        }
        // Hard means, then compact away empty clusters.
        let mut sums = vec![vec![0.0; m]; means.len()];
        let mut counts = vec![0usize; means.len()];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        let mut remap = vec![usize::MAX; means.len()];
        let mut kept = Vec::new();
        for (c, (s, &k)) in sums.into_iter().zip(&counts).enumerate() {
            if k > 0 {
                remap[c] = kept.len();
                kept.push(s.into_iter().map(|v| v / k as f64).collect::<Vec<f64>>());
            }
        }
        changed |= kept.len() != means.len();
        means = kept;
        assign.iter_mut().for_each(|c| *c = remap[*c]);
        history.push(objective(points, &means, &assign, lambda));
        if !changed {
            break;
        }
    }
    let rows: Vec<&[f64]> = means.iter().map(Vec::as_slice).collect();
    Ok(HardClustering {
        objective: *history.last().expect("at least one pass"),
        means: Tensor::from_rows(&rows, m)?,
        assignments: assign,
        history,
    })
}

/// Result of MAP-DP or EM. The first `n_classes` clusters are the labeled
/// class clusters; the rest were created from the points.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureClustering {
    pub means: Tensor,
    pub variances: Vec<f64>,
    pub labels: Vec<Option<usize>>,
    /// `[N, C]` assignment weights (one-hot for MAP-DP).
    pub assignments: Tensor,
    pub counts: Vec<f64>,
}

impl MixtureClustering {
    pub fn n_clusters(&self) -> usize {
        self.labels.len()
    }

    pub fn hard_assignments(&self) -> Vec<usize> {
        (0..self.assignments.rows())
            .map(|i| crate::protonets::argmax(self.assignments.row(i)))
            .collect()
    }

    /// Query probabilities from the labeled clusters.
    pub fn classify(&self, query_emb: &Tensor, n_classes: usize, mode: QueryMode) -> Result<Tensor> {
        let set = imp::ClusterSet {
            clusters: self
                .labels
                .iter()
                .enumerate()
                .map(|(c, &label)| imp::Cluster {
                    mean: self.means.row(c).to_vec(),
                    label,
                    variance: self.variances[c],
                })
                .collect(),
            n_classes,
            lambda: f64::NAN,
            assignments: self.assignments.clone(),
            spawned_by: vec![None; self.labels.len()],
        };
        imp::classify_queries(query_emb, &set, mode)
    }
}

struct Base {
    mu0: Vec<f64>,
    sigma0: f64,
}

fn base(points: &Tensor, init: Option<&LabeledInit>, cfg: &CrpConfig) -> Result<Base> {
    let m = points.cols();
    let stacked = match init {
        Some(l) if l.points.rows() > 0 => ops::concat_rows(&[&l.points, points])?,
        _ => points.clone(),
    };
    let mu0 = match &cfg.mu0 {
        Some(v) if v.len() == m => v.clone(),
        Some(v) => {
            return Err(Error::Shape {
                op: "crp_base",
                shapes: vec![vec![v.len()], vec![m]],
            })
        }
        None => ops::weighted_mean(&stacked, &Tensor::full(&[stacked.rows(), 1], 1.0), None)?.into_data(),
    };
    let sigma0 = match cfg.sigma0 {
        Some(s) => s,
        None => {
            let spread = match init {
                Some(l) if l.n_classes >= 2 => imp::prototype_spread(&class_means(l)?),
                _ => imp::prototype_spread(&stacked),
            };
            if spread > 0.0 {
                spread
            } else {
                1.0
            }
        }
    };
    Ok(Base { mu0, sigma0 })
}

fn class_means(init: &LabeledInit) -> Result<Tensor> {
    crate::protonets::proto_means(&init.points, &init.labels, init.n_classes)
}

/// Running sufficient statistics of one cluster.
#[derive(Clone)]
struct Stats {
    count: f64,
    sum: Vec<f64>,
    label: Option<usize>,
}

fn seed_stats(init: Option<&LabeledInit>, m: usize) -> Result<Vec<Stats>> {
    let Some(l) = init else { return Ok(Vec::new()) };
    if l.points.rows() != l.labels.len() || (l.points.rows() > 0 && l.points.cols() != m) {
        return Err(Error::Shape {
            op: "labeled_init",
            shapes: vec![l.points.shape().to_vec(), vec![l.labels.len()]],
        });
    }
    let mut stats: Vec<Stats> = (0..l.n_classes)
        .map(|c| Stats {
            count: 0.0,
            sum: vec![0.0; m],
            label: Some(c),
        })
        .collect();
    for (i, &y) in l.labels.iter().enumerate() {
        let s = stats
            .get_mut(y)
            .ok_or_else(|| Error::InvalidArgument(format!("label {y} outside 0..{}", l.n_classes)))?;
        s.count += 1.0;
        s.sum.iter_mut().zip(l.points.row(i)).for_each(|(a, x)| *a += x);
    }
    if let Some(c) = stats.iter().position(|s| s.count == 0.0) {
        return Err(Error::Insufficient(format!("class {c} has no labeled support")));
    }
    Ok(stats)
}

fn ln_alpha(alpha: f64) -> f64 {
    if alpha > 0.0 {
        alpha.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Single-pass MAP-DP over `points` (the unlabeled data), optionally seeded
/// with labeled class clusters. Each point goes to the highest-scoring option
/// among the existing clusters and a new one.
pub fn map_dp(points: &Tensor, init: Option<&LabeledInit>, cfg: &CrpConfig, sigma: f64) -> Result<MixtureClustering> {
    check_points("map_dp", points)?;
    cfg.validate()?;
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveVariance { op: "map_dp", value: sigma });
    }
    let m = points.cols();
    let Base { mu0, sigma0 } = base(points, init, cfg)?;
    let mut stats = seed_stats(init, m)?;
    let posterior = |s: &Stats| -> (Vec<f64>, f64) {
        let denom = sigma + sigma0 * s.count;
        let mean = mu0
            .iter()
            .zip(&s.sum)
            .map(|(m0, sx)| (sigma * m0 + sigma0 * sx) / denom)
            .collect();
        (mean, sigma * sigma0 / denom)
    };
    let mut assign = Vec::with_capacity(points.rows());
    for i in 0..points.rows() {
        let x = points.row(i);
        let mut best = stats.len();
        let mut best_q = ln_alpha(cfg.alpha) + ops::gaussian_log_pdf(x, &mu0, sigma0);
        for (c, s) in stats.iter().enumerate() {
            let (mu, var) = posterior(s);
            let q = s.count.ln() + ops::gaussian_log_pdf(x, &mu, var);
            if q > best_q || (best == stats.len() && best_q == f64::NEG_INFINITY) {
                best = c;
                best_q = q;
            }
        }
        if best == stats.len() {
            stats.push(Stats {
                count: 0.0,
                sum: vec![0.0; m],
                label: None,
            });
        }
        let s = &mut stats[best];
        s.count += 1.0;
        s.sum.iter_mut().zip(x).for_each(|(a, v)| *a += v);
        assign.push(best);
    }
    let c = stats.len();
    let mut z = Tensor::zeros(&[points.rows(), c]);
    for (i, &a) in assign.iter().enumerate() {
        z.data_mut()[i * c + a] = 1.0;
    }
    let post: Vec<(Vec<f64>, f64)> = stats.iter().map(|s| posterior(s)).collect();
    let rows: Vec<&[f64]> = post.iter().map(|p| p.0.as_slice()).collect();
    Ok(MixtureClustering {
        means: Tensor::from_rows(&rows, m)?,
        variances: post.iter().map(|p| p.1).collect(),
        labels: stats.iter().map(|s| s.label).collect(),
        assignments: z,
        counts: stats.iter().map(|s| s.count).collect(),
    })
}

/// Single-pass soft EM over `points` (the unlabeled data). Existing
/// clusters score `ln N_c + ln N(x; mu_c, sigma_c)` (the count term is
/// dropped without the CRP prior) and a new cluster scores
/// `ln alpha + ln N(x; mu0, sigma0)`. A cluster is created when the
/// new-cluster weight exceeds `epsilon`, at the base posterior mean given
/// the point; otherwise the weights are renormalized over existing clusters.
/// Labeled clusters have variance `sigma_l`, created ones `sigma_u`.
pub fn em_infer(points: &Tensor, init: Option<&LabeledInit>, cfg: &CrpConfig, sigma_l: f64, sigma_u: f64) -> Result<MixtureClustering> {
    check_points("em_infer", points)?;
    cfg.validate()?;
    for (op, v) in [("sigma_l", sigma_l), ("sigma_u", sigma_u)] {
        if !(v > 0.0) {
            return Err(Error::NonPositiveVariance { op, value: v });
        }
    }
    let m = points.cols();
    let Base { mu0, sigma0 } = base(points, init, cfg)?;
    let mut stats = seed_stats(init, m)?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(points.rows());
    let mean_of = |s: &Stats| -> Vec<f64> { s.sum.iter().map(|v| v / s.count).collect() };
    let var_of = |s: &Stats| if s.label.is_some() { sigma_l } else { sigma_u };
    for i in 0..points.rows() {
        let x = points.row(i);
        let mut q: Vec<f64> = stats
            .iter()
            .map(|s| {
                let prior = if cfg.use_crp_prior { s.count.ln() } else { 0.0 };
                prior + ops::gaussian_log_pdf(x, &mean_of(s), var_of(s))
            })
            .collect();
        q.push(ln_alpha(cfg.alpha) + ops::gaussian_log_pdf(x, &mu0, sigma0));
        let c = stats.len();
        let z = if c == 0 {
            vec![1.0]
        } else {
            let t = Tensor::matrix(1, c + 1, q.clone())?;
            let z = ops::softmax_rows(&t, None)?.into_data();
            if z[c] > cfg.epsilon {
                z
            } else {
                let mut mask = vec![true; c + 1];
                mask[c] = false;
                ops::softmax_rows(&t, Some(&mask))?.into_data()
            }
        };
        if z[c] > 0.0 {
            let denom = sigma_u + sigma0;
            let center: Vec<f64> = mu0
                .iter()
                .zip(x)
                .map(|(m0, xi)| (sigma_u * m0 + sigma0 * xi) / denom)
                .collect();
            stats.push(Stats {
                count: z[c],
                sum: center.iter().map(|v| v * z[c]).collect(),
                label: None,
            });
        }
        for (s, &w) in stats.iter_mut().zip(&z).take(c) {
            s.count += w;
            s.sum.iter_mut().zip(x).for_each(|(a, v)| *a += w * v);
        }
        let mut z = z;
        z.truncate(stats.len());
        rows.push(z);
    }
    let c = stats.len();
    let mut zt = Tensor::zeros(&[points.rows(), c]);
    for (i, r) in rows.iter().enumerate() {
        zt.data_mut()[i * c..i * c + r.len()].copy_from_slice(r);
    }
    let means: Vec<Vec<f64>> = stats.iter().map(mean_of).collect();
    let mrows: Vec<&[f64]> = means.iter().map(Vec::as_slice).collect();
    Ok(MixtureClustering {
        means: Tensor::from_rows(&mrows, m)?,
        variances: stats.iter().map(var_of).collect(),
        labels: stats.iter().map(|s| s.label).collect(),
        assignments: zt,
        counts: stats.iter().map(|s| s.count).collect(),
    })
}

/// Few-shot classifier on top of hard DP-means: cluster the supports, label
/// each cluster by majority vote of its labeled members (ties to the lower
/// class), and predict the label of the closest labeled cluster.
pub fn dp_means_classify(
    support_emb: &Tensor,
    labels: &[Option<usize>],
    n_classes: usize,
    query_emb: &Tensor,
    lambda: f64,
    max_iters: usize,
) -> Result<(Vec<usize>, usize)> {
    let hc = dp_means_hard(support_emb, lambda, max_iters)?;
    let c = hc.n_clusters();
    let mut votes = vec![vec![0usize; n_classes]; c];
    for (i, l) in labels.iter().enumerate() {
        if let Some(y) = l {
            votes[hc.assignments[i]][*y] += 1;
        }
    }
    let cluster_label: Vec<Option<usize>> = votes
        .iter()
        .map(|v| {
            let best = (0..n_classes).fold(0, |b, k| if v[k] > v[b] { k } else { b });
            (v.get(best).copied().unwrap_or(0) > 0).then_some(best)
        })
        .collect();
    let d = ops::pairwise_sqdist(query_emb, &hc.means)?;
    let preds = (0..query_emb.rows())
        .map(|i| {
            let row = d.row(i);
            let mut best: Option<usize> = None;
            for j in (0..c).filter(|&j| cluster_label[j].is_some()) {
                if best.is_none_or(|b| row[j] < row[b]) {
                    best = Some(j);
                }
            }
            best.and_then(|b| cluster_label[b]).unwrap_or(0)
        })
        .collect();
    Ok((preds, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor {
        Tensor::matrix(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn dp_means_hand_trace() {
        let hc = dp_means_hard(&col(&[0.0, 0.1, 10.0]), 1.0, 50).unwrap();
        assert_eq!(hc.n_clusters(), 2);
        assert!((hc.means.data()[0] - 0.05).abs() < 1e-12);
        assert_eq!(hc.means.data()[1], 10.0);
        assert_eq!(hc.assignments, vec![0, 0, 1]);
    }

    #[test]
    fn dp_means_limits() {
        let pts = col(&[0.0, 1.0, 3.0, 7.0]);
        let one = dp_means_hard(&pts, 50.0, 50).unwrap();
        assert_eq!(one.n_clusters(), 1);
        assert_eq!(one.means.data(), &[2.75]);
        let all = dp_means_hard(&pts, 0.0, 50).unwrap();
        assert_eq!(all.n_clusters(), 4);
        assert_eq!(all.objective, 0.0);
    }

    #[test]
    fn map_dp_scalar_trace() {
        let cfg = CrpConfig {
            alpha: 1.0,
            mu0: Some(vec![0.0]),
            sigma0: Some(10.0),
            ..Default::default()
        };
        let r = map_dp(&col(&[0.0, 10.0]), None, &cfg, 1.0).unwrap();
        // Second point: existing cluster has N = 1, variance 10/11, mean 0.
        let var = 10.0 / 11.0;
        let q_old = 0.0 - 100.0 / (2.0 * var) - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
        let q_new = 0.0 - 100.0 / 20.0 - 0.5 * (20.0 * std::f64::consts::PI).ln();
        assert!(q_new > q_old);
        assert_eq!(r.n_clusters(), 2);
        assert_eq!(r.hard_assignments(), vec![0, 1]);
    }

    #[test]
    fn map_dp_zero_alpha_never_creates() {
        let init = LabeledInit {
            points: col(&[0.0]),
            labels: vec![0],
            n_classes: 1,
        };
        let cfg = CrpConfig {
            alpha: 0.0,
            ..Default::default()
        };
        let r = map_dp(&col(&[0.0, 100.0, -50.0]), Some(&init), &cfg, 1.0).unwrap();
        assert_eq!(r.n_clusters(), 1);
    }

    #[test]
    fn em_threshold_above_one_never_creates() {
        let init = LabeledInit {
            points: col(&[0.0, 1.0]),
            labels: vec![0, 1],
            n_classes: 2,
        };
        let cfg = CrpConfig {
            epsilon: 1.0,
            ..Default::default()
        };
        let r = em_infer(&col(&[50.0, -40.0, 0.5]), Some(&init), &cfg, 1.0, 1.0).unwrap();
        assert_eq!(r.n_clusters(), 2);
        for i in 0..3 {
            assert!((r.assignments.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn em_dominant_density() {
        let init = LabeledInit {
            points: col(&[0.0]),
            labels: vec![0],
            n_classes: 1,
        };
        let cfg = CrpConfig {
            alpha: 1e-9,
            mu0: Some(vec![0.0]),
            sigma0: Some(1.0),
            ..Default::default()
        };
        let r = em_infer(&col(&[0.0]), Some(&init), &cfg, 1.0, 1.0).unwrap();
        assert_eq!(r.n_clusters(), 1);
        assert!((r.assignments.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classifier_follows_majority_clusters() {
        let s = col(&[0.0, 0.2, 10.0, 20.0]);
        let labels = [Some(0), Some(0), Some(1), Some(0)];
        let (pred, c) = dp_means_classify(&s, &labels, 2, &col(&[0.1, 9.0, 19.0]), 1.0, 20).unwrap();
        assert_eq!(c, 3);
        assert_eq!(pred, vec![0, 1, 0]);
    }
}
