//! Infinite mixture prototypes.
//!
//! Each class starts as one cluster at its mean. A single ordered pass over
//! the embedded supports then spawns a new cluster for any point farther
//! than `lambda` (squared distance) from every label-compatible cluster.
//! Soft assignments and weighted means refine the clusters, and queries are
//! classified by the best cluster of each class.

use crate::autodiff::{ops, Graph, NodeId, Tensor};
use crate::episodes::Episode;
use crate::error::{Error, Result};
use crate::model::{EpisodeOutput, ParamNodes};
use crate::protonets::{self, best_per_class};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaMode {
    /// Recomputed per episode from `alpha`, the prototype spread and the
    /// current variances.
    Estimated,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assignment {
    Soft,
    /// Each point goes wholly to its most likely compatible cluster.
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryMode {
    /// Softmax over negative squared distance to each class's closest cluster.
    Distance,
    /// Softmax over the best Gaussian log-density of each class.
    Density,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpConfig {
    pub alpha: f64,
    pub lambda_mode: LambdaMode,
    pub clustering_iterations: usize,
    pub label_constrained: bool,
    pub assignment: Assignment,
}

impl Default for ImpConfig {
    fn default() -> Self {
        ImpConfig {
            alpha: 0.1,
            lambda_mode: LambdaMode::Estimated,
            clustering_iterations: 1,
            label_constrained: true,
            assignment: Assignment::Soft,
        }
    }
}

impl ImpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.clustering_iterations == 0 {
            return Err(Error::InvalidArgument("clustering_iterations must be at least 1".into()));
        }
        if let LambdaMode::Fixed(l) = self.lambda_mode {
            if l.is_nan() {
                return Err(Error::InvalidArgument("fixed lambda is NaN".into()));
            }
        }
        Ok(())
    }
}

/// Cluster-creation threshold `2 sigma ln(alpha / (1 + rho/sigma)^(d/2))`.
pub fn estimate_lambda(sigma: f64, alpha: f64, rho: f64, d: usize) -> f64 {
    let base = (1.0 + rho / sigma).powf(d as f64 / 2.0);
    if base.is_finite() {
        2.0 * sigma * (alpha / base).ln()
    } else {
        2.0 * sigma * (alpha.ln() - d as f64 / 2.0 * (1.0 + rho / sigma).ln())
    }
}

/// Mean squared deviation of the rows of `means` from their average; zero
/// with fewer than two rows.
pub fn prototype_spread(means: &Tensor) -> f64 {
    let n = means.rows();
    if n < 2 {
        return 0.0;
    }
    let m = means.cols();
    let mut center = vec![0.0; m];
    for i in 0..n {
        for (c, v) in center.iter_mut().zip(means.row(i)) {
            *c += v;
        }
    }
    center.iter_mut().for_each(|c| *c /= n as f64);
    (0..n).map(|i| ops::sq_dist(means.row(i), &center)).sum::<f64>() / n as f64
}

/// The variance that enters the threshold: `sigma_l` for labeled episodes,
/// the average of both when unlabeled points are present, `sigma_u` when
/// nothing is labeled.
pub fn lambda_sigma(sigma_l: f64, sigma_u: f64, any_labeled: bool, any_unlabeled: bool) -> f64 {
    match (any_labeled, any_unlabeled) {
        (true, true) => 0.5 * (sigma_l + sigma_u),
        (true, false) => sigma_l,
        (false, _) => sigma_u,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub mean: Vec<f64>,
    /// Episode class, absent for clusters spawned by unlabeled points.
    pub label: Option<usize>,
    pub variance: f64,
}

/// Clusters in creation order (class means first) with the support
/// assignments of the last refinement step.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub n_classes: usize,
    pub lambda: f64,
    /// `[K, C]` assignment weights of the supports.
    pub assignments: Tensor,
    /// Support index that spawned each cluster; `None` for class inits.
    pub spawned_by: Vec<Option<usize>>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.clusters.iter().map(|c| c.label).collect()
    }

    pub fn per_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for c in self.clusters.iter().filter_map(|c| c.label) {
            counts[c] += 1;
        }
        counts
    }

    pub fn means(&self) -> Tensor {
        let m = self.clusters.first().map_or(0, |c| c.mean.len());
        let rows: Vec<&[f64]> = self.clusters.iter().map(|c| c.mean.as_slice()).collect();
        Tensor::from_rows(&rows, m).expect("cluster means share a dimension")
    }

    pub fn variances(&self) -> Tensor {
        Tensor::vector(self.clusters.iter().map(|c| c.variance).collect())
    }

    /// Index of the heaviest cluster for each support.
    pub fn hard_assignments(&self) -> Vec<usize> {
        (0..self.assignments.rows())
            .map(|i| protonets::argmax(self.assignments.row(i)))
            .collect()
    }
}

/// Graph-side result of [`build_cluster_nodes`].
#[derive(Clone, Debug)]
pub struct ClusterNodes {
    /// `[C, M]`
    pub means: NodeId,
    /// `[C]`
    pub variances: NodeId,
    pub labels: Vec<Option<usize>>,
    /// `[K, C]`
    pub assignments: NodeId,
    pub lambda: f64,
    pub spawned_by: Vec<Option<usize>>,
}

fn compatibility(labels: &[Option<usize>], cluster_labels: &[Option<usize>], constrained: bool) -> Vec<bool> {
    let mut mask = Vec::with_capacity(labels.len() * cluster_labels.len());
    for y in labels {
        for l in cluster_labels {
            mask.push(!constrained || y.is_none() || y == l);
        }
    }
    mask
}

/// Runs the clustering on embedded supports `h` (`[K, M]`).
///
/// `labels[i]` is the episode class of support `i` or `None`. `sigmas` is a
/// `[2]` node holding `[sigma_l, sigma_u]`. Creation decisions are made on
/// values and carry no gradient; everything after them is differentiable.
pub fn build_cluster_nodes(
    g: &mut Graph,
    h: NodeId,
    labels: &[Option<usize>],
    n_classes: usize,
    sigmas: NodeId,
    config: &ImpConfig,
) -> Result<ClusterNodes> {
    config.validate()?;
    let hv = g.value(h).clone();
    let k = hv.rows();
    if k == 0 || labels.len() != k || hv.shape().len() != 2 {
        return Err(Error::Shape {
            op: "build_clusters",
            shapes: vec![hv.shape().to_vec(), vec![labels.len()]],
        });
    }
    if g.value(sigmas).shape() != [2] {
        return Err(Error::Shape {
            op: "build_clusters",
            shapes: vec![g.value(sigmas).shape().to_vec()],
        });
    }
    let m = hv.cols();
    if let Some(bad) = labels.iter().flatten().find(|&&y| y >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "support label {bad} outside 0..{n_classes}"
        )));
    }
    let (sigma_l, sigma_u) = (g.value(sigmas).data()[0], g.value(sigmas).data()[1]);
    let any_labeled = labels.iter().any(Option::is_some);
    let any_unlabeled = labels.iter().any(Option::is_none);

    // Step 1: one cluster per class at the mean of its labeled supports.
    let mut cluster_labels: Vec<Option<usize>> = Vec::new();
    let mut init: Option<NodeId> = None;
    let mut current: Vec<Vec<f64>> = Vec::new();
    if n_classes > 0 {
        let w = protonets::one_hot(labels, n_classes);
        let mass = (0..n_classes).map(|c| (0..k).map(|i| w.at(i, c)).sum::<f64>());
        for (c, total) in mass.enumerate() {
            if total == 0.0 {
                return Err(Error::Insufficient(format!("class {c} has no labeled support")));
            }
        }
        let w = g.constant(w);
        let means = g.weighted_mean(h, w, None)?;
        let mv = g.value(means);
        current = (0..n_classes).map(|c| mv.row(c).to_vec()).collect();
        cluster_labels = (0..n_classes).map(Some).collect();
        init = Some(means);
    }

    // Step 2: threshold.
    let lambda = match config.lambda_mode {
        LambdaMode::Fixed(l) => l,
        LambdaMode::Estimated => {
            let rho = match init {
                Some(means) => prototype_spread(g.value(means)),
                None => 0.0,
            };
            let sigma = lambda_sigma(sigma_l, sigma_u, any_labeled, any_unlabeled);
            estimate_lambda(sigma, config.alpha, rho, m)
        }
    };

    // Step 3: ordered creation pass; existing means stay fixed.
    let mut spawned_by: Vec<Option<usize>> = vec![None; cluster_labels.len()];
    let mut created = Vec::new();
    for i in 0..k {
        let x = hv.row(i);
        let nearest = current
            .iter()
            .zip(&cluster_labels)
            .filter(|(_, l)| labels[i].is_none() || **l == labels[i])
            .map(|(mu, _)| ops::sq_dist(x, mu))
            .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
        let spawn = match nearest {
            None => true,
            Some(d) => d > lambda,
        };
        if spawn {
            current.push(x.to_vec());
            cluster_labels.push(labels[i]);
            spawned_by.push(Some(i));
            created.push(i);
        }
    }
    let mut means = match (init, created.is_empty()) {
        (Some(init), true) => init,
        (Some(init), false) => {
            let spawned = g.gather_rows(h, created)?;
            g.concat_rows(&[init, spawned])?
        }
        (None, _) => g.gather_rows(h, created)?,
    };
    let var_idx: Vec<usize> = spawned_by
        .iter()
        .zip(&cluster_labels)
        .map(|(s, l)| usize::from(s.is_some() && l.is_none()))
        .collect();
    let variances = g.gather_rows(sigmas, var_idx)?;

    // Steps 4-5: assignments and weighted means.
    let mask = compatibility(labels, &cluster_labels, config.label_constrained);
    let mut assignments = None;
    for _ in 0..config.clustering_iterations {
        let logd = g.gaussian_log_density(h, means, variances)?;
        let z = match config.assignment {
            Assignment::Soft => g.softmax(logd, Some(mask.clone()))?,
            Assignment::Hard => {
                let lv = g.value(logd);
                let c = lv.cols();
                let mut one_hot = Tensor::zeros(&[k, c]);
                for i in 0..k {
                    let row = lv.row(i);
                    let mut best: Option<usize> = None;
                    for j in (0..c).filter(|&j| mask[i * c + j]) {
                        if best.is_none_or(|b| row[j] > row[b]) {
                            best = Some(j);
                        }
                    }
                    one_hot.data_mut()[i * c + best.expect("a compatible cluster exists")] = 1.0;
                }
                g.constant(one_hot)
            }
        };
        means = g.weighted_mean(h, z, Some(means))?;
        assignments = Some(z);
    }
    Ok(ClusterNodes {
        means,
        variances,
        labels: cluster_labels,
        assignments: assignments.expect("at least one iteration"),
        lambda,
        spawned_by,
    })
}

/// Numeric clustering of fixed embeddings. See [`build_cluster_nodes`].
pub fn build_clusters(
    support_emb: &Tensor,
    labels: &[Option<usize>],
    n_classes: usize,
    sigma_l: f64,
    sigma_u: f64,
    config: &ImpConfig,
) -> Result<ClusterSet> {
    for (op, v) in [("sigma_l", sigma_l), ("sigma_u", sigma_u)] {
        if !(v > 0.0) {
            return Err(Error::NonPositiveVariance { op, value: v });
        }
    }
    let mut g = Graph::new();
    let h = g.constant(support_emb.clone());
    let sigmas = g.constant(Tensor::vector(vec![sigma_l, sigma_u]));
    let nodes = build_cluster_nodes(&mut g, h, labels, n_classes, sigmas, config)?;
    Ok(to_cluster_set(&g, &nodes, n_classes))
}

pub fn to_cluster_set(g: &Graph, nodes: &ClusterNodes, n_classes: usize) -> ClusterSet {
    let means = g.value(nodes.means);
    let vars = g.value(nodes.variances);
    ClusterSet {
        clusters: nodes
            .labels
            .iter()
            .enumerate()
            .map(|(c, &label)| Cluster {
                mean: means.row(c).to_vec(),
                label,
                variance: vars.data()[c],
            })
            .collect(),
        n_classes,
        lambda: nodes.lambda,
        assignments: g.value(nodes.assignments).clone(),
        spawned_by: nodes.spawned_by.clone(),
    }
}

/// Per-class query scores `[Q, n]` from the best labeled cluster of each
/// class: negative squared distance or Gaussian log-density.
pub fn query_logits(
    g: &mut Graph,
    query_emb: NodeId,
    means: NodeId,
    variances: NodeId,
    labels: &[Option<usize>],
    n_classes: usize,
    mode: QueryMode,
) -> Result<NodeId> {
    let scores = match mode {
        QueryMode::Distance => {
            let d = g.pairwise_sqdist(query_emb, means)?;
            g.scale(d, -1.0)?
        }
        QueryMode::Density => g.gaussian_log_density(query_emb, means, variances)?,
    };
    let sel = best_per_class(g.value(scores), labels, n_classes, true)?;
    g.take_cols(scores, sel)
}

/// Class probabilities `[Q, n]` for embedded queries.
pub fn classify_queries(query_emb: &Tensor, clusters: &ClusterSet, mode: QueryMode) -> Result<Tensor> {
    let mut g = Graph::new();
    let q = g.constant(query_emb.clone());
    let means = g.constant(clusters.means());
    let vars = g.constant(clusters.variances());
    let logits = query_logits(&mut g, q, means, vars, &clusters.labels(), clusters.n_classes, mode)?;
    ops::softmax_rows(g.value(logits), None)
}

/// Mean cross-entropy of the queries against the density-selected cluster
/// of every class.
pub fn masked_loss(query_emb: &Tensor, query_labels: &[usize], clusters: &ClusterSet) -> Result<f64> {
    let mut g = Graph::new();
    let q = g.constant(query_emb.clone());
    let means = g.constant(clusters.means());
    let vars = g.constant(clusters.variances());
    let logits = query_logits(
        &mut g,
        q,
        means,
        vars,
        &clusters.labels(),
        clusters.n_classes,
        QueryMode::Density,
    )?;
    let loss = g.cross_entropy(logits, query_labels)?;
    Ok(g.value(loss).item())
}

/// Differentiable IMP loss of one episode; labeled supports come before
/// unlabeled ones in the creation order.
pub fn imp_episode_loss(g: &mut Graph, nodes: &ParamNodes, episode: &Episode, config: &ImpConfig) -> Result<EpisodeOutput> {
    let (xs, labels) = episode.all_supports();
    let xs = g.constant(xs);
    let hs = protonets::embed(g, &nodes.layers, xs)?;
    let xq = g.constant(episode.query_x.clone());
    let hq = protonets::embed(g, &nodes.layers, xq)?;
    let clusters = build_cluster_nodes(g, hs, &labels, episode.way, nodes.sigmas, config)?;
    let logits = query_logits(
        g,
        hq,
        clusters.means,
        clusters.variances,
        &clusters.labels,
        episode.way,
        QueryMode::Density,
    )?;
    let loss = g.cross_entropy(logits, &episode.query_y)?;
    let scores = g.value(logits);
    Ok(EpisodeOutput {
        loss,
        accuracy: protonets::accuracy(scores, &episode.query_y),
        n_clusters: clusters.labels.len(),
        predictions: (0..scores.rows()).map(|i| protonets::argmax(scores.row(i))).collect(),
    })
}

/// Clusters unlabeled embeddings and returns the heaviest cluster of each point.
pub fn cluster_unlabeled(emb: &Tensor, sigma_u: f64, config: &ImpConfig) -> Result<(ClusterSet, Vec<usize>)> {
    let labels = vec![None; emb.rows()];
    let set = build_clusters(emb, &labels, 0, sigma_u, sigma_u, config)?;
    let assignments = set.hard_assignments();
    Ok((set, assignments))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor {
        Tensor::matrix(v.len(), 1, v.to_vec()).unwrap()
    }

    fn fixed(l: f64) -> ImpConfig {
        ImpConfig {
            lambda_mode: LambdaMode::Fixed(l),
            ..Default::default()
        }
    }

    #[test]
    fn lambda_values() {
        assert_eq!(estimate_lambda(1.0, 1.0, 0.0, 7), 0.0);
        assert!((estimate_lambda(1.0, std::f64::consts::E, 0.0, 3) - 2.0).abs() < 1e-15);
        assert!((estimate_lambda(2.0, 0.5, 2.0, 2) - 4.0 * 0.25f64.ln()).abs() < 1e-12);
        assert!((estimate_lambda(2.0, 0.5, 2.0, 2) + 5.5452).abs() < 1e-4);
        // huge dimension takes the log path
        assert!(estimate_lambda(1.0, 0.1, 1e6, 4000).is_finite());
    }

    #[test]
    fn spread_of_prototypes() {
        assert_eq!(prototype_spread(&col(&[3.0])), 0.0);
        assert_eq!(prototype_spread(&col(&[-1.0, 1.0])), 1.0);
    }

    #[test]
    fn close_points_join_their_class() {
        let set = build_clusters(&col(&[0.0, 0.2, 10.0]), &[Some(0), Some(0), Some(1)], 2, 0.5, 0.5, &fixed(1.0)).unwrap();
        assert_eq!(set.len(), 2);
        assert!((set.clusters[0].mean[0] - 0.1).abs() < 1e-12);
        assert_eq!(set.clusters[1].mean[0], 10.0);
    }

    #[test]
    fn distant_points_spawn_labeled_clusters() {
        let set = build_clusters(&col(&[0.0, 5.0]), &[Some(0), Some(0)], 1, 0.5, 0.5, &fixed(1.0)).unwrap();
        assert_eq!(set.labels(), vec![Some(0); 3]);
        let means: Vec<f64> = set.clusters.iter().map(|c| c.mean[0]).collect();
        for (m, e) in means.iter().zip([2.5, 0.0, 5.0]) {
            assert!((m - e).abs() < 0.01, "{means:?}");
        }
    }

    #[test]
    fn infinite_lambda_keeps_class_means() {
        let h = Tensor::matrix(4, 2, vec![0.0, 1.0, 2.0, 3.0, -1.0, 0.5, 4.0, 4.0]).unwrap();
        let set = build_clusters(&h, &[Some(1), Some(0), Some(1), Some(0)], 2, 2.0, 2.0, &fixed(f64::INFINITY)).unwrap();
        let proto = protonets::proto_means(&h, &[1, 0, 1, 0], 2).unwrap();
        assert_eq!(set.means(), proto);
    }

    #[test]
    fn eq6_probabilities() {
        let set = ClusterSet {
            clusters: [(0.0, 0), (4.0, 0), (10.0, 1)]
                .iter()
                .map(|&(m, l)| Cluster {
                    mean: vec![m],
                    label: Some(l),
                    variance: 1.0,
                })
                .collect(),
            n_classes: 2,
            lambda: 0.0,
            assignments: Tensor::zeros(&[0, 3]),
            spawned_by: vec![None; 3],
        };
        let p = classify_queries(&col(&[5.0]), &set, QueryMode::Distance).unwrap();
        assert!((p.data()[0] - 1.0 / (1.0 + (-24f64).exp())).abs() < 1e-15);
        let p = classify_queries(&col(&[0.0]), &set, QueryMode::Density).unwrap();
        assert!(p.data()[0] > p.data()[1]);
    }

    #[test]
    fn masked_loss_values() {
        let mk = |means: &[f64], var: f64| ClusterSet {
            clusters: means
                .iter()
                .enumerate()
                .map(|(c, &m)| Cluster {
                    mean: vec![m],
                    label: Some(c),
                    variance: var,
                })
                .collect(),
            n_classes: means.len(),
            lambda: 0.0,
            assignments: Tensor::zeros(&[0, means.len()]),
            spawned_by: vec![None; means.len()],
        };
        let loss = masked_loss(&col(&[5.0]), &[0], &mk(&[0.0, 10.0], 0.5)).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        let loss = masked_loss(&col(&[0.0]), &[0], &mk(&[0.0, 10.0], 0.5)).unwrap();
        assert!(loss < 1e-10);
    }

    #[test]
    fn missing_class_support_is_an_error() {
        let r = build_clusters(&col(&[0.0, 1.0]), &[Some(0), None], 2, 1.0, 1.0, &fixed(1.0));
        assert!(matches!(r, Err(Error::Insufficient(_))));
    }

    #[test]
    fn unlabeled_clustering_spawns_from_empty() {
        let (set, assign) = cluster_unlabeled(&col(&[0.0, 0.1, 9.0, 9.2]), 0.5, &fixed(1.0)).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(assign, vec![0, 0, 1, 1]);
        assert!(set.labels().iter().all(Option::is_none));
    }
}
