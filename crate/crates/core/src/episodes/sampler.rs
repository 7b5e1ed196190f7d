use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::dataset::{Dataset, Split};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub way: usize,
    pub shot: usize,
    pub queries_per_class: usize,
    pub unlabeled_per_class: usize,
    pub distractor_classes: usize,
    pub distractor_instances: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            way: 5,
            shot: 1,
            queries_per_class: 15,
            unlabeled_per_class: 0,
            distractor_classes: 0,
            distractor_instances: 0,
        }
    }
}

impl SamplerConfig {
    pub fn supervised(way: usize, shot: usize, queries_per_class: usize) -> Self {
        SamplerConfig {
            way,
            shot,
            queries_per_class,
            ..Default::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.way < 2 {
            return Err(Error::InvalidArgument(format!(
                "classification episodes need way >= 2, got {}",
                self.way
            )));
        }
        if self.shot == 0 {
            return Err(Error::InvalidArgument("shot must be positive".into()));
        }
        Ok(())
    }
}

/// One few-shot task.
///
/// Labels are episode-local class indices in `0..way`; `classes[y]` is the
/// dataset class (or super-class) behind label `y`. The `*_index` vectors
/// hold dataset point indices, parallel to the rows of the matching matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub way: usize,
    /// Labeled supports per class.
    pub shot: usize,
    pub queries_per_class: usize,
    pub classes: Vec<usize>,
    pub support_x: Tensor,
    pub support_y: Vec<usize>,
    pub support_index: Vec<usize>,
    pub unlabeled_x: Tensor,
    pub unlabeled_index: Vec<usize>,
    pub query_x: Tensor,
    pub query_y: Vec<usize>,
    pub query_index: Vec<usize>,
}

impl Episode {
    pub fn n_support(&self) -> usize {
        self.support_y.len()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled_index.len()
    }

    pub fn n_query(&self) -> usize {
        self.query_y.len()
    }

    pub fn input_dim(&self) -> usize {
        self.support_x.cols()
    }

    /// Labeled supports followed by unlabeled supports, as one matrix, with
    /// `None` labels for the unlabeled rows.
    pub fn all_supports(&self) -> (Tensor, Vec<Option<usize>>) {
        let x = if self.n_unlabeled() == 0 {
            self.support_x.clone()
        } else {
            crate::autodiff::ops::concat_rows(&[&self.support_x, &self.unlabeled_x])
                .expect("support shapes agree")
        };
        let labels = self
            .support_y
            .iter()
            .map(|&y| Some(y))
            .chain(std::iter::repeat_n(None, self.n_unlabeled()))
            .collect();
        (x, labels)
    }

    /// Checks the structural invariants every sampler promises.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(format!("episode invariant: {m}")));
        if self.classes.len() != self.way {
            return fail(format!("{} classes for way {}", self.classes.len(), self.way));
        }
        let mut sorted = self.classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.way {
            return fail("episode classes are not distinct".into());
        }
        if self.support_y.len() != self.way * self.shot {
            return fail(format!("{} supports for {}x{}", self.support_y.len(), self.way, self.shot));
        }
        for c in 0..self.way {
            let k = self.support_y.iter().filter(|&&y| y == c).count();
            if k != self.shot {
                return fail(format!("class {c} has {k} supports, expected {}", self.shot));
            }
        }
        if self.query_y.iter().any(|&y| y >= self.way) {
            return fail("query label outside the support classes".into());
        }
        let mut all: Vec<usize> = self
            .support_index
            .iter()
            .chain(&self.unlabeled_index)
            .chain(&self.query_index)
            .copied()
            .collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != n {
            return fail("a point appears twice in one episode".into());
        }
        Ok(())
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, pool: &[usize], amount: usize) -> Vec<usize> {
    index::sample(rng, pool.len(), amount)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

fn shortfall(what: String) -> Error {
    Error::Insufficient(what)
}

struct Builder {
    support: Vec<usize>,
    support_y: Vec<usize>,
    unlabeled: Vec<usize>,
    query: Vec<usize>,
    query_y: Vec<usize>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            support: Vec::new(),
            support_y: Vec::new(),
            unlabeled: Vec::new(),
            query: Vec::new(),
            query_y: Vec::new(),
        }
    }

    fn finish(self, ds: &Dataset, classes: Vec<usize>, shot: usize, q: usize) -> Episode {
        Episode {
            way: classes.len(),
            shot,
            queries_per_class: q,
            classes,
            support_x: ds.gather(&self.support),
            support_y: self.support_y,
            support_index: self.support,
            unlabeled_x: ds.gather(&self.unlabeled),
            unlabeled_index: self.unlabeled,
            query_x: ds.gather(&self.query),
            query_y: self.query_y,
            query_index: self.query,
        }
    }
}

/// Balanced `way`-way `shot`-shot episode from the classes of `split`.
pub fn sample_supervised<R: Rng + ?Sized>(
    ds: &Dataset,
    split: Split,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Episode> {
    cfg.check()?;
    let need = cfg.shot + cfg.queries_per_class;
    let eligible: Vec<usize> = ds
        .classes_in(split)
        .into_iter()
        .filter(|&c| ds.points_of_class(c).len() >= need)
        .collect();
    if eligible.len() < cfg.way {
        return Err(shortfall(format!(
            "{} split has {} classes with at least {need} points, episode needs {}",
            split.as_str(),
            eligible.len(),
            cfg.way
        )));
    }
    let classes = pick(rng, &eligible, cfg.way);
    let mut b = Builder::new();
    for (y, &c) in classes.iter().enumerate() {
        let pts = pick(rng, ds.points_of_class(c), need);
        b.support.extend(&pts[..cfg.shot]);
        b.support_y.extend(std::iter::repeat_n(y, cfg.shot));
        b.query.extend(&pts[cfg.shot..]);
        b.query_y.extend(std::iter::repeat_n(y, cfg.queries_per_class));
    }
    Ok(b.finish(ds, classes, cfg.shot, cfg.queries_per_class))
}

/// Episode with labeled supports and queries drawn from label-masked points,
/// unlabeled supports from the unmasked points of each support class, and
/// unlabeled distractors from classes outside the episode.
pub fn sample_semisupervised<R: Rng + ?Sized>(
    ds: &Dataset,
    split: Split,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Episode> {
    cfg.check()?;
    let mask = ds
        .label_mask()
        .ok_or_else(|| Error::InvalidArgument("semi-supervised sampling needs a label mask".into()))?;
    let labeled = |c: usize| -> Vec<usize> {
        ds.points_of_class(c).iter().copied().filter(|&i| mask[i]).collect()
    };
    let unlabeled = |c: usize| -> Vec<usize> {
        ds.points_of_class(c).iter().copied().filter(|&i| !mask[i]).collect()
    };
    let need = cfg.shot + cfg.queries_per_class;
    let classes_in = ds.classes_in(split);
    let eligible: Vec<usize> = classes_in
        .iter()
        .copied()
        .filter(|&c| labeled(c).len() >= need && unlabeled(c).len() >= cfg.unlabeled_per_class)
        .collect();
    if eligible.len() < cfg.way {
        return Err(shortfall(format!(
            "{} split has {} classes with {need} labeled and {} unlabeled points, episode needs {}",
            split.as_str(),
            eligible.len(),
            cfg.unlabeled_per_class,
            cfg.way
        )));
    }
    let classes = pick(rng, &eligible, cfg.way);
    let distractor_pool: Vec<usize> = classes_in
        .iter()
        .copied()
        .filter(|c| !classes.contains(c) && unlabeled(*c).len() >= cfg.distractor_instances)
        .collect();
    if distractor_pool.len() < cfg.distractor_classes {
        return Err(shortfall(format!(
            "{} split has {} possible distractor classes with {} unlabeled points, episode needs {}",
            split.as_str(),
            distractor_pool.len(),
            cfg.distractor_instances,
            cfg.distractor_classes
        )));
    }
    let distractors = pick(rng, &distractor_pool, cfg.distractor_classes);

    let mut b = Builder::new();
    for (y, &c) in classes.iter().enumerate() {
        let pts = pick(rng, &labeled(c), need);
        b.support.extend(&pts[..cfg.shot]);
        b.support_y.extend(std::iter::repeat_n(y, cfg.shot));
        b.query.extend(&pts[cfg.shot..]);
        b.query_y.extend(std::iter::repeat_n(y, cfg.queries_per_class));
    }
    for &c in &classes {
        b.unlabeled.extend(pick(rng, &unlabeled(c), cfg.unlabeled_per_class));
    }
    for &c in &distractors {
        b.unlabeled.extend(pick(rng, &unlabeled(c), cfg.distractor_instances));
    }
    Ok(b.finish(ds, classes, cfg.shot, cfg.queries_per_class))
}

/// Super-class episode: `n_super` super-classes, and within each, `n_sub`
/// sub-classes contributing one labeled support and `queries_per_sub`
/// queries apiece. Labels are super-class indices.
pub fn sample_superclass<R: Rng + ?Sized>(
    ds: &Dataset,
    split: Split,
    n_super: usize,
    n_sub: usize,
    queries_per_sub: usize,
    rng: &mut R,
) -> Result<Episode> {
    if !ds.has_superclass() {
        return Err(Error::InvalidArgument(
            "super-class episodes need super-class labels".into(),
        ));
    }
    if n_super < 2 || n_sub == 0 {
        return Err(Error::InvalidArgument(format!(
            "super-class episodes need n_super >= 2 and n_sub >= 1, got {n_super} and {n_sub}"
        )));
    }
    let need = 1 + queries_per_sub;
    let mut subs: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for c in ds.classes_in(split) {
        if ds.points_of_class(c).len() >= need {
            if let Some(s) = ds.superclass_of_class(c) {
                subs.entry(s).or_default().push(c);
            }
        }
    }
    let eligible: Vec<usize> = subs
        .iter()
        .filter(|(_, v)| v.len() >= n_sub)
        .map(|(s, _)| *s)
        .collect();
    if eligible.len() < n_super {
        return Err(shortfall(format!(
            "{} split has {} super-classes with {n_sub} sub-classes of {need} points, episode needs {n_super}",
            split.as_str(),
            eligible.len()
        )));
    }
    let supers = pick(rng, &eligible, n_super);
    let mut b = Builder::new();
    let mut query_groups = Vec::new();
    for (y, s) in supers.iter().enumerate() {
        for c in pick(rng, &subs[s], n_sub) {
            let pts = pick(rng, ds.points_of_class(c), need);
            b.support.push(pts[0]);
            b.support_y.push(y);
            query_groups.push((y, pts[1..].to_vec()));
        }
    }
    for (y, pts) in query_groups {
        b.query_y.extend(std::iter::repeat_n(y, pts.len()));
        b.query.extend(pts);
    }
    Ok(b.finish(ds, supers, n_sub, n_sub * queries_per_sub))
}

/// Unlabeled clustering task: `per_class` points from each of `n_classes`
/// classes, shuffled. The returned labels are for scoring only.
pub fn sample_unsupervised<R: Rng + ?Sized>(
    ds: &Dataset,
    split: Split,
    n_classes: usize,
    per_class: usize,
    rng: &mut R,
) -> Result<(Tensor, Vec<usize>)> {
    let eligible: Vec<usize> = ds
        .classes_in(split)
        .into_iter()
        .filter(|&c| ds.points_of_class(c).len() >= per_class)
        .collect();
    if eligible.len() < n_classes || n_classes == 0 || per_class == 0 {
        return Err(shortfall(format!(
            "{} split has {} classes with {per_class} points, clustering task needs {n_classes}",
            split.as_str(),
            eligible.len()
        )));
    }
    let classes = pick(rng, &eligible, n_classes);
    let mut items: Vec<(usize, usize)> = Vec::with_capacity(n_classes * per_class);
    for (y, &c) in classes.iter().enumerate() {
        items.extend(pick(rng, ds.points_of_class(c), per_class).into_iter().map(|i| (i, y)));
    }
    items.shuffle(rng);
    let idx: Vec<usize> = items.iter().map(|p| p.0).collect();
    Ok((ds.gather(&idx), items.into_iter().map(|p| p.1).collect()))
}
