use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Labeled points with class, optional super-class, split and label-mask
/// metadata.
///
/// Class and super-class ids are zero-based here; the text file format
/// stores them one-based.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<f64>,
    class_id: Vec<usize>,
    superclass_id: Option<Vec<usize>>,
    n_classes: usize,
    split: Vec<Split>,
    label_mask: Option<Vec<bool>>,
    by_class: Vec<Vec<usize>>,
    class_super: Option<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset with every class in the training split.
    pub fn new(
        dim: usize,
        points: Vec<f64>,
        class_id: Vec<usize>,
        superclass_id: Option<Vec<usize>>,
        n_classes: usize,
    ) -> Result<Self> {
        let n = class_id.len();
        if dim == 0 || points.len() != n * dim {
            return Err(Error::InvalidArgument(format!(
                "dataset: {} values do not form {n} points of dimension {dim}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dataset: non-finite value in point {}",
                bad / dim
            )));
        }
        let mut by_class = vec![Vec::new(); n_classes];
        for (i, &c) in class_id.iter().enumerate() {
            if c >= n_classes {
                return Err(Error::InvalidArgument(format!(
                    "dataset: point {i} has class {} but only {n_classes} classes are declared",
                    c + 1
                )));
            }
            by_class[c].push(i);
        }
        let class_super = match &superclass_id {
            None => None,
            Some(sup) => {
                if sup.len() != n {
                    return Err(Error::InvalidArgument(
                        "dataset: super-class labels do not match point count".into(),
                    ));
                }
                let mut map: Vec<Option<usize>> = vec![None; n_classes];
                for (i, (&c, &s)) in class_id.iter().zip(sup).enumerate() {
                    match map[c] {
                        Some(prev) if prev != s => {
                            return Err(Error::InvalidArgument(format!(
                                "dataset: class {} maps to super-classes {} and {} (point {i})",
                                c + 1,
                                prev + 1,
                                s + 1
                            )))
                        }
                        _ => map[c] = Some(s),
                    }
                }
                Some(map.into_iter().map(|s| s.unwrap_or(usize::MAX)).collect())
            }
        };
        Ok(Dataset {
            dim,
            points,
            class_id,
            superclass_id,
            n_classes,
            split: vec![Split::Train; n_classes],
            label_mask: None,
            by_class,
            class_super,
        })
    }

    pub fn len(&self) -> usize {
        self.class_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_id.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn class_of(&self, i: usize) -> usize {
        self.class_id[i]
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_id
    }

    pub fn superclass_ids(&self) -> Option<&[usize]> {
        self.superclass_id.as_deref()
    }

    pub fn has_superclass(&self) -> bool {
        self.superclass_id.is_some()
    }

    /// Super-class of a class, when super-classes are present and the class has points.
    pub fn superclass_of_class(&self, class: usize) -> Option<usize> {
        self.class_super
            .as_ref()
            .and_then(|m| m.get(class).copied())
            .filter(|&s| s != usize::MAX)
    }

    pub fn points_of_class(&self, class: usize) -> &[usize] {
        &self.by_class[class]
    }

    pub fn split_of(&self, class: usize) -> Split {
        self.split[class]
    }

    pub fn splits(&self) -> &[Split] {
        &self.split
    }

    pub fn classes_in(&self, split: Split) -> Vec<usize> {
        (0..self.n_classes)
            .filter(|&c| self.split[c] == split && !self.by_class[c].is_empty())
            .collect()
    }

    pub fn set_split(&mut self, class: usize, split: Split) -> Result<()> {
        if class >= self.n_classes {
            return Err(Error::InvalidArgument(format!("no class {}", class + 1)));
        }
        self.split[class] = split;
        Ok(())
    }

    pub fn set_all_splits(&mut self, split: Split) {
        self.split.iter_mut().for_each(|s| *s = split);
    }

    /// Assigns splits by shuffling groups and cutting by `fractions`
    /// (train, val, test). Groups are super-classes when present, so the
    /// sub-classes of one super-class always share a split.
    pub fn assign_splits(&mut self, fractions: [f64; 3], seed: u64) -> Result<()> {
        let total: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| !(*f >= 0.0)) || !(total > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "split fractions {fractions:?} must be nonnegative with a positive sum"
            )));
        }
        let group_of: Vec<usize> = (0..self.n_classes)
            .map(|c| self.superclass_of_class(c).unwrap_or(c))
            .collect();
        let mut groups = group_of.clone();
        groups.sort_unstable();
        groups.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        groups.shuffle(&mut rng);
        let g = groups.len() as f64;
        let n_train = (g * fractions[0] / total).round() as usize;
        let n_val = ((g * fractions[1] / total).round() as usize).min(groups.len() - n_train);
        let mut assignment = std::collections::HashMap::new();
        for (k, grp) in groups.iter().enumerate() {
            let s = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            assignment.insert(*grp, s);
        }
        for c in 0..self.n_classes {
            self.split[c] = assignment[&group_of[c]];
        }
        Ok(())
    }

    pub fn label_mask(&self) -> Option<&[bool]> {
        self.label_mask.as_deref()
    }

    pub fn set_label_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "label mask has {} entries for {} points",
                mask.len(),
                self.len()
            )));
        }
        self.label_mask = Some(mask);
        Ok(())
    }

    /// Marks `floor(fraction * n_c)` points of every class as labeled (at
    /// least one), chosen uniformly with a seeded generator. The mask is a
    /// property of the dataset, so a point keeps its status across episodes.
    pub fn draw_label_mask(&mut self, fraction: f64, seed: u64) -> Result<()> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "label fraction {fraction} outside [0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask = vec![false; self.len()];
        for members in &self.by_class {
            if members.is_empty() {
                continue;
            }
            let k = ((members.len() as f64 * fraction).floor() as usize).max(1);
            let mut order = members.clone();
            order.shuffle(&mut rng);
            for &i in &order[..k.min(order.len())] {
                mask[i] = true;
            }
        }
        self.label_mask = Some(mask);
        Ok(())
    }

    /// Rows `idx` as a `[len, dim]` matrix.
    pub fn gather(&self, idx: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.point(i));
        }
        Tensor::matrix(idx.len(), self.dim, data).expect("gather shape")
    }
}
