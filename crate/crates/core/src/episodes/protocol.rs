use rand::Rng;

use super::dataset::{Dataset, Split};
use super::sampler::{sample_semisupervised, sample_superclass, sample_supervised, Episode, SamplerConfig};
use crate::error::Result;

/// How classification episodes are drawn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Protocol {
    Supervised(SamplerConfig),
    /// Needs a label mask on the dataset.
    SemiSupervised(SamplerConfig),
    /// Labels are super-classes; each contributes `n_sub` sub-classes with
    /// one support and `queries_per_sub` queries each.
    SuperClass {
        n_super: usize,
        n_sub: usize,
        queries_per_sub: usize,
    },
}

impl Protocol {
    pub fn sample<R: Rng + ?Sized>(&self, ds: &Dataset, split: Split, rng: &mut R) -> Result<Episode> {
        match self {
            Protocol::Supervised(cfg) => sample_supervised(ds, split, cfg, rng),
            Protocol::SemiSupervised(cfg) => sample_semisupervised(ds, split, cfg, rng),
            Protocol::SuperClass {
                n_super,
                n_sub,
                queries_per_sub,
            } => sample_superclass(ds, split, *n_super, *n_sub, *queries_per_sub, rng),
        }
    }

    pub fn way(&self) -> usize {
        match self {
            Protocol::Supervised(c) | Protocol::SemiSupervised(c) => c.way,
            Protocol::SuperClass { n_super, .. } => *n_super,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Supervised(_) => "supervised",
            Protocol::SemiSupervised(_) => "semisupervised",
            Protocol::SuperClass { .. } => "superclass",
        }
    }
}
