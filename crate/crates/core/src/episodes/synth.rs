use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Parameters of the synthetic Gaussian-mixture generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub modes_per_class: usize,
    pub input_dim: usize,
    /// Standard deviation of the mode means around the origin.
    pub mode_spread: f64,
    /// Isotropic standard deviation of points around their mode.
    pub within_mode_std: f64,
    pub points_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_classes: 10,
            modes_per_class: 4,
            input_dim: 2,
            mode_spread: 10.0,
            within_mode_std: 0.5,
            points_per_class: 40,
            seed: 0,
        }
    }
}

/// Draws a dataset in which each generating class is an equal-weight mixture
/// of `modes_per_class` spherical Gaussians.
///
/// Modes become the fine classes of the result and the generating classes
/// become its super-classes, so fine class `k * modes_per_class + m` is mode
/// `m` of super-class `k`. Points are split over modes round-robin, giving
/// every mode `points_per_class / modes_per_class` points (the remainder goes
/// to the first modes). All classes start in the training split.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.n_classes == 0 || cfg.modes_per_class == 0 || cfg.input_dim == 0 || cfg.points_per_class == 0
    {
        return Err(Error::InvalidArgument(format!(
            "synthetic generator needs positive counts, got {cfg:?}"
        )));
    }
    if !(cfg.mode_spread >= 0.0 && cfg.within_mode_std >= 0.0) {
        return Err(Error::InvalidArgument(
            "synthetic generator needs nonnegative spreads".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.input_dim;
    let spread = Normal::new(0.0, cfg.mode_spread).expect("valid normal");
    let noise = Normal::new(0.0, cfg.within_mode_std).expect("valid normal");

    let n_modes = cfg.n_classes * cfg.modes_per_class;
    let means: Vec<Vec<f64>> = (0..n_modes)
        .map(|_| (0..d).map(|_| spread.sample(&mut rng)).collect())
        .collect();

    let n = cfg.n_classes * cfg.points_per_class;
    let mut points = Vec::with_capacity(n * d);
    let mut class_id = Vec::with_capacity(n);
    let mut superclass_id = Vec::with_capacity(n);
    for k in 0..cfg.n_classes {
        for j in 0..cfg.points_per_class {
            let mode = k * cfg.modes_per_class + j % cfg.modes_per_class;
            points.extend(means[mode].iter().map(|m| m + noise.sample(&mut rng)));
            class_id.push(mode);
            superclass_id.push(k);
        }
    }
    Dataset::new(d, points, class_id, Some(superclass_id), n_modes)
}
