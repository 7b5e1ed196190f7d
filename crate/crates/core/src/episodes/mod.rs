//! Datasets, the synthetic generator, file formats and episode samplers.

mod dataset;
pub mod io;
mod protocol;
mod sampler;
mod synth;

pub use dataset::{Dataset, Split};
pub use io::{load_dataset, save_dataset};
pub use protocol::Protocol;
pub use sampler::{
    sample_semisupervised, sample_superclass, sample_supervised, sample_unsupervised, Episode,
    SamplerConfig,
};
pub use synth::{gen_synthetic, SyntheticConfig};
