//! Episodic training with RMSProp, gradient accumulation, validation,
//! checkpointing, and fixed-seed evaluation.

mod checkpoint;
mod optim;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_TAG};
pub use optim::{rmsprop_step, OptState, Schedule, RMS_DECAY, RMS_EPS};

use crate::autodiff::{Graph, Tensor};
use crate::episodes::{Dataset, Episode, Protocol, Split};
use crate::error::{Error, Result};
use crate::imp::{ImpConfig, QueryMode};
use crate::metrics::accuracy_ci;
use crate::model::{self, EpisodeOutput, ModelKind, ModelParams, ParamNodes};

/// Offset mixed into the seed of the validation episode stream, so it never
/// overlaps the training stream.
const VALIDATION_STREAM: u64 = 0x7661_6c69_6461_7465;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub protocol: Protocol,
    pub imp: ImpConfig,
    pub schedule: Schedule,
    /// Episodes whose gradients are summed into one update.
    pub accumulation: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub sigma_l_init: f64,
    pub sigma_u_init: f64,
    pub learn_sigma_u: bool,
    /// Validate every this many iterations; 0 disables validation.
    pub val_every: usize,
    pub val_episodes: usize,
    /// Write a log line every this many iterations; 0 logs only validation points.
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::Imp,
            protocol: Protocol::Supervised(Default::default()),
            imp: ImpConfig::default(),
            schedule: Schedule::default(),
            accumulation: 1,
            hidden: vec![64, 64],
            output_dim: 16,
            sigma_l_init: 5.0,
            sigma_u_init: 5.0,
            learn_sigma_u: true,
            val_every: 500,
            val_episodes: 100,
            log_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.imp.validate()?;
        self.schedule.validate()?;
        if self.accumulation == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "accumulation, output_dim and hidden sizes must be positive".into(),
            ));
        }
        if self.val_every > 0 && self.val_episodes < 2 {
            return Err(Error::InvalidArgument("validation needs at least 2 episodes".into()));
        }
        Ok(())
    }
}

/// SHA-256 of a configuration's canonical text.
pub fn config_digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

/// One training-log line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
    pub val_accuracy: Option<f64>,
    #[serde(rename = "mean_C")]
    pub mean_c: f64,
    pub wall_ms: u64,
}

impl LogEntry {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log entries serialize")
    }

    /// The entry with its timing field cleared, for run-to-run comparison.
    pub fn without_timing(&self) -> LogEntry {
        LogEntry {
            wall_ms: 0,
            ..self.clone()
        }
    }
}

/// Per-episode loss and summed parameter gradients.
#[derive(Clone, Debug)]
pub struct StepStats {
    pub loss: f64,
    pub accuracy: f64,
    pub mean_clusters: f64,
}

/// Gradients of one episode loss, in the order of [`ModelParams::tensors`].
/// Parameters that are constants on the graph get zeros.
pub fn episode_gradients<F>(params: &ModelParams, episode: &Episode, loss_fn: &F) -> Result<(Vec<Tensor>, EpisodeOutput, f64)>
where
    F: Fn(&mut Graph, &ParamNodes, &Episode) -> Result<EpisodeOutput>,
{
    let mut g = Graph::new();
    let nodes = params.register(&mut g, true)?;
    let out = loss_fn(&mut g, &nodes, episode)?;
    let loss = g.value(out.loss).item();
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("episode loss is {loss}")));
    }
    let mut grads = g.backward(out.loss)?;
    let tensors = params.tensors();
    let g = nodes
        .leaves()
        .into_iter()
        .zip(tensors)
        .map(|(id, t)| grads.take(id).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((g, out, loss))
}

/// Sums the gradients of several episodes.
pub fn accumulate_gradients<F>(params: &ModelParams, episodes: &[Episode], loss_fn: &F) -> Result<(Vec<Tensor>, StepStats)>
where
    F: Fn(&mut Graph, &ParamNodes, &Episode) -> Result<EpisodeOutput>,
{
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("gradient accumulation needs at least one episode".into()));
    }
    let mut total: Option<Vec<Tensor>> = None;
    let (mut loss, mut acc, mut clusters) = (0.0, 0.0, 0.0);
    for ep in episodes {
        let (grads, out, l) = episode_gradients(params, ep, loss_fn)?;
        loss += l;
        acc += out.accuracy;
        clusters += out.n_clusters as f64;
        match &mut total {
            None => total = Some(grads),
            Some(t) => {
                for (a, b) in t.iter_mut().zip(&grads) {
                    a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let n = episodes.len() as f64;
    Ok((
        total.expect("nonempty"),
        StepStats {
            loss: loss / n,
            accuracy: acc / n,
            mean_clusters: clusters / n,
        },
    ))
}

/// Sums the gradients of `episodes` and takes one RMSProp step.
pub fn accumulate_and_step<F>(episodes: &[Episode], loss_fn: &F, params: &mut ModelParams, state: &mut OptState) -> Result<StepStats>
where
    F: Fn(&mut Graph, &ParamNodes, &Episode) -> Result<EpisodeOutput>,
{
    let (grads, stats) = accumulate_gradients(params, episodes, loss_fn)?;
    rmsprop_step(&mut params.tensors_mut(), &grads, state)?;
    if let Some(k) = params.tensors().iter().position(|t| !t.is_finite()) {
        return Err(Error::Numeric(format!(
            "parameter tensor {k} became non-finite after step {} (loss {}, lr {})",
            state.step, stats.loss, state.lr
        )));
    }
    Ok(stats)
}

/// Resumable training state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub opt: OptState,
    rng: ChaCha8Rng,
    pub iteration: usize,
    digest: [u8; 32],
}

impl Trainer {
    /// Seeded initialization: embedding weights come from the same stream
    /// that later draws the training episodes.
    pub fn new(config: TrainConfig, input_dim: usize, digest: [u8; 32]) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ModelParams::init(
            input_dim,
            &config.hidden,
            config.output_dim,
            config.sigma_l_init,
            config.sigma_u_init,
            &mut rng,
        )?;
        params.sigma_u_learnable = config.learn_sigma_u;
        let opt = OptState::new(params.tensors(), config.schedule.lr_at(0));
        Ok(Trainer {
            config,
            params,
            opt,
            rng,
            iteration: 0,
            digest,
        })
    }

    pub fn from_checkpoint(config: TrainConfig, ckpt: Checkpoint, digest: [u8; 32]) -> Result<Self> {
        config.validate()?;
        if ckpt.config_digest != digest {
            return Err(Error::Config(vec![
                "checkpoint was written under a different configuration".into(),
            ]));
        }
        Ok(Trainer {
            config,
            params: ckpt.params,
            opt: ckpt.opt,
            rng: ckpt.rng.restore(),
            iteration: ckpt.iteration as usize,
            digest,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            opt: self.opt.clone(),
            rng: RngState::capture(&self.rng),
            iteration: self.iteration as u64,
            config_digest: self.digest,
        }
    }

    /// One update on `accumulation` freshly sampled training episodes.
    pub fn step(&mut self, ds: &Dataset) -> Result<StepStats> {
        let episodes = (0..self.config.accumulation)
            .map(|_| self.config.protocol.sample(ds, Split::Train, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        self.opt.lr = self.config.schedule.lr_at(self.iteration);
        let (kind, imp) = (self.config.kind, self.config.imp.clone());
        let loss_fn = move |g: &mut Graph, n: &ParamNodes, e: &Episode| model::episode_loss(g, n, kind, e, &imp);
        let stats = accumulate_and_step(&episodes, &loss_fn, &mut self.params, &mut self.opt)
            .map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("iteration {}: {m}", self.iteration)),
                other => other,
            })?;
        self.iteration += 1;
        Ok(stats)
    }

    /// Fixed validation episodes on the validation split.
    pub fn validate(&self, ds: &Dataset) -> Result<f64> {
        let cfg = EvalConfig {
            kind: self.config.kind,
            protocol: self.config.protocol.clone(),
            imp: self.config.imp.clone(),
            mode: QueryMode::Distance,
            split: Split::Val,
            n_episodes: self.config.val_episodes,
            seed: self.config.seed ^ VALIDATION_STREAM,
        };
        Ok(evaluate(&self.params, ds, &cfg)?.mean)
    }

    /// Trains until `max_iterations`, calling `on_log` for each log line.
    pub fn run(&mut self, ds: &Dataset, on_log: impl FnMut(&LogEntry) -> Result<()>) -> Result<Vec<LogEntry>> {
        self.run_with_checkpoints(ds, 0, on_log, |_| Ok(()))
    }

    /// Like [`Trainer::run`], also handing a checkpoint to `on_checkpoint`
    /// after every `checkpoint_every` iterations (never when 0).
    pub fn run_with_checkpoints(
        &mut self,
        ds: &Dataset,
        checkpoint_every: usize,
        mut on_log: impl FnMut(&LogEntry) -> Result<()>,
        mut on_checkpoint: impl FnMut(Checkpoint) -> Result<()>,
    ) -> Result<Vec<LogEntry>> {
        let start = Instant::now();
        let mut log = Vec::new();
        let cfg = self.config.clone();
        if cfg.val_every > 0 && self.iteration < cfg.schedule.max_iterations {
            cfg.protocol.sample(ds, Split::Val, &mut ChaCha8Rng::seed_from_u64(0))?;
        }
        while self.iteration < cfg.schedule.max_iterations {
            let lr = cfg.schedule.lr_at(self.iteration);
            let stats = self.step(ds)?;
            let it = self.iteration;
            if checkpoint_every > 0 && it % checkpoint_every == 0 {
                on_checkpoint(self.checkpoint())?;
            }
            let validate_now = cfg.val_every > 0 && it % cfg.val_every == 0;
            let log_now = (cfg.log_every > 0 && it % cfg.log_every == 0) || validate_now;
            if !log_now {
                continue;
            }
            let val_accuracy = if validate_now { Some(self.validate(ds)?) } else { None };
            let entry = LogEntry {
                iteration: it,
                lr,
                loss: stats.loss,
                val_accuracy,
                mean_c: stats.mean_clusters,
                wall_ms: start.elapsed().as_millis() as u64,
            };
            on_log(&entry)?;
            log.push(entry);
        }
        Ok(log)
    }
}

/// Trains a fresh model. Zero iterations return the initial parameters.
pub fn train(config: &TrainConfig, ds: &Dataset) -> Result<(ModelParams, Vec<LogEntry>)> {
    let mut t = Trainer::new(config.clone(), ds.dim(), [0; 32])?;
    let log = t.run(ds, |_| Ok(()))?;
    Ok((t.params, log))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub kind: ModelKind,
    pub protocol: Protocol,
    pub imp: ImpConfig,
    pub mode: QueryMode,
    pub split: Split,
    pub n_episodes: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub accuracy: f64,
    pub n_clusters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub mean: f64,
    pub halfwidth: f64,
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalResult {
    pub fn mean_clusters(&self) -> f64 {
        self.episodes.iter().map(|e| e.n_clusters as f64).sum::<f64>() / self.episodes.len().max(1) as f64
    }
}

/// Scores `n_episodes` episodes drawn from a stream seeded with `seed`.
/// Every scorer sees the same episodes for the same seed.
pub fn evaluate_with<F>(ds: &Dataset, split: Split, protocol: &Protocol, n_episodes: usize, seed: u64, mut score: F) -> Result<EvalResult>
where
    F: FnMut(&Episode) -> Result<EpisodeRecord>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let ep = protocol.sample(ds, split, &mut rng)?;
        episodes.push(score(&ep)?);
    }
    let accs: Vec<f64> = episodes.iter().map(|e| e.accuracy).collect();
    let (mean, halfwidth) = accuracy_ci(&accs)?;
    Ok(EvalResult {
        mean,
        halfwidth,
        episodes,
    })
}

pub fn evaluate(params: &ModelParams, ds: &Dataset, cfg: &EvalConfig) -> Result<EvalResult> {
    if cfg.n_episodes < 2 {
        return Err(Error::Insufficient(format!(
            "a confidence interval needs at least 2 episodes, got {}",
            cfg.n_episodes
        )));
    }
    evaluate_with(ds, cfg.split, &cfg.protocol, cfg.n_episodes, cfg.seed, |ep| {
        let p = model::predict(params, cfg.kind, ep, &cfg.imp, cfg.mode)?;
        Ok(EpisodeRecord {
            accuracy: p.accuracy,
            n_clusters: p.n_clusters,
        })
    })
}
