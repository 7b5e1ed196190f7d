//! Run configuration: a versioned, sectioned `key = value` text format.
//!
//! ```text
//! IMPCFG v1
//! [train]
//! iterations = 2000   # comments run to end of line
//! ```
//!
//! Every key has a default, so a file only lists what it changes. Unknown
//! sections and keys are rejected, and all problems in a file are reported
//! together.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::altmix::CrpConfig;
use crate::episodes::{Protocol, SamplerConfig, Split, SyntheticConfig};
use crate::error::{Error, Result};
use crate::experiments::ClusterEval;
use crate::imp::{Assignment, ImpConfig, LambdaMode, QueryMode};
use crate::model::ModelKind;
use crate::trainer::{config_digest, EvalConfig, Schedule, TrainConfig};

pub const CONFIG_HEADER: &str = "IMPCFG v1";

/// Offset mixed into the run seed for evaluation and clustering streams.
const EVAL_STREAM: u64 = 0x6576_616c_7561_7465;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolKind {
    Supervised,
    SemiSupervised,
    SuperClass,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSection {
    /// Dataset file; empty means generate from `[gen]` with the run seed.
    pub dataset: String,
    /// Split file; empty means draw splits by `split_fractions`.
    pub splits: String,
    /// Label-mask file; empty means draw one when `label_fraction < 1`.
    pub mask: String,
    pub split_fractions: [f64; 3],
    pub label_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub sigma_l: f64,
    pub sigma_u: f64,
    pub learn_sigma_u: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSection {
    pub protocol: ProtocolKind,
    pub way: usize,
    pub shot: usize,
    pub queries_per_class: usize,
    pub unlabeled_per_class: usize,
    pub distractor_classes: usize,
    pub distractor_instances: usize,
    pub n_sub: usize,
    pub queries_per_sub: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSection {
    pub iterations: usize,
    pub lr: f64,
    pub halving_period: usize,
    pub halving_start: usize,
    pub accumulation: usize,
    pub val_every: usize,
    pub val_episodes: usize,
    pub log_every: usize,
    pub checkpoint_every: usize,
    pub resume: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSection {
    pub checkpoint: String,
    pub episodes: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSection {
    pub checkpoint: String,
    pub baseline_checkpoint: String,
    pub n_classes: usize,
    pub per_class: usize,
    pub draws: usize,
    pub split: Split,
    pub lambda: f64,
    pub epsilon: f64,
    pub use_crp_prior: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSection {
    pub points: usize,
    pub low: f64,
    pub high: f64,
    pub lambda_episodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckSection {
    pub way: usize,
    pub shot: usize,
    pub queries_per_class: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub epsilon: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: String,
    pub data: DataSection,
    pub gen: SyntheticConfig,
    pub model: ModelSection,
    pub imp: ImpConfig,
    pub query_mode: QueryMode,
    pub episode: EpisodeSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub cluster: ClusterSection,
    pub sweep: SweepSection,
    pub gradcheck: GradcheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: "out".into(),
            data: DataSection {
                dataset: String::new(),
                splits: String::new(),
                mask: String::new(),
                split_fractions: [0.6, 0.2, 0.2],
                label_fraction: 1.0,
            },
            gen: SyntheticConfig::default(),
            model: ModelSection {
                kind: ModelKind::Imp,
                hidden: vec![64, 64],
                output_dim: 16,
                sigma_l: 5.0,
                sigma_u: 5.0,
                learn_sigma_u: true,
            },
            imp: ImpConfig::default(),
            query_mode: QueryMode::Distance,
            episode: EpisodeSection {
                protocol: ProtocolKind::Supervised,
                way: 5,
                shot: 1,
                queries_per_class: 15,
                unlabeled_per_class: 0,
                distractor_classes: 0,
                distractor_instances: 0,
                n_sub: 4,
                queries_per_sub: 5,
            },
            train: TrainSection {
                iterations: 5000,
                lr: 1e-3,
                halving_period: 1000,
                halving_start: 2000,
                accumulation: 1,
                val_every: 500,
                val_episodes: 100,
                log_every: 100,
                checkpoint_every: 0,
                resume: String::new(),
            },
            eval: EvalSection {
                checkpoint: String::new(),
                episodes: 600,
                split: Split::Test,
            },
            cluster: ClusterSection {
                checkpoint: String::new(),
                baseline_checkpoint: String::new(),
                n_classes: 10,
                per_class: 5,
                draws: 100,
                split: Split::Test,
                lambda: 10.0,
                epsilon: 0.5,
                use_crp_prior: true,
            },
            sweep: SweepSection {
                points: 7,
                low: 0.1,
                high: 10.0,
                lambda_episodes: 100,
            },
            gradcheck: GradcheckSection {
                way: 2,
                shot: 2,
                queries_per_class: 2,
                hidden: vec![8],
                output_dim: 4,
                epsilon: 1e-6,
                tolerance: 1e-4,
            },
        }
    }
}

/// A value that can appear on the right of `key = value`.
trait Value {
    fn parse_into(&mut self, s: &str) -> std::result::Result<(), String>;
    fn render(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
                *self = s.parse().map_err(|_| format!("cannot parse {s:?} as {}", stringify!($t)))?;
                Ok(())
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_value!(usize, u64, f64, bool, String);

impl Value for Vec<usize> {
    fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = if s.is_empty() {
            Vec::new()
        } else {
            s.split(',')
                .map(|p| p.trim().parse().map_err(|_| format!("cannot parse {p:?} as a size")))
                .collect::<std::result::Result<_, _>>()?
        };
        Ok(())
    }
    fn render(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl Value for [f64; 3] {
    fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| format!("cannot parse {p:?} as a number")))
            .collect::<std::result::Result<_, _>>()?;
        *self = parts.try_into().map_err(|_| format!("expected three comma-separated numbers, got {s:?}"))?;
        Ok(())
    }
    fn render(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

macro_rules! enum_value {
    ($t:ty { $($v:expr => $name:literal),* $(,)? }) => {
        impl Value for $t {
            fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
                *self = match s {
                    $($name => $v,)*
                    _ => return Err(format!("expected one of {}, got {s:?}", [$($name),*].join(", "))),
                };
                Ok(())
            }
            fn render(&self) -> String {
                match self {
                    $(x if *x == $v => $name.to_string(),)*
                    _ => unreachable!(),
                }
            }
        }
    };
}

enum_value!(ModelKind {
    ModelKind::Imp => "imp",
    ModelKind::Proto => "proto",
    ModelKind::ProtoSigma => "proto_sigma",
    ModelKind::Neighbors => "neighbors",
});
enum_value!(Assignment { Assignment::Soft => "soft", Assignment::Hard => "hard" });
enum_value!(QueryMode { QueryMode::Distance => "distance", QueryMode::Density => "density" });
enum_value!(Split { Split::Train => "train", Split::Val => "val", Split::Test => "test" });
enum_value!(ProtocolKind {
    ProtocolKind::Supervised => "supervised",
    ProtocolKind::SemiSupervised => "semisupervised",
    ProtocolKind::SuperClass => "superclass",
});

impl Value for LambdaMode {
    fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = if s == "estimated" {
            LambdaMode::Estimated
        } else {
            LambdaMode::Fixed(s.parse().map_err(|_| format!("expected \"estimated\" or a number, got {s:?}"))?)
        };
        Ok(())
    }
    fn render(&self) -> String {
        match self {
            LambdaMode::Estimated => "estimated".into(),
            LambdaMode::Fixed(v) => v.to_string(),
        }
    }
}

/// Section, key and help text of every configuration key, in file order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("run", "seed", "seed for data generation, initialization and episode streams"),
    ("run", "out", "output directory"),
    ("data", "dataset", "dataset file; empty generates one from [gen]"),
    ("data", "splits", "class split file; empty draws splits by split_fractions"),
    ("data", "mask", "label mask file; empty draws one when label_fraction < 1"),
    ("data", "split_fractions", "train,val,test fractions of (super-)classes"),
    ("data", "label_fraction", "fraction of points per class that keep their label"),
    ("gen", "n_classes", "generating classes (super-classes when modes_per_class > 1)"),
    ("gen", "modes_per_class", "Gaussian modes per generating class"),
    ("gen", "input_dim", "input dimension"),
    ("gen", "mode_spread", "standard deviation of mode centers"),
    ("gen", "within_mode_std", "standard deviation of points around their mode"),
    ("gen", "points_per_class", "points per generating class"),
    ("model", "kind", "imp, proto, proto_sigma or neighbors"),
    ("model", "hidden", "comma-separated hidden layer widths"),
    ("model", "output_dim", "embedding dimension"),
    ("model", "sigma_l", "initial labeled cluster variance"),
    ("model", "sigma_u", "initial unlabeled cluster variance"),
    ("model", "learn_sigma_u", "train the unlabeled variance"),
    ("imp", "alpha", "concentration used to estimate lambda and by MAP-DP/EM"),
    ("imp", "lambda", "\"estimated\" or a fixed cluster-creation threshold"),
    ("imp", "clustering_iterations", "soft assignment and mean update rounds"),
    ("imp", "label_constrained", "restrict labeled points to clusters of their class"),
    ("imp", "assignment", "soft or hard cluster assignment"),
    ("imp", "query_mode", "distance or density query classification at evaluation"),
    ("episode", "protocol", "supervised, semisupervised or superclass"),
    ("episode", "way", "classes per episode (super-classes for superclass)"),
    ("episode", "shot", "labeled supports per class"),
    ("episode", "queries_per_class", "queries per class"),
    ("episode", "unlabeled_per_class", "unlabeled supports per class (semisupervised)"),
    ("episode", "distractor_classes", "extra classes contributing unlabeled points (semisupervised)"),
    ("episode", "distractor_instances", "unlabeled points per distractor class"),
    ("episode", "n_sub", "sub-classes per super-class (superclass)"),
    ("episode", "queries_per_sub", "queries per sub-class (superclass)"),
    ("train", "iterations", "parameter updates"),
    ("train", "lr", "initial learning rate"),
    ("train", "halving_period", "iterations between learning-rate halvings"),
    ("train", "halving_start", "iteration of the first halving"),
    ("train", "accumulation", "episodes summed into each update"),
    ("train", "val_every", "validate every N iterations; 0 disables"),
    ("train", "val_episodes", "validation episodes"),
    ("train", "log_every", "log every N iterations; 0 logs only validations"),
    ("train", "checkpoint_every", "write a checkpoint every N iterations; 0 only at the end"),
    ("train", "resume", "checkpoint to continue from; empty starts fresh"),
    ("eval", "checkpoint", "checkpoint to evaluate; empty uses <out>/checkpoint.bin"),
    ("eval", "episodes", "evaluation episodes"),
    ("eval", "split", "train, val or test"),
    ("cluster", "checkpoint", "IMP checkpoint; empty uses <out>/checkpoint.bin"),
    ("cluster", "baseline_checkpoint", "embedding for dp_means, map_dp and em; empty uses checkpoint"),
    ("cluster", "n_classes", "classes per clustering draw"),
    ("cluster", "per_class", "points per class per draw"),
    ("cluster", "draws", "clustering draws"),
    ("cluster", "split", "train, val or test"),
    ("cluster", "lambda", "threshold for IMP and DP-means clustering"),
    ("cluster", "epsilon", "EM new-cluster probability threshold"),
    ("cluster", "use_crp_prior", "keep the cluster-size prior in EM"),
    ("sweep", "points", "lambda grid size"),
    ("sweep", "low", "smallest multiple of |estimated lambda|"),
    ("sweep", "high", "largest multiple of |estimated lambda|"),
    ("sweep", "lambda_episodes", "episodes used to estimate lambda"),
    ("gradcheck", "way", "classes in the check episode"),
    ("gradcheck", "shot", "supports per class"),
    ("gradcheck", "queries_per_class", "queries per class"),
    ("gradcheck", "hidden", "hidden widths of the checked network"),
    ("gradcheck", "output_dim", "embedding dimension of the checked network"),
    ("gradcheck", "epsilon", "finite-difference step"),
    ("gradcheck", "tolerance", "largest accepted relative error"),
];

/// Keys left out of the training digest: they change what is logged or how
/// far a run goes, not the trajectory.
const UNDIGESTED: &[(&str, &str)] = &[
    ("train", "iterations"),
    ("train", "log_every"),
    ("train", "checkpoint_every"),
    ("train", "resume"),
    ("run", "out"),
];

const DIGESTED_SECTIONS: &[&str] = &["run", "data", "gen", "model", "imp", "episode", "train"];

impl RunConfig {
    fn field(&mut self, section: &str, key: &str) -> Option<&mut dyn Value> {
        Some(match (section, key) {
            ("run", "seed") => &mut self.seed,
            ("run", "out") => &mut self.out,
            ("data", "dataset") => &mut self.data.dataset,
            ("data", "splits") => &mut self.data.splits,
            ("data", "mask") => &mut self.data.mask,
            ("data", "split_fractions") => &mut self.data.split_fractions,
            ("data", "label_fraction") => &mut self.data.label_fraction,
            ("gen", "n_classes") => &mut self.gen.n_classes,
            ("gen", "modes_per_class") => &mut self.gen.modes_per_class,
            ("gen", "input_dim") => &mut self.gen.input_dim,
            ("gen", "mode_spread") => &mut self.gen.mode_spread,
            ("gen", "within_mode_std") => &mut self.gen.within_mode_std,
            ("gen", "points_per_class") => &mut self.gen.points_per_class,
            ("model", "kind") => &mut self.model.kind,
            ("model", "hidden") => &mut self.model.hidden,
            ("model", "output_dim") => &mut self.model.output_dim,
            ("model", "sigma_l") => &mut self.model.sigma_l,
            ("model", "sigma_u") => &mut self.model.sigma_u,
            ("model", "learn_sigma_u") => &mut self.model.learn_sigma_u,
            ("imp", "alpha") => &mut self.imp.alpha,
            ("imp", "lambda") => &mut self.imp.lambda_mode,
            ("imp", "clustering_iterations") => &mut self.imp.clustering_iterations,
            ("imp", "label_constrained") => &mut self.imp.label_constrained,
            ("imp", "assignment") => &mut self.imp.assignment,
            ("imp", "query_mode") => &mut self.query_mode,
            ("episode", "protocol") => &mut self.episode.protocol,
            ("episode", "way") => &mut self.episode.way,
            ("episode", "shot") => &mut self.episode.shot,
            ("episode", "queries_per_class") => &mut self.episode.queries_per_class,
            ("episode", "unlabeled_per_class") => &mut self.episode.unlabeled_per_class,
            ("episode", "distractor_classes") => &mut self.episode.distractor_classes,
            ("episode", "distractor_instances") => &mut self.episode.distractor_instances,
            ("episode", "n_sub") => &mut self.episode.n_sub,
            ("episode", "queries_per_sub") => &mut self.episode.queries_per_sub,
            ("train", "iterations") => &mut self.train.iterations,
            ("train", "lr") => &mut self.train.lr,
            ("train", "halving_period") => &mut self.train.halving_period,
            ("train", "halving_start") => &mut self.train.halving_start,
            ("train", "accumulation") => &mut self.train.accumulation,
            ("train", "val_every") => &mut self.train.val_every,
            ("train", "val_episodes") => &mut self.train.val_episodes,
            ("train", "log_every") => &mut self.train.log_every,
            ("train", "checkpoint_every") => &mut self.train.checkpoint_every,
            ("train", "resume") => &mut self.train.resume,
            ("eval", "checkpoint") => &mut self.eval.checkpoint,
            ("eval", "episodes") => &mut self.eval.episodes,
            ("eval", "split") => &mut self.eval.split,
            ("cluster", "checkpoint") => &mut self.cluster.checkpoint,
            ("cluster", "baseline_checkpoint") => &mut self.cluster.baseline_checkpoint,
            ("cluster", "n_classes") => &mut self.cluster.n_classes,
            ("cluster", "per_class") => &mut self.cluster.per_class,
            ("cluster", "draws") => &mut self.cluster.draws,
            ("cluster", "split") => &mut self.cluster.split,
            ("cluster", "lambda") => &mut self.cluster.lambda,
            ("cluster", "epsilon") => &mut self.cluster.epsilon,
            ("cluster", "use_crp_prior") => &mut self.cluster.use_crp_prior,
            ("sweep", "points") => &mut self.sweep.points,
            ("sweep", "low") => &mut self.sweep.low,
            ("sweep", "high") => &mut self.sweep.high,
            ("sweep", "lambda_episodes") => &mut self.sweep.lambda_episodes,
            ("gradcheck", "way") => &mut self.gradcheck.way,
            ("gradcheck", "shot") => &mut self.gradcheck.shot,
            ("gradcheck", "queries_per_class") => &mut self.gradcheck.queries_per_class,
            ("gradcheck", "hidden") => &mut self.gradcheck.hidden,
            ("gradcheck", "output_dim") => &mut self.gradcheck.output_dim,
            ("gradcheck", "epsilon") => &mut self.gradcheck.epsilon,
            ("gradcheck", "tolerance") => &mut self.gradcheck.tolerance,
            _ => return None,
        })
    }

    /// Current value of `section.key` in file syntax.
    pub fn get(&self, section: &str, key: &str) -> Option<String> {
        self.clone().field(section, key).map(|v| v.render())
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match self.field(section, key) {
            None => Err(Error::Config(vec![format!("unknown key {section}.{key}")])),
            Some(f) => f.parse_into(value).map_err(|m| Error::Config(vec![format!("{section}.{key}: {m}")])),
        }
    }

    /// Parses a configuration file and validates the result. Every syntax
    /// error, unknown key and violated constraint is reported at once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == CONFIG_HEADER => {}
            _ => errors.push(format!("line 1: expected header {CONFIG_HEADER:?}")),
        }
        let mut section: Option<String> = None;
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in lines {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let n = i + 1;
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if KEYS.iter().any(|(s, _, _)| *s == name) {
                    section = Some(name.to_string());
                } else {
                    errors.push(format!("line {n}: unknown section [{name}]"));
                    section = None;
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {n}: expected key = value"));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(sec) = section.as_deref() else {
                errors.push(format!("line {n}: key {key} outside a known section"));
                continue;
            };
            if !seen.insert((sec.to_string(), key.to_string())) {
                errors.push(format!("line {n}: duplicate key {sec}.{key}"));
                continue;
            }
            match cfg.field(sec, key) {
                None => errors.push(format!("line {n}: unknown key {sec}.{key}")),
                Some(f) => {
                    if let Err(m) = f.parse_into(value) {
                        errors.push(format!("line {n}: {sec}.{key}: {m}"));
                    }
                }
            }
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::parse(&text)
    }

    fn render_sections(&self, keep: impl Fn(&str, &str) -> bool) -> String {
        let mut out = format!("{CONFIG_HEADER}\n");
        let mut current = "";
        for &(sec, key, _) in KEYS {
            if !keep(sec, key) {
                continue;
            }
            if sec != current {
                let _ = write!(out, "\n[{sec}]\n");
                current = sec;
            }
            let _ = writeln!(out, "{key} = {}", self.get(sec, key).expect("listed key"));
        }
        out
    }

    /// Canonical text listing every key; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        self.render_sections(|_, _| true)
    }

    /// Digest of the settings that determine a training trajectory, stored in
    /// checkpoints so a resume under a different setup is refused.
    pub fn train_digest(&self) -> [u8; 32] {
        config_digest(&self.render_sections(|s, k| {
            DIGESTED_SECTIONS.contains(&s) && !UNDIGESTED.contains(&(s, k))
        }))
    }

    /// Every violated constraint, as one error.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                e.push(msg.to_string());
            }
        };
        let d = &self.data;
        need(
            d.split_fractions.iter().all(|f| *f >= 0.0) && d.split_fractions.iter().sum::<f64>() > 0.0,
            "data.split_fractions must be nonnegative with a positive sum",
        );
        need(d.label_fraction > 0.0 && d.label_fraction <= 1.0, "data.label_fraction must be in (0, 1]");
        let g = &self.gen;
        need(g.n_classes > 0, "gen.n_classes must be positive");
        need(g.modes_per_class > 0, "gen.modes_per_class must be positive");
        need(g.input_dim > 0, "gen.input_dim must be positive");
        need(g.mode_spread >= 0.0 && g.mode_spread.is_finite(), "gen.mode_spread must be nonnegative");
        need(g.within_mode_std > 0.0 && g.within_mode_std.is_finite(), "gen.within_mode_std must be positive");
        need(g.points_per_class >= g.modes_per_class, "gen.points_per_class must be at least gen.modes_per_class");
        let m = &self.model;
        need(m.output_dim > 0, "model.output_dim must be positive");
        need(!m.hidden.contains(&0), "model.hidden widths must be positive");
        need(m.sigma_l > 0.0 && m.sigma_l.is_finite(), "model.sigma_l must be positive");
        need(m.sigma_u > 0.0 && m.sigma_u.is_finite(), "model.sigma_u must be positive");
        need(self.imp.alpha > 0.0 && self.imp.alpha.is_finite(), "imp.alpha must be positive");
        need(
            !matches!(self.imp.lambda_mode, LambdaMode::Fixed(l) if l.is_nan()),
            "imp.lambda must be a number or \"estimated\"",
        );
        need(self.imp.clustering_iterations > 0, "imp.clustering_iterations must be at least 1");
        let ep = &self.episode;
        need(ep.way >= 2, "episode.way must be at least 2");
        need(ep.shot > 0, "episode.shot must be positive");
        need(ep.queries_per_class > 0, "episode.queries_per_class must be positive");
        need(ep.n_sub > 0, "episode.n_sub must be positive");
        need(ep.queries_per_sub > 0, "episode.queries_per_sub must be positive");
        need(
            ep.protocol != ProtocolKind::SemiSupervised || d.label_fraction < 1.0 || !d.mask.is_empty(),
            "semisupervised episodes need data.label_fraction < 1 or a data.mask file",
        );
        let t = &self.train;
        need(t.lr > 0.0 && t.lr.is_finite(), "train.lr must be positive");
        need(t.halving_period > 0, "train.halving_period must be positive");
        need(t.accumulation > 0, "train.accumulation must be positive");
        need(t.val_every == 0 || t.val_episodes >= 2, "train.val_episodes must be at least 2 when validating");
        need(self.eval.episodes >= 2, "eval.episodes must be at least 2");
        let c = &self.cluster;
        need(c.n_classes > 0, "cluster.n_classes must be positive");
        need(c.per_class > 0, "cluster.per_class must be positive");
        need(c.draws > 0, "cluster.draws must be positive");
        need(c.lambda.is_finite(), "cluster.lambda must be finite");
        need(c.epsilon > 0.0, "cluster.epsilon must be positive");
        let s = &self.sweep;
        need(s.points >= 2, "sweep.points must be at least 2");
        need(s.low > 0.0 && s.high > s.low, "sweep needs 0 < low < high");
        need(s.lambda_episodes > 0, "sweep.lambda_episodes must be positive");
        let gc = &self.gradcheck;
        need(gc.way >= 2, "gradcheck.way must be at least 2");
        need(gc.shot > 0 && gc.queries_per_class > 0, "gradcheck.shot and queries_per_class must be positive");
        need(gc.output_dim > 0 && !gc.hidden.contains(&0), "gradcheck network sizes must be positive");
        need(gc.epsilon > 0.0 && gc.tolerance > 0.0, "gradcheck.epsilon and tolerance must be positive");
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e))
        }
    }

    pub fn protocol(&self) -> Protocol {
        let ep = &self.episode;
        let sampler = SamplerConfig {
            way: ep.way,
            shot: ep.shot,
            queries_per_class: ep.queries_per_class,
            unlabeled_per_class: ep.unlabeled_per_class,
            distractor_classes: ep.distractor_classes,
            distractor_instances: ep.distractor_instances,
        };
        match ep.protocol {
            ProtocolKind::Supervised => Protocol::Supervised(sampler),
            ProtocolKind::SemiSupervised => Protocol::SemiSupervised(sampler),
            ProtocolKind::SuperClass => Protocol::SuperClass {
                n_super: ep.way,
                n_sub: ep.n_sub,
                queries_per_sub: ep.queries_per_sub,
            },
        }
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.seed,
            ..self.gen.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            kind: self.model.kind,
            protocol: self.protocol(),
            imp: self.imp.clone(),
            schedule: Schedule {
                initial_lr: t.lr,
                halving_period: t.halving_period,
                halving_start: t.halving_start,
                max_iterations: t.iterations,
            },
            accumulation: t.accumulation,
            hidden: self.model.hidden.clone(),
            output_dim: self.model.output_dim,
            sigma_l_init: self.model.sigma_l,
            sigma_u_init: self.model.sigma_u,
            learn_sigma_u: self.model.learn_sigma_u,
            val_every: t.val_every,
            val_episodes: t.val_episodes,
            log_every: t.log_every,
            seed: self.seed,
        }
    }

    /// Seed of evaluation and clustering streams, distinct from the training stream.
    pub fn eval_seed(&self) -> u64 {
        self.seed ^ EVAL_STREAM
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            kind: self.model.kind,
            protocol: self.protocol(),
            imp: self.imp.clone(),
            mode: self.query_mode,
            split: self.eval.split,
            n_episodes: self.eval.episodes,
            seed: self.eval_seed(),
        }
    }

    pub fn crp(&self) -> CrpConfig {
        CrpConfig {
            alpha: self.imp.alpha,
            epsilon: self.cluster.epsilon,
            use_crp_prior: self.cluster.use_crp_prior,
            ..Default::default()
        }
    }

    pub fn cluster_eval(&self) -> ClusterEval {
        let c = &self.cluster;
        ClusterEval {
            split: c.split,
            n_classes: c.n_classes,
            per_class: c.per_class,
            draws: c.draws,
            seed: self.eval_seed(),
            lambda: c.lambda,
            crp: self.crp(),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out)
    }

    /// `path`, or `<out>/checkpoint.bin` when empty.
    pub fn checkpoint_or_default(&self, path: &str) -> PathBuf {
        if path.is_empty() {
            self.out_dir().join("checkpoint.bin")
        } else {
            PathBuf::from(path)
        }
    }

    /// Help text listing every key with its default.
    pub fn key_help() -> String {
        let defaults = RunConfig::default();
        let mut out = String::new();
        let mut current = "";
        for &(sec, key, doc) in KEYS {
            if sec != current {
                let _ = writeln!(out, "[{sec}]");
                current = sec;
            }
            let _ = writeln!(out, "  {key} = {}    {doc}", defaults.get(sec, key).expect("listed key"));
        }
        out
    }
}
