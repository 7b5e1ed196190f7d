//! Commands behind the `imp` binary. Each command is a function of the run
//! configuration and its input files; outputs go under the configured
//! output directory and are replaced atomically.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use imp_core::config::RunConfig;
use imp_core::diagnostics;
use imp_core::episodes::io::{format_dataset, format_mask, format_splits, load_mask, load_splits};
use imp_core::episodes::{gen_synthetic, load_dataset, sample_unsupervised, Dataset, Protocol, SamplerConfig, Split};
use imp_core::experiments::{self, ClusterMethod};
use imp_core::imp::{ImpConfig, LambdaMode};
use imp_core::model::{ModelKind, ModelParams};
use imp_core::trainer::{evaluate, Checkpoint, TrainConfig, Trainer};
use imp_core::{Error, Result};

/// Where command outputs go and whether existing files may be replaced.
#[derive(Clone, Debug)]
pub struct Output {
    pub dir: PathBuf,
    pub force: bool,
}

impl Output {
    pub fn new(cfg: &RunConfig, force: bool) -> Self {
        Output {
            dir: cfg.out_dir(),
            force,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Fails before any work is done if an output exists and `--force` is off.
    pub fn check_free(&self, names: &[&str]) -> Result<()> {
        if self.force {
            return Ok(());
        }
        let taken: Vec<String> = names
            .iter()
            .map(|n| self.path(n))
            .filter(|p| p.exists())
            .map(|p| format!("{} exists (use --force to overwrite)", p.display()))
            .collect();
        if taken.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(taken))
        }
    }

    /// Writes through a temporary file in the same directory and renames it
    /// into place.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path(name);
        if path.exists() && !self.force {
            return Err(Error::Config(vec![format!(
                "{} exists (use --force to overwrite)",
                path.display()
            )]));
        }
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

/// The dataset described by `[data]`, generating one from `[gen]` when no
/// file is given.
pub fn prepare_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.data;
    let mut ds = if d.dataset.is_empty() {
        gen_synthetic(&cfg.synthetic())?
    } else {
        load_dataset(Path::new(&d.dataset))?
    };
    if d.splits.is_empty() {
        ds.assign_splits(d.split_fractions, cfg.seed)?;
    } else {
        load_splits(Path::new(&d.splits), &mut ds)?;
    }
    if !d.mask.is_empty() {
        load_mask(Path::new(&d.mask), &mut ds)?;
    } else if d.label_fraction < 1.0 {
        ds.draw_label_mask(d.label_fraction, cfg.seed)?;
    }
    Ok(ds)
}

fn load_params(path: &Path, cfg: &RunConfig) -> Result<ModelParams> {
    let ckpt = Checkpoint::load(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot load checkpoint {}: {e}", path.display())))?;
    if ckpt.config_digest != cfg.train_digest() {
        warn!("{} was trained under a different configuration", path.display());
    }
    Ok(ckpt.params)
}

/// Writes `dataset.txt`, `splits.txt` and, when labels are partial, `mask.txt`.
pub fn cmd_gen(cfg: &RunConfig, out: &Output) -> Result<Vec<PathBuf>> {
    let mut names = vec!["dataset.txt", "splits.txt"];
    if cfg.data.label_fraction < 1.0 {
        names.push("mask.txt");
    }
    out.check_free(&names)?;
    let mut ds = gen_synthetic(&cfg.synthetic())?;
    ds.assign_splits(cfg.data.split_fractions, cfg.seed)?;
    if cfg.data.label_fraction < 1.0 {
        ds.draw_label_mask(cfg.data.label_fraction, cfg.seed)?;
    }
    let mut written = vec![
        out.write("dataset.txt", format_dataset(&ds).as_bytes())?,
        out.write("splits.txt", format_splits(&ds).as_bytes())?,
    ];
    if let Some(mask) = ds.label_mask() {
        written.push(out.write("mask.txt", format_mask(mask).as_bytes())?);
    }
    info!("generated {} points in {} classes", ds.len(), ds.n_classes());
    Ok(written)
}

fn train_model(cfg: &RunConfig, tc: TrainConfig, ds: &Dataset) -> Result<ModelParams> {
    let mut t = Trainer::new(tc, ds.dim(), cfg.train_digest())?;
    t.run(ds, |e| {
        info!("{}", e.to_json());
        Ok(())
    })?;
    Ok(t.params)
}

/// Trains the configured model. Writes `checkpoint.bin`, the JSON-lines log
/// `train.jsonl`, the timing-free table `train.csv` and the canonical
/// `config.txt`.
pub fn cmd_train(cfg: &RunConfig, out: &Output) -> Result<()> {
    out.check_free(&["checkpoint.bin", "train.jsonl", "train.csv", "config.txt"])?;
    let ds = prepare_dataset(cfg)?;
    let tc = cfg.train_config();
    let digest = cfg.train_digest();
    let mut trainer = if cfg.train.resume.is_empty() {
        Trainer::new(tc, ds.dim(), digest)?
    } else {
        let ckpt = Checkpoint::load(Path::new(&cfg.train.resume))?;
        Trainer::from_checkpoint(tc, ckpt, digest)?
    };
    let start = trainer.iteration;
    let forced = Output {
        force: true,
        ..out.clone()
    };
    let log = trainer.run_with_checkpoints(
        &ds,
        cfg.train.checkpoint_every,
        |e| {
            info!("{}", e.to_json());
            Ok(())
        },
        |c| {
            forced.write("checkpoint.bin", &c.to_bytes())?;
            Ok(())
        },
    )?;
    let mut jsonl = String::new();
    let mut csv = String::from("iteration,lr,loss,val_accuracy,mean_C\n");
    for e in &log {
        jsonl.push_str(&e.to_json());
        jsonl.push('\n');
        let val = e.val_accuracy.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{},{}", e.iteration, e.lr, e.loss, val, e.mean_c);
    }
    forced.write("checkpoint.bin", &trainer.checkpoint().to_bytes())?;
    out.write("train.jsonl", jsonl.as_bytes())?;
    out.write("train.csv", csv.as_bytes())?;
    out.write("config.txt", cfg.to_text().as_bytes())?;
    info!(
        "trained {} from iteration {start} to {}",
        cfg.model.kind.as_str(),
        trainer.iteration
    );
    Ok(())
}

/// Evaluates a checkpoint. Writes the summary `eval.csv` and per-episode
/// `eval_episodes.csv`.
pub fn cmd_eval(cfg: &RunConfig, out: &Output) -> Result<(f64, f64)> {
    out.check_free(&["eval.csv", "eval_episodes.csv"])?;
    let ds = prepare_dataset(cfg)?;
    let params = load_params(&cfg.checkpoint_or_default(&cfg.eval.checkpoint), cfg)?;
    let ec = cfg.eval_config();
    let r = evaluate(&params, &ds, &ec)?;
    let summary = format!(
        "model,protocol,split,episodes,accuracy,halfwidth,mean_C\n{},{},{},{},{},{},{}\n",
        ec.kind.as_str(),
        ec.protocol.name(),
        ec.split.as_str(),
        ec.n_episodes,
        r.mean,
        r.halfwidth,
        r.mean_clusters()
    );
    let mut per = String::from("episode,accuracy,n_clusters\n");
    for (i, e) in r.episodes.iter().enumerate() {
        let _ = writeln!(per, "{i},{},{}", e.accuracy, e.n_clusters);
    }
    out.write("eval.csv", summary.as_bytes())?;
    out.write("eval_episodes.csv", per.as_bytes())?;
    info!("accuracy {:.4} +/- {:.4}", r.mean, r.halfwidth);
    Ok((r.mean, r.halfwidth))
}

/// Unsupervised clustering with every method. Writes the metric table
/// `cluster.csv` and the assignments of the first draw in
/// `cluster_assignments.csv`.
pub fn cmd_cluster(cfg: &RunConfig, out: &Output) -> Result<()> {
    out.check_free(&["cluster.csv", "cluster_assignments.csv"])?;
    let ds = prepare_dataset(cfg)?;
    let imp_path = cfg.checkpoint_or_default(&cfg.cluster.checkpoint);
    let imp_params = load_params(&imp_path, cfg)?;
    let base_params = if cfg.cluster.baseline_checkpoint.is_empty() {
        imp_params.clone()
    } else {
        load_params(Path::new(&cfg.cluster.baseline_checkpoint), cfg)?
    };
    let ce = cfg.cluster_eval();
    let params_for = |m: ClusterMethod| if m == ClusterMethod::Imp { &imp_params } else { &base_params };

    let mut table = String::from("method,lambda,purity,nmi,ami,mean_C\n");
    for m in ClusterMethod::ALL {
        let s = experiments::evaluate_clustering(params_for(m), &ds, m, &ce)?;
        let lambda = match m {
            ClusterMethod::Imp | ClusterMethod::DpMeans => ce.lambda.to_string(),
            _ => String::new(),
        };
        let _ = writeln!(table, "{},{lambda},{},{},{},{}", m.as_str(), s.purity, s.nmi, s.ami, s.mean_clusters);
        info!("{}: purity {:.4} nmi {:.4} ami {:.4}", m.as_str(), s.purity, s.nmi, s.ami);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(ce.seed);
    let (x, y) = sample_unsupervised(&ds, ce.split, ce.n_classes, ce.per_class, &mut rng)?;
    let columns = ClusterMethod::ALL
        .iter()
        .map(|&m| experiments::cluster_points(params_for(m), m, &x, ce.lambda, &ce.crp))
        .collect::<Result<Vec<_>>>()?;
    let mut assign = String::from("point,class");
    for m in ClusterMethod::ALL {
        assign.push(',');
        assign.push_str(m.as_str());
    }
    assign.push('\n');
    for (i, c) in y.iter().enumerate() {
        let _ = write!(assign, "{i},{c}");
        for col in &columns {
            let _ = write!(assign, ",{}", col[i]);
        }
        assign.push('\n');
    }
    out.write("cluster.csv", table.as_bytes())?;
    out.write("cluster_assignments.csv", assign.as_bytes())?;
    Ok(())
}

/// λ sweep: IMP trained end-to-end at each grid value against DP-means on a
/// frozen prototype embedding. The grid is log-spaced multiples of the
/// magnitude of the mean estimated λ of an IMP model trained with estimated
/// λ. Writes `sweep_lambda.csv` with one row per (λ, method).
pub fn cmd_sweep_lambda(cfg: &RunConfig, out: &Output) -> Result<Vec<(f64, String, f64)>> {
    out.check_free(&["sweep_lambda.csv"])?;
    let ds = prepare_dataset(cfg)?;
    let base = cfg.train_config();
    let protocol = cfg.protocol();
    let (split, n, seed) = (cfg.eval.split, cfg.eval.episodes, cfg.eval_seed());

    let estimated = ImpConfig {
        lambda_mode: LambdaMode::Estimated,
        ..cfg.imp.clone()
    };
    let imp_ref = train_model(cfg, TrainConfig { kind: ModelKind::Imp, imp: estimated.clone(), ..base.clone() }, &ds)?;
    let lambda_hat = experiments::mean_estimated_lambda(&imp_ref, &ds, split, &protocol, cfg.sweep.lambda_episodes, seed, &estimated)?;
    info!("mean estimated lambda {lambda_hat}");
    let scale = if lambda_hat.abs() > 0.0 { lambda_hat.abs() } else { 1.0 };
    let grid = experiments::lambda_grid(scale, cfg.sweep.points, cfg.sweep.low, cfg.sweep.high)?;
    let proto = train_model(cfg, TrainConfig { kind: ModelKind::Proto, ..base.clone() }, &ds)?;

    let mut rows = Vec::new();
    let mut csv = String::from("lambda,method,accuracy,halfwidth,mean_C\n");
    for &lambda in &grid {
        let imp_cfg = ImpConfig {
            lambda_mode: LambdaMode::Fixed(lambda),
            ..cfg.imp.clone()
        };
        let params = train_model(cfg, TrainConfig { kind: ModelKind::Imp, imp: imp_cfg.clone(), ..base.clone() }, &ds)?;
        let ec = imp_core::trainer::EvalConfig {
            kind: ModelKind::Imp,
            imp: imp_cfg,
            ..cfg.eval_config()
        };
        let a = evaluate(&params, &ds, &ec)?;
        let b = experiments::evaluate_dp_means(&proto, &ds, split, &protocol, n, seed, lambda)?;
        for (method, r) in [("imp", &a), ("dp_means", &b)] {
            let _ = writeln!(csv, "{lambda},{method},{},{},{}", r.mean, r.halfwidth, r.mean_clusters());
            rows.push((lambda, method.to_string(), r.mean));
        }
        info!("lambda {lambda:.4}: imp {:.4} dp_means {:.4}", a.mean, b.mean);
    }
    out.write("sweep_lambda.csv", csv.as_bytes())?;
    Ok(rows)
}

/// Finite-difference check of every graph operation and of each model's
/// loss on a toy episode. Writes `gradcheck.csv`; fails with a numeric
/// error when any check exceeds the tolerance.
pub fn cmd_gradcheck(cfg: &RunConfig, out: &Output) -> Result<Vec<diagnostics::CheckResult>> {
    out.check_free(&["gradcheck.csv"])?;
    let gc = &cfg.gradcheck;
    let mut results = diagnostics::check_ops(cfg.seed, gc.epsilon, gc.tolerance)?;

    let ds = prepare_dataset(cfg)?;
    let protocol = Protocol::Supervised(SamplerConfig::supervised(gc.way, gc.shot, gc.queries_per_class));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let episode = protocol.sample(&ds, Split::Train, &mut rng)?;
    let params = ModelParams::init(ds.dim(), &gc.hidden, gc.output_dim, cfg.model.sigma_l, cfg.model.sigma_u, &mut rng)?;
    for kind in [ModelKind::Imp, ModelKind::Proto, ModelKind::ProtoSigma, ModelKind::Neighbors] {
        results.push(diagnostics::CheckResult {
            name: format!("episode_{}", kind.as_str()),
            report: diagnostics::check_episode(&params, kind, &episode, &cfg.imp, gc.epsilon, gc.tolerance)?,
        });
    }

    let mut csv = String::from("check,max_rel_error,max_abs_error,checked,passed\n");
    for r in &results {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.name, r.report.max_rel_error, r.report.max_abs_error, r.report.checked, r.report.passed
        );
    }
    out.write("gradcheck.csv", csv.as_bytes())?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.report.passed).map(|r| r.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(Error::Numeric(format!("gradient check failed for {}", failed.join(", "))));
    }
    Ok(results)
}
