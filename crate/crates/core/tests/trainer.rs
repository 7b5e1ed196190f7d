use std::cell::Cell;

use imp_core::autodiff::{Graph, Tensor};
use imp_core::episodes::{gen_synthetic, Dataset, Episode, Protocol, SamplerConfig, Split, SyntheticConfig};
use imp_core::imp::{ImpConfig, QueryMode};
use imp_core::model::{episode_loss, EpisodeOutput, ModelKind, ModelParams, ParamNodes};
use imp_core::protonets::EmbeddingParams;
use imp_core::trainer::{
    accumulate_gradients, episode_gradients, evaluate, train, Checkpoint, EvalConfig, LogEntry, Schedule,
    TrainConfig, Trainer, CHECKPOINT_TAG,
};
use imp_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset(modes: usize, std: f64) -> Dataset {
    let mut ds = gen_synthetic(&SyntheticConfig {
        n_classes: 30,
        modes_per_class: modes,
        input_dim: 2,
        within_mode_std: std,
        points_per_class: 40 * modes,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    ds.assign_splits([0.6, 0.2, 0.2], 5).unwrap();
    ds
}

fn small(kind: ModelKind, iterations: usize) -> TrainConfig {
    TrainConfig {
        kind,
        protocol: Protocol::Supervised(SamplerConfig::supervised(5, 1, 5)),
        schedule: Schedule {
            max_iterations: iterations,
            halving_period: 10,
            halving_start: 20,
            ..Default::default()
        },
        hidden: vec![16],
        output_dim: 8,
        val_every: 10,
        val_episodes: 10,
        log_every: 5,
        seed: 21,
        ..Default::default()
    }
}

fn untimed(log: &[LogEntry]) -> Vec<LogEntry> {
    log.iter().map(LogEntry::without_timing).collect()
}

#[test]
fn same_seed_same_run() {
    let ds = dataset(2, 0.5);
    for kind in [ModelKind::Imp, ModelKind::Proto, ModelKind::ProtoSigma, ModelKind::Neighbors] {
        let (pa, la) = train(&small(kind, 30), &ds).unwrap();
        let (pb, lb) = train(&small(kind, 30), &ds).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(untimed(&la), untimed(&lb));
        let text_a: Vec<String> = untimed(&la).iter().map(LogEntry::to_json).collect();
        let text_b: Vec<String> = untimed(&lb).iter().map(LogEntry::to_json).collect();
        assert_eq!(text_a, text_b);
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let ds = dataset(2, 0.5);
    let cfg = TrainConfig {
        accumulation: 2,
        ..small(ModelKind::Imp, 40)
    };
    let digest = [7; 32];
    let mut full = Trainer::new(cfg.clone(), ds.dim(), digest).unwrap();
    let full_log = full.run(&ds, |_| Ok(())).unwrap();

    for stop in [1, 13, 20, 39] {
        let head = TrainConfig {
            schedule: Schedule {
                max_iterations: stop,
                ..cfg.schedule.clone()
            },
            ..cfg.clone()
        };
        let mut first = Trainer::new(head, ds.dim(), digest).unwrap();
        let mut log = first.run(&ds, |_| Ok(())).unwrap();
        let bytes = first.checkpoint().to_bytes();
        assert!(bytes.starts_with(CHECKPOINT_TAG));
        let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
        let mut second = Trainer::from_checkpoint(cfg.clone(), ckpt, digest).unwrap();
        log.extend(second.run(&ds, |_| Ok(())).unwrap());
        assert_eq!(untimed(&log), untimed(&full_log), "stop at {stop}");
        assert_eq!(second.params, full.params);
        assert_eq!(second.opt, full.opt);
    }
}

#[test]
fn periodic_checkpoints_resume_exactly() {
    let ds = dataset(1, 0.5);
    let cfg = small(ModelKind::ProtoSigma, 25);
    let mut t = Trainer::new(cfg.clone(), ds.dim(), [0; 32]).unwrap();
    let mut saved = Vec::new();
    t.run_with_checkpoints(&ds, 10, |_| Ok(()), |c| {
        saved.push(c);
        Ok(())
    })
    .unwrap();
    assert_eq!(saved.iter().map(|c| c.iteration).collect::<Vec<_>>(), [10, 20]);
    let mut resumed = Trainer::from_checkpoint(cfg, saved[0].clone(), [0; 32]).unwrap();
    resumed.run(&ds, |_| Ok(())).unwrap();
    assert_eq!(resumed.params, t.params);
}

#[test]
fn checkpoint_rejects_other_configuration() {
    let ds = dataset(1, 0.5);
    let t = Trainer::new(small(ModelKind::Proto, 0), ds.dim(), [1; 32]).unwrap();
    let err = Trainer::from_checkpoint(small(ModelKind::Proto, 5), t.checkpoint(), [2; 32]).unwrap_err();
    assert_eq!(err.kind(), imp_core::ErrorKind::Config);
    let mut bytes = t.checkpoint().to_bytes();
    bytes[0] ^= 1;
    assert!(Checkpoint::from_bytes(&bytes).is_err());
    assert!(Checkpoint::from_bytes(&t.checkpoint().to_bytes()[..20]).is_err());
}

#[test]
fn zero_iterations_return_initial_parameters() {
    let ds = dataset(1, 0.5);
    let cfg = small(ModelKind::Imp, 0);
    let (params, log) = train(&cfg, &ds).unwrap();
    assert!(log.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fresh = ModelParams::init(ds.dim(), &cfg.hidden, cfg.output_dim, 5.0, 5.0, &mut rng).unwrap();
    assert_eq!(params, fresh);
}

fn eval_cfg(kind: ModelKind, n: usize) -> EvalConfig {
    EvalConfig {
        kind,
        protocol: Protocol::Supervised(SamplerConfig::supervised(5, 1, 15)),
        imp: ImpConfig::default(),
        mode: QueryMode::Distance,
        split: Split::Test,
        n_episodes: n,
        seed: 99,
    }
}

#[test]
fn untrained_model_is_near_chance() {
    // every class has the same distribution, so chance is the best possible
    let mut ds = gen_synthetic(&SyntheticConfig {
        n_classes: 20,
        modes_per_class: 1,
        mode_spread: 0.0,
        within_mode_std: 1.0,
        seed: 6,
        ..Default::default()
    })
    .unwrap();
    ds.set_all_splits(Split::Test);
    let params = ModelParams::init(2, &[16], 8, 5.0, 5.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for kind in [ModelKind::Imp, ModelKind::Proto] {
        let r = evaluate(&params, &ds, &eval_cfg(kind, 600)).unwrap();
        assert!((0.1..=0.35).contains(&r.mean), "{kind:?} accuracy {}", r.mean);
        assert_eq!(r, evaluate(&params, &ds, &eval_cfg(kind, 600)).unwrap());
    }
}

#[test]
fn single_episode_evaluation_is_an_error() {
    let ds = dataset(1, 0.5);
    let params = ModelParams::init(2, &[4], 2, 1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(evaluate(&params, &ds, &eval_cfg(ModelKind::Imp, 1)).is_err());
}

#[test]
fn omniglot_style_schedule_boundary() {
    let s = Schedule {
        initial_lr: 1e-3,
        halving_period: 2000,
        halving_start: 4000,
        max_iterations: 160_000,
    };
    assert_eq!(s.lr_at(3999), 1e-3);
    assert_eq!(s.lr_at(4000), 0.5e-3);
}

#[test]
fn accumulation_counts_sixteen_times_the_gradient_terms() {
    let ds = dataset(1, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let protocol = Protocol::Supervised(SamplerConfig::supervised(5, 1, 5));
    let episodes: Vec<Episode> = (0..16).map(|_| protocol.sample(&ds, Split::Train, &mut rng).unwrap()).collect();
    let params = ModelParams::init(2, &[8], 4, 5.0, 5.0, &mut rng).unwrap();
    let terms = Cell::new(0usize);
    let counting = |g: &mut Graph, n: &ParamNodes, e: &Episode| -> Result<EpisodeOutput> {
        let out = episode_loss(g, n, ModelKind::Imp, e, &ImpConfig::default())?;
        terms.set(terms.get() + out.predictions.len() * e.way);
        Ok(out)
    };
    let (one, _) = accumulate_gradients(&params, &episodes[..1], &counting).unwrap();
    let single = terms.replace(0);
    let (sum, _) = accumulate_gradients(&params, &episodes, &counting).unwrap();
    assert_eq!(single, 5 * 5 * 5);
    assert_eq!(terms.get(), 16 * single);

    let (first, _, _) = episode_gradients(&params, &episodes[0], &counting).unwrap();
    assert_eq!(one, first);
    let mut manual = first;
    for ep in &episodes[1..] {
        let (g, _, _) = episode_gradients(&params, ep, &counting).unwrap();
        for (a, b) in manual.iter_mut().zip(&g) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
    }
    assert_eq!(sum, manual);
}

#[test]
fn proto_separates_unimodal_classes_within_2000_iterations() {
    let mut ds = gen_synthetic(&SyntheticConfig {
        n_classes: 40,
        modes_per_class: 1,
        input_dim: 2,
        mode_spread: 10.0,
        within_mode_std: 1.0,
        points_per_class: 40,
        seed: 9,
    })
    .unwrap();
    ds.assign_splits([0.6, 0.2, 0.2], 9).unwrap();
    let protocol = Protocol::Supervised(SamplerConfig::supervised(5, 5, 5));

    // separable: class means on the raw inputs already exceed 95%
    let raw = ModelParams {
        embedding: EmbeddingParams::identity(2),
        log_sigma_l: Tensor::scalar(0.0),
        log_sigma_u: Tensor::scalar(0.0),
        sigma_u_learnable: true,
    };
    let ncm = EvalConfig {
        protocol: protocol.clone(),
        split: Split::Val,
        n_episodes: 500,
        ..eval_cfg(ModelKind::Proto, 500)
    };
    assert!(evaluate(&raw, &ds, &ncm).unwrap().mean > 0.95);

    let cfg = TrainConfig {
        kind: ModelKind::Proto,
        protocol,
        schedule: Schedule {
            max_iterations: 2000,
            halving_period: 500,
            halving_start: 1000,
            ..Default::default()
        },
        val_every: 500,
        val_episodes: 100,
        log_every: 0,
        seed: 9,
        ..Default::default()
    };
    let (_, log) = train(&cfg, &ds).unwrap();
    let best = log.iter().filter_map(|e| e.val_accuracy).fold(0.0, f64::max);
    assert!(best >= 0.95, "best validation accuracy {best}");
}
