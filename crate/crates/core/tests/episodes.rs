use std::collections::HashMap;

use imp_core::episodes::{
    gen_synthetic, io, sample_unsupervised, Dataset, Episode, Protocol, SamplerConfig, Split,
    SyntheticConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset(seed: u64, with_mask: bool) -> Dataset {
    let mut ds = gen_synthetic(&SyntheticConfig {
        n_classes: 6,
        modes_per_class: 3,
        input_dim: 3,
        points_per_class: 90,
        seed,
        ..Default::default()
    })
    .unwrap();
    if with_mask {
        ds.draw_label_mask(0.4, seed).unwrap();
    }
    ds
}

fn check_disjoint(ep: &Episode) {
    let mut seen = std::collections::HashSet::new();
    for i in ep.support_index.iter().chain(&ep.unlabeled_index).chain(&ep.query_index) {
        assert!(seen.insert(*i), "point {i} used twice");
    }
}

fn protocol() -> impl Strategy<Value = Protocol> {
    let sup = (2usize..7, 1usize..5, 0usize..6)
        .prop_map(|(way, shot, q)| Protocol::Supervised(SamplerConfig::supervised(way, shot, q)));
    let semi = (2usize..6, 1usize..4, 1usize..4, 0usize..4, 0usize..3, 0usize..4).prop_map(
        |(way, shot, q, u, dc, di)| {
            Protocol::SemiSupervised(SamplerConfig {
                way,
                shot,
                queries_per_class: q,
                unlabeled_per_class: u,
                distractor_classes: dc,
                distractor_instances: di,
            })
        },
    );
    let sc = (2usize..6, 1usize..4, 0usize..6).prop_map(|(n_super, n_sub, queries_per_sub)| Protocol::SuperClass {
        n_super,
        n_sub,
        queries_per_sub,
    });
    prop_oneof![sup, semi, sc]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sampled_episodes_satisfy_invariants(p in protocol(), seed in any::<u64>()) {
        let ds = dataset(seed % 7, true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ep = p.sample(&ds, Split::Train, &mut rng).unwrap();
        ep.validate().unwrap();
        check_disjoint(&ep);
        prop_assert_eq!(ep.way, p.way());
        prop_assert_eq!(ep.support_x.rows(), ep.n_support());
        prop_assert_eq!(ep.unlabeled_x.rows(), ep.n_unlabeled());
        prop_assert_eq!(ep.query_x.rows(), ep.n_query());
        for (r, &i) in ep.query_index.iter().enumerate() {
            prop_assert_eq!(ep.query_x.row(r), ds.point(i));
        }
        match &p {
            Protocol::Supervised(c) => {
                prop_assert_eq!(ep.n_query(), c.way * c.queries_per_class);
                prop_assert_eq!(ep.n_unlabeled(), 0);
            }
            Protocol::SemiSupervised(c) => {
                prop_assert_eq!(
                    ep.n_unlabeled(),
                    c.way * c.unlabeled_per_class + c.distractor_classes * c.distractor_instances
                );
            }
            Protocol::SuperClass { n_super, n_sub, queries_per_sub } => {
                prop_assert_eq!(ep.n_support(), n_super * n_sub);
                prop_assert_eq!(ep.n_query(), n_super * n_sub * queries_per_sub);
                for (r, &i) in ep.support_index.iter().enumerate() {
                    let sup = ds.superclass_ids().unwrap()[i];
                    prop_assert_eq!(ep.classes[ep.support_y[r]], sup);
                }
            }
        }
    }

    #[test]
    fn label_mask_is_fixed_per_dataset(seed in any::<u64>()) {
        let ds = dataset(3, true);
        let mask = ds.label_mask().unwrap();
        let p = Protocol::SemiSupervised(SamplerConfig {
            way: 4,
            shot: 2,
            queries_per_class: 3,
            unlabeled_per_class: 3,
            distractor_classes: 1,
            distractor_instances: 2,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let ep = p.sample(&ds, Split::Train, &mut rng).unwrap();
            prop_assert!(ep.support_index.iter().chain(&ep.query_index).all(|&i| mask[i]));
            prop_assert!(ep.unlabeled_index.iter().all(|&i| !mask[i]));
        }
    }

    #[test]
    fn unsupervised_tasks_cover_balanced_classes(seed in any::<u64>(), n in 2usize..8, k in 1usize..10) {
        let ds = dataset(1, false);
        let (x, y) = sample_unsupervised(&ds, Split::Train, n, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(x.rows(), n * k);
        for c in 0..n {
            prop_assert_eq!(y.iter().filter(|&&v| v == c).count(), k);
        }
    }
}

#[test]
fn class_selection_is_uniform_over_10k_episodes() {
    let ds = dataset(0, false);
    let p = Protocol::Supervised(SamplerConfig::supervised(5, 1, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts: HashMap<usize, usize> = HashMap::new();
    let trials = 10_000;
    for _ in 0..trials {
        let ep = p.sample(&ds, Split::Train, &mut rng).unwrap();
        for c in ep.classes {
            *counts.entry(c).or_default() += 1;
        }
    }
    let n = ds.n_classes() as f64;
    assert_eq!(counts.len(), ds.n_classes());
    let expected = trials as f64 * 5.0 / n;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 17 degrees of freedom; 40.8 is the 0.999 quantile
    assert!(chi2 < 40.8, "chi-square {chi2}");
}

#[test]
fn dataset_files_round_trip() {
    let mut ds = dataset(5, true);
    ds.assign_splits([0.5, 0.25, 0.25], 9).unwrap();
    let mut back = io::parse_dataset(&io::format_dataset(&ds)).unwrap();
    io::parse_splits(&io::format_splits(&ds), &mut back).unwrap();
    back.set_label_mask(io::parse_mask(&io::format_mask(ds.label_mask().unwrap()), ds.len()).unwrap())
        .unwrap();
    assert_eq!(back, ds);
}

#[test]
fn splits_partition_classes() {
    let mut ds = dataset(2, false);
    ds.assign_splits([0.6, 0.2, 0.2], 4).unwrap();
    let total: usize = [Split::Train, Split::Val, Split::Test].iter().map(|&s| ds.classes_in(s).len()).sum();
    assert_eq!(total, ds.n_classes());
    for s in [Split::Val, Split::Test] {
        assert!(!ds.classes_in(s).is_empty());
    }
}

#[test]
fn too_few_classes_is_insufficient() {
    let ds = dataset(0, false);
    let p = Protocol::Supervised(SamplerConfig::supervised(19, 1, 1));
    let err = p.sample(&ds, Split::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert!(matches!(err, imp_core::Error::Insufficient(_)), "{err}");
}
