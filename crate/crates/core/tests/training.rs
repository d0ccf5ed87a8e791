use gca::encoder::{backward, backward_par, forward, load_checkpoint, save_checkpoint, Activation, ModelParams};
use gca::oracle::{sbm_generate, SbmConfig};
use gca::trainer::{embed, train, train_with, TrainConfig, Variant};
use gca::{build_plan, CentralityMeasure, GcaError, Graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sbm(seed: u64) -> Graph {
    let config = SbmConfig {
        n_per_block: 100,
        blocks: 2,
        p_in: 0.05,
        p_out: 0.005,
        feature_dim: 32,
        feature_noise: 0.4,
    };
    sbm_generate(&config, &mut ChaCha8Rng::seed_from_u64(1000 + seed)).unwrap()
}

fn smoke_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 200,
        hidden_dim: 32,
        learning_rate: 0.01,
        seed,
        ..TrainConfig::default()
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

#[test]
fn loss_decreases_on_the_sbm() {
    for seed in 0..10 {
        let outcome = train(&sbm(seed), &smoke_config(seed)).unwrap();
        let losses = &outcome.losses;
        assert_eq!(losses.len(), 200);
        let tenth = losses.len() / 10;
        let (head, tail) = (median(&losses[..tenth]), median(&losses[losses.len() - tenth..]));
        assert!(tail < head, "seed {seed}: median loss {head} -> {tail}");
        if seed == 0 {
            assert!(losses[199] < losses[0], "final loss {} not below initial {}", losses[199], losses[0]);
        }
    }
}

#[test]
fn runs_are_bit_reproducible() {
    let g = sbm(3);
    let cfg = TrainConfig {
        epochs: 15,
        ..smoke_config(3)
    };
    let mut seen = Vec::new();
    let a = train_with(&g, &cfg, |epoch, loss| seen.push((epoch, loss))).unwrap();
    let b = train(&g, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.losses, b.losses);
    assert_eq!(seen.iter().map(|&(_, l)| l).collect::<Vec<_>>(), a.losses);
    assert_eq!(seen.last().unwrap().0, 14);
    assert_eq!(embed(&a.params, &g).unwrap(), embed(&b.params, &g).unwrap());

    let other = train(&g, &TrainConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(other.losses, a.losses);
}

#[test]
fn every_variant_and_activation_trains() {
    let g = sbm(5);
    for (variant, activation, measure) in [
        (Variant::Gca, Activation::Prelu, CentralityMeasure::Eigenvector),
        (Variant::GcaT, Activation::Relu, CentralityMeasure::PageRank),
        (Variant::GcaA, Activation::Leaky(0.229), CentralityMeasure::Degree),
        (Variant::GcaTA, Activation::Relu, CentralityMeasure::Degree),
    ] {
        let cfg = TrainConfig {
            epochs: 5,
            activation,
            centrality_measure: measure,
            ..smoke_config(1)
        }
        .with_variant(variant);
        let out = train(&g, &cfg).unwrap();
        assert!(out.losses.iter().all(|l| l.is_finite()));
        let emb = embed(&out.params, &g).unwrap();
        assert_eq!(emb.dim(), (200, 32));
    }
}

#[test]
fn directed_graphs_train() {
    let features = ndarray::Array2::from_shape_fn((5, 3), |(i, j)| ((i + j) % 2) as f32);
    let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 3), (2, 3)], true, features, None, None)
        .unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        hidden_dim: 4,
        centrality_measure: CentralityMeasure::PageRank,
        ..TrainConfig::default()
    };
    assert!(train(&g, &cfg).unwrap().losses.iter().all(|l| l.is_finite()));
}

#[test]
fn invalid_configs_are_rejected_before_training() {
    let g = sbm(0);
    let bad = TrainConfig {
        p_e1: 1.0,
        ..smoke_config(0)
    };
    assert!(matches!(train(&g, &bad), Err(GcaError::InvalidConfig(_))));
    let bad = TrainConfig {
        tau: 0.0,
        ..smoke_config(0)
    };
    assert!(matches!(train(&g, &bad), Err(GcaError::InvalidConfig(_))));
}

#[test]
fn concurrent_and_sequential_accumulation_agree() {
    let g = sbm(2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = ModelParams::init(32, 16, 16, Activation::Prelu, &mut rng);
    let x = g.features_f64();
    let plan = build_plan(&g, CentralityMeasure::Degree, 0.3, 0.2, 0.7, true, true).unwrap();
    let views: Vec<_> = (0..2)
        .map(|_| {
            let s = plan.sample(&mut rng);
            (s.norm_adjacency(&g), s.masked_features(&x))
        })
        .collect();
    let (z1, t1) = forward(&params, &views[0].0, &views[0].1).unwrap();
    let (z2, t2) = forward(&params, &views[1].0, &views[1].1).unwrap();
    let report = gca::contrastive_objective(&z1, &z2, 0.5).unwrap();
    let pairs = [(&t1, &report.grad_u), (&t2, &report.grad_v)];
    assert_eq!(backward(&params, &pairs).unwrap(), backward_par(&params, &pairs).unwrap());
}

#[test]
fn trained_checkpoint_round_trips() {
    let g = sbm(1);
    let out = train(&g, &TrainConfig { epochs: 3, ..smoke_config(1) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_checkpoint(&out.params, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, out.params);
    assert_eq!(embed(&loaded, &g).unwrap(), embed(&out.params, &g).unwrap());
}
