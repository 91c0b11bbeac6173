use hyperexpand::gnn::*;
use hyperexpand::Error;

fn small(depth: usize) -> TrainConfig<f64> {
    let mut cfg = TrainConfig::new(depth);
    cfg.dataset_size = 64;
    cfg.epochs = 5;
    cfg
}

#[test]
fn depth_one_is_learned_within_500_epochs() {
    let cfg = TrainConfig::<f64>::new(1);
    assert_eq!((cfg.num_layers, cfg.epochs), (2, 500));
    let r = train(&cfg).unwrap();
    assert_eq!(r.final_accuracy, 1.0);
    assert!(r.history.iter().any(|m| m.accuracy == 1.0));
}

#[test]
fn zero_learning_rate_keeps_the_loss() {
    for rewire in [false, true] {
        let mut cfg = small(2);
        cfg.learning_rate = 0.0;
        cfg.batch_size = 0;
        cfg.rewire = rewire;
        cfg.num_layers = 3;
        let r = train(&cfg).unwrap();
        assert!(r.history.iter().all(|m| m.loss == r.history[0].loss));
        assert_eq!(r.final_loss, r.history[0].loss);
    }
}

#[test]
fn identical_config_identical_history() {
    for (rewire, mode, optimizer) in [
        (false, HyperedgeMode::Summation, Optimizer::Sgd),
        (true, HyperedgeMode::Learned, Optimizer::Adam),
    ] {
        let mut cfg = small(2);
        cfg.rewire = rewire;
        cfg.num_layers = 4;
        cfg.hyperedge_mode = mode;
        cfg.optimizer = optimizer;
        cfg.learning_rate = 0.01;
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        let bits = |r: &TrainReport<f64>| -> Vec<(u64, u64)> {
            r.history.iter().map(|m| (m.loss.to_bits(), m.accuracy.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.model.params(), b.model.params());
        cfg.seed += 1;
        assert_ne!(bits(&a), bits(&train(&cfg).unwrap()));
    }
}

#[test]
fn runaway_learning_rate_is_reported() {
    let mut cfg = small(1);
    cfg.learning_rate = 1e200;
    cfg.clip_norm = 0.0;
    cfg.epochs = 50;
    match train(&cfg) {
        Err(Error::Diverged { epoch, .. }) => assert!(epoch <= 50),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.final_loss)),
    }
}

#[test]
fn invalid_configs() {
    let mut cfg = small(0);
    assert!(matches!(train(&cfg), Err(Error::InvalidConfig(_))));
    cfg = small(1);
    cfg.learning_rate = f64::NAN;
    assert!(train(&cfg).is_err());
    cfg = small(1);
    cfg.rewire = true;
    cfg.expander_k = 4;
    assert!(train(&cfg).is_err());
}

#[test]
fn rewired_dataset_shapes() {
    let mut cfg = small(2);
    cfg.rewire = true;
    cfg.num_layers = 3;
    let data = tree_match_dataset(&cfg).unwrap();
    assert_eq!(data.len(), 64);
    for e in &data {
        let Topology::Rewired(r) = &e.topology else { panic!("expected rewired") };
        assert_eq!(r.total_nodes(), 14);
        assert_eq!(r.expander().k(), 3);
        assert_eq!(e.features.dim(), (7, 9));
        assert_eq!(e.readout, Readout::Node(0));
    }
    // Same seed, same instances with or without rewiring.
    cfg.rewire = false;
    let plain = tree_match_dataset(&cfg).unwrap();
    assert!(plain.iter().zip(&data).all(|(a, b)| a.features == b.features && a.label == b.label));
}
