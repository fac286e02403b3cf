use std::path::PathBuf;

use wsnsim::config::{DropSelection, ExperimentConfig};
use wsnsim::engine::{self, RunReport};

fn config(file: &str, name: &str, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(file), name);
    cfg.seed = seed;
    cfg
}

fn run(cfg: &ExperimentConfig) -> RunReport {
    engine::run_experiment(cfg).unwrap().report
}

#[test]
fn hop_transmissions_are_conserved_per_direction() {
    for (file, name) in [("iris.csv", "iris"), ("wine.csv", "wine"), ("ionosphere.csv", "ionosphere")] {
        let r = run(&config(file, name, 3));
        let n_iter = r.epochs_run as u64;
        let (p_t, p_v) = (r.dataset.train_size as u64, r.dataset.test_size as u64);
        assert_eq!(r.presentations, n_iter * (p_t + p_v));
        assert_eq!(r.forward.hop_transmissions, n_iter * (p_t + p_v) * r.forward_message_hops);
        assert_eq!(r.backward.hop_transmissions, n_iter * p_t * r.forward_message_hops);
        assert_eq!(r.simulated_hop_transmissions, r.message_complexity);
        assert_eq!(r.links.len(), 2 * r.shape.n_hid * r.shape.n_out);
        for l in &r.links {
            assert_eq!(l.sent, l.dropped + l.scheduled);
        }
    }
}

#[test]
fn early_stopping_epoch_count() {
    for seed in 1..=5 {
        let mut cfg = config("iris.csv", "iris", seed);
        cfg.patience = 4;
        let r = run(&cfg);
        assert!(r.epochs_run == r.best_epoch + 4 || r.epochs_run == cfg.max_epochs, "seed {seed}");
        assert_eq!(r.history.len(), r.epochs_run);
        let best = &r.history[r.best_epoch - 1];
        assert_eq!((best.test_accuracy, best.test_mse), (r.accuracy, r.mse));
    }
}

#[test]
fn heavy_drop_does_not_help() {
    let mean = |p: f64| {
        let total: f64 = (1..=10)
            .map(|seed| {
                let mut cfg = config("iris.csv", "iris", seed);
                cfg.drop_model = DropSelection::Fixed(p);
                run(&cfg).accuracy
            })
            .sum();
        total / 10.0
    };
    let (clean, lossy) = (mean(0.0), mean(0.5));
    assert!(lossy <= clean, "p=0.5 mean {lossy} > p=0 mean {clean}");
}

#[test]
fn black_hole_run_completes_with_finite_weights() {
    let mut cfg = config("iris.csv", "iris", 2);
    cfg.drop_model = DropSelection::Fixed(1.0);
    cfg.max_epochs = 20;
    let result = engine::run_experiment(&cfg).unwrap();
    assert!(result.training.network.weights_finite());
    assert_eq!(result.report.forward.dropped, result.report.forward.sent);
    assert_eq!(result.report.forward.mean_staleness, result.report.presentations as f64 / 2.0 + 0.5);
}

#[test]
fn every_preset_runs() {
    for preset in ["EAR", "GBR", "BVR", "QoS", "Speed", "LBAR", "LAR", "AODVjr", "DD", "OpportunisticFlooding"] {
        let mut cfg = config("iris.csv", "iris", 1);
        cfg.drop_model = DropSelection::Preset(preset.into());
        cfg.max_epochs = 15;
        let r = run(&cfg);
        assert!(r.accuracy.is_finite() && (0.0..=1.0).contains(&r.accuracy), "{preset}");
    }
}

#[test]
fn explicit_wait_window_is_used() {
    let mut cfg = config("iris.csv", "iris", 1);
    cfg.t_wait = Some(6.0);
    cfg.max_epochs = 10;
    let r = run(&cfg);
    assert_eq!(r.t_wait, 6.0);
    assert_eq!(r.t_wait_ms, 390.0);
    cfg.t_wait = None;
    cfg.l_max = Some(10);
    cfg.theta = Some(0.5);
    assert_eq!(run(&cfg).t_wait, 5.0);
}
