use qdlab_core::experiments::{run, ExperimentConfig};

fn twice(cfg: &ExperimentConfig) {
    let (a, b) = (run(cfg).unwrap(), run(cfg).unwrap());
    assert_eq!(a.csv, b.csv, "{} csv differs between runs", cfg.experiment);
    assert_eq!(a.summary_json(), b.summary_json());
    assert!(a.passed(), "{:?}", a.violated());
}

#[test]
fn dirichlet_is_reproducible() {
    twice(&ExperimentConfig { seed: 7, count: Some(4), ..ExperimentConfig::new("dirichlet") });
}

#[test]
fn crossing_model_is_reproducible() {
    twice(&ExperimentConfig { grid: Some(32), samples: Some(40), ..ExperimentConfig::new("thm-6-2") });
}

#[test]
fn confinement_is_reproducible() {
    twice(&ExperimentConfig::new("confinement"));
}

#[test]
fn seeds_change_randomized_catalogs() {
    let a = run(&ExperimentConfig { seed: 1, count: Some(3), ..ExperimentConfig::new("dirichlet") }).unwrap();
    let b = run(&ExperimentConfig { seed: 2, count: Some(3), ..ExperimentConfig::new("dirichlet") }).unwrap();
    assert_ne!(a.csv, b.csv);
}
