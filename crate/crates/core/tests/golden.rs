//! CSV schema stability: the per-trial and aggregate tables are pinned
//! byte-for-byte against golden files. Regenerate deliberately with
//! `cargo test -p topm --test golden bless -- --ignored` after a schema
//! change.

use topm::bench::{
    run_experiment, write_aggregate_csv, write_trial_csv, AlgorithmId, BudgetSpec,
    ExperimentConfig,
};
use topm::{Constants, Instance};

const TRIALS_GOLDEN: &str = "tests/data/golden_trials.csv";
const AGGREGATE_GOLDEN: &str = "tests/data/golden_aggregate.csv";

fn golden_outputs() -> (Vec<u8>, Vec<u8>) {
    let inst = Instance::new(vec![0.9, 0.7, 0.4, 0.2, 0.1]).unwrap();
    let cfg = ExperimentConfig {
        algo: AlgorithmId::Simple,
        k: 2,
        budget: BudgetSpec::Absolute(600),
        trials: 5,
        master_seed: 31337,
        consts: Constants::default(),
        workers: Some(2),
        record_cells: false,
    };
    let (reports, row) = run_experiment(&inst, 2, &cfg).expect("golden experiment");
    let mut trials = Vec::new();
    write_trial_csv(&mut trials, &reports).unwrap();
    let mut aggregate = Vec::new();
    write_aggregate_csv(&mut aggregate, std::slice::from_ref(&row)).unwrap();
    (trials, aggregate)
}

#[test]
fn csv_schemas_match_goldens() {
    let (trials, aggregate) = golden_outputs();
    let want_trials = std::fs::read(TRIALS_GOLDEN).expect("golden trials file");
    let want_aggregate = std::fs::read(AGGREGATE_GOLDEN).expect("golden aggregate file");
    assert_eq!(
        String::from_utf8_lossy(&trials),
        String::from_utf8_lossy(&want_trials),
        "per-trial CSV drifted from the golden file"
    );
    assert_eq!(
        String::from_utf8_lossy(&aggregate),
        String::from_utf8_lossy(&want_aggregate),
        "aggregate CSV drifted from the golden file"
    );
}

#[test]
#[ignore = "regenerates the golden files in place"]
fn bless() {
    let (trials, aggregate) = golden_outputs();
    std::fs::create_dir_all("tests/data").unwrap();
    std::fs::write(TRIALS_GOLDEN, trials).unwrap();
    std::fs::write(AGGREGATE_GOLDEN, aggregate).unwrap();
}
