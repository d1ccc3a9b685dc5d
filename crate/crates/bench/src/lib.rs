//! Shared fixtures for the kernel benchmarks.

use microclust::likelihood::RecordTable;
use microclust::synthetic::{generate_dataset, scenario_partition, ScenarioSpec};
use microclust::Partition;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Scenario 1 records (n = 500) at distortion 0.01, with the true partition.
pub fn scenario_one() -> (RecordTable, Partition) {
    let spec = ScenarioSpec::preset(1, 0.01).expect("preset exists");
    let truth = scenario_partition(&spec).expect("valid scenario");
    let (records, _) =
        generate_dataset(&truth, &spec, None, &mut ChaCha8Rng::seed_from_u64(1)).expect("generation succeeds");
    (records, truth)
}
