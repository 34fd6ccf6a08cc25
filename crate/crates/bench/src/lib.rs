//! Shared fixtures for the benchmarks: one simulated capture, its flows and
//! its labelled dataset, all from a fixed seed.

use flowforge_core::capture::write_capture_to;
use flowforge_core::dataset::Dataset;
use flowforge_core::ml::LabelledMatrix;
use flowforge_core::pipeline::{run_pipeline, PipelineOptions, PipelineResult};
use flowforge_core::ScenarioConfig;

pub const FIXTURE_SEED: u64 = 17;

pub struct Fixture {
    pub config: ScenarioConfig,
    pub result: PipelineResult,
    pub pcap: Vec<u8>,
    pub dataset: Dataset,
}

pub fn fixture(duration_s: f64) -> Fixture {
    let mut config = ScenarioConfig::default_testbed();
    config.seed = FIXTURE_SEED;
    config.duration_s = duration_s;
    let result = run_pipeline(&config, &PipelineOptions::default()).expect("built-in scenario runs");
    let pcap = write_capture_to(&result.scenario.packets, Vec::new()).expect("in-memory capture");
    let dataset = Dataset::from_labelled(&result.labelled);
    Fixture {
        config,
        result,
        pcap,
        dataset,
    }
}

/// The app-labelled training matrix of a dataset.
pub fn app_matrix(ds: &Dataset) -> LabelledMatrix {
    let mut names: Vec<String> = ds.rows.iter().map(|r| r.app_label.clone()).collect();
    names.sort();
    names.dedup();
    let labels = ds
        .rows
        .iter()
        .map(|r| names.binary_search(&r.app_label).expect("present"))
        .collect();
    LabelledMatrix::new(ds.matrix(&ds.rows), labels, names, ds.numerical_columns.clone()).expect("consistent shapes")
}
