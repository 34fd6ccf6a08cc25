//! End-to-end run: simulate, write and re-read the capture, assemble flows,
//! label them and score the labels against the simulator's truth.

use crate::capture::{read_capture_from, write_capture_to, CaptureError};
use crate::flow::{assemble_flows, AssemblerConfig, Flow, DEFAULT_IDLE_TIMEOUT_S};
use crate::label::{label_accuracy, label_flows, AccuracyReport, LabelConfig, LabelError, LabelledFlow};
use crate::testbed::{run_scenario, ConfigError, ScenarioConfig, ScenarioOutput};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineOptions {
    pub idle_timeout_s: f64,
    pub label: LabelConfig,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            idle_timeout_s: DEFAULT_IDLE_TIMEOUT_S,
            label: LabelConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub scenario: ScenarioOutput,
    /// The capture as written to disk.
    pub pcap: Vec<u8>,
    pub flows: Vec<Flow>,
    pub labelled: Vec<LabelledFlow>,
    pub accuracy: AccuracyReport,
}

pub fn run_pipeline(config: &ScenarioConfig, opts: &PipelineOptions) -> Result<PipelineResult, PipelineError> {
    let scenario = run_scenario(config)?;
    let pcap = write_capture_to(&scenario.packets, Vec::new())?;
    let capture = read_capture_from(pcap.as_slice())?;
    let flows = assemble_flows(&capture.packets, &AssemblerConfig::new(config.subnet, opts.idle_timeout_s));
    let labelled = label_flows(
        &flows,
        &scenario.socket_events,
        &scenario.uid_map,
        &scenario.device_map,
        &opts.label,
    )?;
    let accuracy = label_accuracy(&labelled, &scenario.truth);
    Ok(PipelineResult {
        scenario,
        pcap,
        flows,
        labelled,
        accuracy,
    })
}
