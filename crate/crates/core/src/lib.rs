//! Mobile-traffic testbed simulation and the capture, flow, labelling and
//! classification pipeline built around it.

pub mod capture;
pub mod dataset;
pub mod features;
pub mod flow;
pub mod label;
pub mod ml;
pub mod pipeline;
pub mod reliability;
pub mod testbed;

pub use capture::{CaptureError, MacAddr, PacketRecord, TcpFlags, TcpInfo, TcpOptionKinds};
pub use features::{extract_features, FeatureError, FeatureVector};
pub use flow::{assemble_flows, AssemblerConfig, Flow, FlowKey, FlowScope};
pub use label::{label_flows, LabelConfidence, LabelError, LabelledFlow, Os, Owner, SocketEvent};
pub use reliability::{compute_reliability, ActionRecord, EfDenominator, Outcome};
pub use testbed::{run_scenario, ScenarioConfig, ScenarioOutput};
