//! The `flowforge` command line: one pipeline stage per subcommand, every
//! stage deterministic given its inputs and `--seed`.

pub mod manifest;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ipnet::Ipv4Net;

use flowforge_core::capture::{read_capture_from, write_capture_to, CaptureError};
use flowforge_core::dataset::{read_dataset, write_dataset, AliasTable, Dataset, DatasetError};
use flowforge_core::flow::{assemble_flows, AssemblerConfig, Flow, DEFAULT_IDLE_TIMEOUT_S};
use flowforge_core::label::{
    label_flows, read_jsonl, write_jsonl, DeviceMap, LabelConfidence, LabelConfig, LabelError, UidMap,
    DEFAULT_GRACE_S,
};
use flowforge_core::ml::{benchmark, BenchConfig, LabelTarget, MlError, RfParams};
use flowforge_core::pipeline::{run_pipeline, PipelineError, PipelineOptions};
use flowforge_core::reliability::{compute_reliability, render_reliability, EfDenominator, Grouping, ReportFormat};
use flowforge_core::testbed::{run_scenario, ConfigError, ScenarioConfig, ScenarioOutput};
use flowforge_core::ActionRecord;

use manifest::{now, read_input, sha256_hex, FileDigest, OutDir, RunManifest};

pub const PCAP_NAME: &str = "capture.pcap";
pub const EVENTS_NAME: &str = "socket_events.jsonl";
pub const RUN_LOG_NAME: &str = "run_log.jsonl";
pub const TRUTH_NAME: &str = "truth.jsonl";
pub const UID_MAP_NAME: &str = "uid_map.csv";
pub const DEVICE_MAP_NAME: &str = "device_map.csv";
pub const SCENARIO_NAME: &str = "scenario.toml";
pub const FLOWS_NAME: &str = "flows.csv";
pub const DATASET_NAME: &str = "dataset.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "flowforge", version, about = "Mobile-traffic testbed simulator and flow-classification toolkit")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a testbed run: capture, socket events, run log, truth and maps.
    Simulate(SimulateArgs),
    /// Assemble a capture into bidirectional flows and dump a per-flow summary.
    Flows(FlowsArgs),
    /// Label the flows of a capture from socket events and write the dataset CSV.
    Label(LabelArgs),
    /// Launch- and execution-failure rates from a run log.
    Reliability(ReliabilityArgs),
    /// Train on one dataset CSV, test on another, report per-class metrics.
    Bench(BenchArgs),
    /// Simulate, assemble and label in one go, scoring labels against truth.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// `default` or a path to a scenario TOML file.
    #[arg(long, default_value = "default")]
    config: String,
    #[arg(long)]
    seed: u64,
    /// Override the scenario duration in seconds.
    #[arg(long)]
    duration_s: Option<f64>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig, CliError> {
        let mut config = ScenarioConfig::load(&self.config)?;
        config.seed = self.seed;
        if let Some(d) = self.duration_s {
            config.duration_s = d;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AssemblyArgs {
    /// Capture subnet; hosts inside it are local endpoints.
    #[arg(long, default_value = "192.168.1.0/24")]
    subnet: Ipv4Net,
    #[arg(long, default_value_t = DEFAULT_IDLE_TIMEOUT_S)]
    idle_timeout: f64,
}

impl AssemblyArgs {
    fn config(&self) -> Result<AssemblerConfig, CliError> {
        if !(self.idle_timeout.is_finite() && self.idle_timeout > 0.0) {
            return Err(CliError::Usage("--idle-timeout must be a positive number of seconds".into()));
        }
        Ok(AssemblerConfig::new(self.subnet, self.idle_timeout))
    }
}

#[derive(Args, Debug)]
struct FlowsArgs {
    #[arg(long)]
    pcap: PathBuf,
    #[command(flatten)]
    assembly: AssemblyArgs,
    /// Output directory; the summary goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LabelArgs {
    #[arg(long)]
    pcap: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    uid_map: PathBuf,
    #[arg(long)]
    device_map: PathBuf,
    #[command(flatten)]
    assembly: AssemblyArgs,
    /// Seconds of slack around a socket episode when matching flows.
    #[arg(long, default_value_t = DEFAULT_GRACE_S)]
    grace: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum GroupArg {
    App,
    Device,
    DeviceApp,
    All,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Table,
    Csv,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum EfDenomArg {
    All,
    Launched,
}

#[derive(Args, Debug)]
struct ReliabilityArgs {
    /// Run log, one JSON record per line.
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    #[arg(long, value_enum, default_value = "all")]
    group: GroupArg,
    #[arg(long, value_enum, default_value = "all")]
    ef_denominator: EfDenomArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum TargetArg {
    App,
    Os,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Seed for the forest's bootstrap and feature sampling.
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "app")]
    target: TargetArg,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Column alias table: `tranalyzer` or a CSV with `alias,canonical` rows.
    #[arg(long)]
    aliases: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = DEFAULT_IDLE_TIMEOUT_S)]
    idle_timeout: f64,
    #[arg(long, default_value_t = DEFAULT_GRACE_S)]
    grace: f64,
    /// Output directory for every intermediate artifact and the dataset.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Normal output goes to stdout.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("FLOWFORGE_LOG")).try_init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`cli_main`] with explicit output streams.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a, &argv, out),
        Command::Flows(a) => flows(a, &argv, out),
        Command::Label(a) => label(a, &argv, out),
        Command::Reliability(a) => reliability(a, &argv, out),
        Command::Bench(a) => bench(a, &argv, out),
        Command::Pipeline(a) => pipeline(a, &argv, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn manifest(command: &str, argv: &[String], seed: Option<u64>, config_text: &str, inputs: Vec<FileDigest>) -> RunManifest {
    RunManifest {
        tool: "flowforge".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        argv: argv.to_vec(),
        seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        inputs,
        outputs: Vec::new(),
        started_at: now(),
        finished_at: String::new(),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(items, &mut buf).expect("in-memory write");
    buf
}

fn write_scenario(dir: &mut OutDir, config_text: &str, s: &ScenarioOutput) -> Result<(), CliError> {
    dir.write(SCENARIO_NAME, config_text.as_bytes())?;
    dir.write(PCAP_NAME, &write_capture_to(&s.packets, Vec::new())?)?;
    dir.write(EVENTS_NAME, &jsonl(&s.socket_events))?;
    dir.write(RUN_LOG_NAME, &jsonl(&s.run_log))?;
    dir.write(TRUTH_NAME, &jsonl(&s.truth))?;
    let mut buf = Vec::new();
    s.uid_map.write_csv(&mut buf)?;
    dir.write(UID_MAP_NAME, &buf)?;
    let mut buf = Vec::new();
    s.device_map.write_csv(&mut buf)?;
    dir.write(DEVICE_MAP_NAME, &buf)
}

fn simulate(a: SimulateArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let config = a.scenario.resolve()?;
    let config_text = config.to_toml();
    let m = manifest("simulate", argv, Some(config.seed), &config_text, Vec::new());
    let s = run_scenario(&config)?;
    let mut dir = OutDir::create(&a.out)?;
    write_scenario(&mut dir, &config_text, &s)?;
    dir.finish(m)?;
    emit(
        out,
        &format!(
            "packets: {}\nsocket events: {}\nactions: {}\nsocket episodes: {}\n",
            s.packets.len(),
            s.socket_events.len(),
            s.run_log.len(),
            s.truth.len()
        ),
    )
}

fn load_flows(pcap: &Path, assembly: &AssemblyArgs, inputs: &mut Vec<FileDigest>) -> Result<Vec<Flow>, CliError> {
    let cfg = assembly.config()?;
    let bytes = read_input(pcap, inputs)?;
    let capture = read_capture_from(bytes.as_slice())?;
    if capture.skipped.total() > 0 {
        log::warn!(
            "{}: skipped {} non-IPv4 and {} malformed records",
            pcap.display(),
            capture.skipped.non_ipv4,
            capture.skipped.malformed
        );
    }
    Ok(assemble_flows(&capture.packets, &cfg))
}

fn flow_summary_csv(flows: &[Flow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "local_ip",
        "local_port",
        "remote_ip",
        "remote_port",
        "protocol",
        "epoch",
        "scope",
        "first_ts_us",
        "last_ts_us",
        "local_packets",
        "remote_packets",
        "local_bytes",
        "remote_bytes",
    ])
    .expect("in-memory write");
    for f in flows {
        let bytes = |p: &[flowforge_core::PacketRecord]| p.iter().map(|p| p.ip_total_len as u64).sum::<u64>();
        let scope = serde_json::to_value(f.scope).expect("scope serializes");
        w.write_record([
            f.local_ip.to_string(),
            f.local_port().to_string(),
            f.remote_ip().to_string(),
            f.remote_port().to_string(),
            f.key.protocol.to_string(),
            f.epoch.to_string(),
            scope.as_str().unwrap_or_default().to_string(),
            f.first_ts_us.to_string(),
            f.last_ts_us.to_string(),
            f.local_packets.len().to_string(),
            f.remote_packets.len().to_string(),
            bytes(&f.local_packets).to_string(),
            bytes(&f.remote_packets).to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn flows(a: FlowsArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    let flows = load_flows(&a.pcap, &a.assembly, &mut inputs)?;
    let summary = flow_summary_csv(&flows);
    match &a.out {
        Some(path) => {
            let opts = format!("subnet={} idle_timeout={}", a.assembly.subnet, a.assembly.idle_timeout);
            let m = manifest("flows", argv, None, &opts, inputs);
            let mut dir = OutDir::create(path)?;
            dir.write(FLOWS_NAME, &summary)?;
            dir.finish(m)?;
            emit(out, &format!("flows: {}\n", flows.len()))
        }
        None => out.write_all(&summary).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn label(a: LabelArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.grace.is_finite() && a.grace >= 0.0) {
        return Err(CliError::Usage("--grace must be a non-negative number of seconds".into()));
    }
    let mut inputs = Vec::new();
    let flows = load_flows(&a.pcap, &a.assembly, &mut inputs)?;
    let events = read_jsonl(read_input(&a.events, &mut inputs)?.as_slice(), "socket event")?;
    let uid_map = UidMap::read_csv(read_input(&a.uid_map, &mut inputs)?.as_slice())?;
    let device_map = DeviceMap::read_csv(read_input(&a.device_map, &mut inputs)?.as_slice())?;
    let labelled = label_flows(&flows, &events, &uid_map, &device_map, &LabelConfig { grace_s: a.grace })?;
    let ds = Dataset::from_labelled(&labelled);
    let opts = format!(
        "subnet={} idle_timeout={} grace={}",
        a.assembly.subnet, a.assembly.idle_timeout, a.grace
    );
    let m = manifest("label", argv, None, &opts, inputs);
    let mut dir = OutDir::create(&a.out)?;
    dir.write(DATASET_NAME, &write_dataset(&ds, Vec::new()).map_err(|e| dataset_write_error(&a.out, e))?)?;
    dir.finish(m)?;
    emit(out, &confidence_summary(flows.len(), &ds))
}

fn dataset_write_error(dir: &Path, source: csv::Error) -> CliError {
    CliError::Dataset(DatasetError::Csv {
        path: dir.join(DATASET_NAME).display().to_string(),
        source,
    })
}

fn confidence_summary(n_flows: usize, ds: &Dataset) -> String {
    let count = |c: LabelConfidence| ds.rows.iter().filter(|r| r.label_confidence == c).count();
    format!(
        "flows: {n_flows}\nlabelled rows: {}\n  exact: {}\n  nearest_in_time: {}\n  unlabelled: {}\n",
        ds.len(),
        count(LabelConfidence::Exact),
        count(LabelConfidence::NearestInTime),
        count(LabelConfidence::Unlabelled)
    )
}

fn reliability(a: ReliabilityArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    let log: Vec<ActionRecord> = read_jsonl(read_input(&a.log, &mut inputs)?.as_slice(), "run log")?;
    let denom = match a.ef_denominator {
        EfDenomArg::All => EfDenominator::All,
        EfDenomArg::Launched => EfDenominator::Launched,
    };
    let (format, ext) = match a.format {
        FormatArg::Table => (ReportFormat::Table, "txt"),
        FormatArg::Csv => (ReportFormat::Csv, "csv"),
    };
    let groups: &[Grouping] = match a.group {
        GroupArg::App => &[Grouping::App],
        GroupArg::Device => &[Grouping::Device],
        GroupArg::DeviceApp => &[Grouping::DeviceApp],
        GroupArg::All => &[Grouping::Device, Grouping::App, Grouping::DeviceApp],
    };
    let report = compute_reliability(&log, denom);
    let mut text = String::new();
    for (i, g) in groups.iter().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        text.push_str(&render_reliability(&report, format, *g));
    }
    if let Some(path) = &a.out {
        let opts = format!("format={ext} group={:?} ef_denominator={denom:?}", a.group);
        let m = manifest("reliability", argv, None, &opts, inputs);
        let mut dir = OutDir::create(path)?;
        dir.write(&format!("reliability.{ext}"), text.as_bytes())?;
        dir.finish(m)?;
    }
    emit(out, &text)
}

fn load_dataset(path: &Path, aliases: Option<&AliasTable>, inputs: &mut Vec<FileDigest>) -> Result<Dataset, CliError> {
    let bytes = read_input(path, inputs)?;
    Ok(read_dataset(bytes.as_slice(), aliases, &path.display().to_string())?)
}

fn bench(a: BenchArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    let aliases = match a.aliases.as_deref() {
        None => None,
        Some("tranalyzer") => Some(AliasTable::tranalyzer()),
        Some(p) => {
            let bytes = read_input(Path::new(p), &mut inputs)?;
            Some(AliasTable::from_csv(bytes.as_slice())?)
        }
    };
    let train = load_dataset(&a.train, aliases.as_ref(), &mut inputs)?;
    let test = load_dataset(&a.test, aliases.as_ref(), &mut inputs)?;
    let config = BenchConfig {
        target: match a.target {
            TargetArg::App => LabelTarget::App,
            TargetArg::Os => LabelTarget::Os,
        },
        knn_k: a.k,
        rf: RfParams {
            n_trees: a.trees,
            max_depth: a.max_depth,
            seed: a.seed,
            ..RfParams::default()
        },
    };
    let report = benchmark(&train, &test, &config)?;
    let text = report.render();
    if let Some(path) = &a.out {
        let opts = format!("{config:?}");
        let m = manifest("bench", argv, Some(a.seed), &opts, inputs);
        let mut dir = OutDir::create(path)?;
        dir.write("report.txt", text.as_bytes())?;
        dir.write("metrics.csv", report.to_csv().as_bytes())?;
        let mut imp = String::from("rank,feature,importance\n");
        for (i, (name, v)) in report.importance_ranking().iter().enumerate() {
            let _ = writeln!(imp, "{},{name},{v}", i + 1);
        }
        dir.write("importance.csv", imp.as_bytes())?;
        dir.finish(m)?;
    }
    emit(out, &text)
}

fn pipeline(a: PipelineArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let config = a.scenario.resolve()?;
    if !(a.idle_timeout.is_finite() && a.idle_timeout > 0.0) {
        return Err(CliError::Usage("--idle-timeout must be a positive number of seconds".into()));
    }
    if !(a.grace.is_finite() && a.grace >= 0.0) {
        return Err(CliError::Usage("--grace must be a non-negative number of seconds".into()));
    }
    let config_text = config.to_toml();
    let m = manifest(
        "pipeline",
        argv,
        Some(config.seed),
        &format!("{config_text}\nidle_timeout={}\ngrace={}\n", a.idle_timeout, a.grace),
        Vec::new(),
    );
    let opts = PipelineOptions {
        idle_timeout_s: a.idle_timeout,
        label: LabelConfig { grace_s: a.grace },
    };
    let r = run_pipeline(&config, &opts)?;
    let ds = Dataset::from_labelled(&r.labelled);
    if let Some(path) = &a.out {
        let mut dir = OutDir::create(path)?;
        write_scenario(&mut dir, &config_text, &r.scenario)?;
        dir.write(FLOWS_NAME, &flow_summary_csv(&r.flows))?;
        dir.write(DATASET_NAME, &write_dataset(&ds, Vec::new()).map_err(|e| dataset_write_error(path, e))?)?;
        dir.finish(m)?;
    }
    for mm in r.accuracy.mismatches.iter().take(20) {
        log::warn!(
            "mislabelled flow {} epoch {}: got {:?}, truth {:?}",
            mm.key,
            mm.epoch,
            mm.labelled,
            mm.truth
        );
    }
    let mut text = confidence_summary(r.flows.len(), &ds);
    let _ = writeln!(
        text,
        "correct: {}/{}\nlabel accuracy: {:.3}",
        r.accuracy.correct,
        r.accuracy.total,
        r.accuracy.fraction()
    );
    emit(out, &text)
}
