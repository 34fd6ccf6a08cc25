//! Launch-failure (LF) and execution-failure (EF) rates from automation run logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    LaunchFailure,
    ExecutionFailure,
}

/// One automation attempt. Serialized as a run-log line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub ts_us: u64,
    pub device_id: String,
    #[serde(rename = "app")]
    pub app_name: String,
    #[serde(rename = "action")]
    pub action_name: String,
    pub outcome: Outcome,
}

/// Denominator used for the EF percentage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EfDenominator {
    /// All attempts.
    #[default]
    All,
    /// Attempts that launched (attempts minus launch failures).
    Launched,
}

impl FromStr for EfDenominator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Self::All),
            "launched" => Ok(Self::Launched),
            _ => Err(format!("unknown EF denominator {s:?} (expected all|launched)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub attempts: u64,
    pub successes: u64,
    pub lf_count: u64,
    pub ef_count: u64,
}

impl Counts {
    fn add(&mut self, outcome: Outcome) {
        self.attempts += 1;
        match outcome {
            Outcome::Success => self.successes += 1,
            Outcome::LaunchFailure => self.lf_count += 1,
            Outcome::ExecutionFailure => self.ef_count += 1,
        }
    }

    fn merge(&mut self, other: &Counts) {
        self.attempts += other.attempts;
        self.successes += other.successes;
        self.lf_count += other.lf_count;
        self.ef_count += other.ef_count;
    }

    pub fn lf_pct(&self) -> f64 {
        pct(self.lf_count, self.attempts)
    }

    pub fn ef_pct(&self, denom: EfDenominator) -> f64 {
        match denom {
            EfDenominator::All => pct(self.ef_count, self.attempts),
            EfDenominator::Launched => pct(self.ef_count, self.attempts - self.lf_count),
        }
    }

    /// True when the EF denominator is zero and the percentage was reported as 0.
    pub fn zero_attempts(&self, denom: EfDenominator) -> bool {
        match denom {
            EfDenominator::All => self.attempts == 0,
            EfDenominator::Launched => self.attempts == self.lf_count,
        }
    }
}

fn pct(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReliabilityReport {
    pub by_device_app: BTreeMap<(String, String), Counts>,
    pub by_device: BTreeMap<String, Counts>,
    pub by_app: BTreeMap<String, Counts>,
    pub ef_denominator: EfDenominator,
}

impl ReliabilityReport {
    pub fn is_empty(&self) -> bool {
        self.by_device_app.is_empty()
    }
}

pub fn compute_reliability(run_log: &[ActionRecord], ef_denominator: EfDenominator) -> ReliabilityReport {
    let mut by_device_app: BTreeMap<(String, String), Counts> = BTreeMap::new();
    for r in run_log {
        by_device_app
            .entry((r.device_id.clone(), r.app_name.clone()))
            .or_default()
            .add(r.outcome);
    }
    let mut by_device: BTreeMap<String, Counts> = BTreeMap::new();
    let mut by_app: BTreeMap<String, Counts> = BTreeMap::new();
    for ((dev, app), c) in &by_device_app {
        by_device.entry(dev.clone()).or_default().merge(c);
        by_app.entry(app.clone()).or_default().merge(c);
    }
    ReliabilityReport {
        by_device_app,
        by_device,
        by_app,
        ef_denominator,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            _ => Err(format!("unknown format {s:?} (expected table|csv)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grouping {
    App,
    Device,
    DeviceApp,
}

impl Grouping {
    fn label(self) -> &'static str {
        match self {
            Grouping::App => "Application",
            Grouping::Device => "Device",
            Grouping::DeviceApp => "Device/Application",
        }
    }
}

/// Rounds to `sig` significant figures and prints without trailing noise.
pub fn format_sig(v: f64, sig: u32) -> String {
    if v == 0.0 || !v.is_finite() {
        return "0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - magnitude).max(0) as usize;
    let factor = 10f64.powi(sig as i32 - 1 - magnitude);
    let rounded = (v * factor).round() / factor;
    format!("{rounded:.decimals$}")
}

fn format_pct(v: f64, grouping: Grouping) -> String {
    match grouping {
        Grouping::App => format_sig(v, 2),
        Grouping::Device | Grouping::DeviceApp => format!("{v:.3}"),
    }
}

fn rows(report: &ReliabilityReport, grouping: Grouping) -> Vec<(String, Counts)> {
    match grouping {
        Grouping::App => report.by_app.iter().map(|(k, c)| (k.clone(), *c)).collect(),
        Grouping::Device => report.by_device.iter().map(|(k, c)| (k.clone(), *c)).collect(),
        Grouping::DeviceApp => report
            .by_device_app
            .iter()
            .map(|((d, a), c)| (format!("{d}/{a}"), *c))
            .collect(),
    }
}

/// Renders one grouping. Columns: name, EF %, LF %; CSV adds the raw counts.
pub fn render_reliability(report: &ReliabilityReport, format: ReportFormat, grouping: Grouping) -> String {
    let denom = report.ef_denominator;
    let rows = rows(report, grouping);
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("name,ef_pct,lf_pct,attempts,ef_count,lf_count\n");
            for (name, c) in rows {
                let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
                w.write_record([
                    name,
                    format_pct(c.ef_pct(denom), grouping),
                    format_pct(c.lf_pct(), grouping),
                    c.attempts.to_string(),
                    c.ef_count.to_string(),
                    c.lf_count.to_string(),
                ])
                .expect("in-memory write");
                out.push_str(std::str::from_utf8(&w.into_inner().expect("in-memory flush")).expect("utf8"));
            }
        }
        ReportFormat::Table => {
            let width = rows
                .iter()
                .map(|(n, _)| n.len())
                .chain([grouping.label().len()])
                .max()
                .unwrap_or(0);
            let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}", grouping.label(), "EF %", "LF %");
            for (name, c) in rows {
                let flag = if c.zero_attempts(denom) { "  (no attempts)" } else { "" };
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>8}  {:>8}{flag}",
                    name,
                    format_pct(c.ef_pct(denom), grouping),
                    format_pct(c.lf_pct(), grouping)
                );
            }
        }
    }
    out
}
