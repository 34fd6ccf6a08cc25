use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::Path;

use ipnet::Ipv4Net;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::capture::{MacAddr, PROTO_TCP, PROTO_UDP};
use crate::label::Os;

pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../data/default_scenario.toml");

/// The fifteen applications automated on the testbed.
pub const APP_CATALOGUE: [&str; 15] = [
    "Chrome",
    "Safari",
    "Gmail",
    "Apple Mail",
    "Messenger",
    "WhatsApp",
    "Google Maps",
    "Apple Maps",
    "Spotify",
    "SoundCloud",
    "YouTube",
    "Instagram",
    "Twitter",
    "Snapchat",
    "Facebook",
];

pub const ANDROID_ONLY: [&str; 3] = ["Gmail", "Chrome", "Google Maps"];
pub const IOS_ONLY: [&str; 3] = ["Apple Mail", "Apple Maps", "Safari"];

/// Largest gap allowed inside one socket episode, so that an episode is never
/// split by a flow idle timeout of 60 s or more.
pub const MAX_INTRA_EPISODE_GAP_US: u64 = 30_000_000;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid scenario config: {0}")]
    Invalid(String),
    #[error("cannot parse scenario config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot read scenario config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// Closed real interval `[lo, hi]`, sampled uniformly. Written as `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl From<(f64, f64)> for Span {
    fn from((lo, hi): (f64, f64)) -> Self {
        Span { lo, hi }
    }
}

impl From<Span> for (f64, f64) {
    fn from(s: Span) -> Self {
        (s.lo, s.hi)
    }
}

impl Span {
    pub fn new(lo: f64, hi: f64) -> Self {
        Span { lo, hi }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    fn check(&self, what: &str) -> Result<(), ConfigError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo >= 0.0 && self.lo <= self.hi) {
            return invalid(format!("{what}: bad interval [{}, {}]", self.lo, self.hi));
        }
        Ok(())
    }
}

/// Closed integer interval `[lo, hi]`, sampled uniformly. Written as `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(u64, u64)", into = "(u64, u64)")]
pub struct IntSpan {
    pub lo: u64,
    pub hi: u64,
}

impl From<(u64, u64)> for IntSpan {
    fn from((lo, hi): (u64, u64)) -> Self {
        IntSpan { lo, hi }
    }
}

impl From<IntSpan> for (u64, u64) {
    fn from(s: IntSpan) -> Self {
        (s.lo, s.hi)
    }
}

impl IntSpan {
    pub fn new(lo: u64, hi: u64) -> Self {
        IntSpan { lo, hi }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: String,
    pub os: Os,
    pub os_version: String,
    pub local_ip: Ipv4Addr,
    pub mac: MacAddr,
    pub installed_apps: Vec<String>,
    #[serde(default = "default_ttl")]
    pub ttl_default: u8,
}

fn default_ttl() -> u8 {
    64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BurstDirection {
    /// Device to server.
    Up,
    /// Server to device.
    Down,
}

/// A run of packets in one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficBurst {
    pub direction: BurstDirection,
    pub pkt_count: IntSpan,
    /// IPv4 total length in bytes.
    pub pkt_len: IntSpan,
    pub inter_pkt_gap_us: IntSpan,
    pub tcp_window_base: u16,
    /// Pause before the burst's first packet.
    #[serde(default = "default_think_time")]
    pub think_time_us: IntSpan,
}

fn default_think_time() -> IntSpan {
    IntSpan::new(1_000, 50_000)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionModel {
    pub action_name: String,
    pub weight: f64,
    /// Time the action holds the foreground, in seconds.
    pub duration_s: Span,
    /// Parallel sockets the action opens; each replays `steps` independently.
    #[serde(default = "one_connection")]
    pub connections: IntSpan,
    pub steps: Vec<TrafficBurst>,
}

fn one_connection() -> IntSpan {
    IntSpan::new(1, 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppModel {
    pub app_name: String,
    pub os_availability: Vec<Os>,
    pub protocol: u8,
    pub server_endpoints: Vec<(Ipv4Addr, u16)>,
    /// Process name reported for iOS sockets; defaults to the app name without spaces.
    #[serde(default)]
    pub ios_process: Option<String>,
    #[serde(default)]
    pub background_poll_period_s: Option<f64>,
    #[serde(default)]
    pub poll_steps: Vec<TrafficBurst>,
    pub actions: Vec<ActionModel>,
}

impl AppModel {
    pub fn process_name(&self) -> String {
        self.ios_process
            .clone()
            .unwrap_or_else(|| self.app_name.replace(' ', ""))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRate {
    pub device_id: String,
    pub app_name: String,
    #[serde(default)]
    pub lf: f64,
    #[serde(default)]
    pub ef: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    pub subnet: Ipv4Net,
    /// Capture start, microseconds since the Unix epoch.
    #[serde(default = "default_start")]
    pub start_time_us: u64,
    /// Idle time between consecutive foreground actions on a device.
    #[serde(default = "default_idle_gap")]
    pub idle_gap_s: Span,
    pub gateway_mac: MacAddr,
    /// TTL of server packets as seen at the capture point.
    #[serde(default = "default_server_ttl")]
    pub server_ttl: u8,
    /// Cadence of socket-table observations during an open socket.
    #[serde(default = "default_socket_poll")]
    pub socket_poll_interval_s: f64,
    /// Probability that a new socket deliberately reuses a released source port.
    #[serde(default = "default_reuse_prob")]
    pub port_reuse_prob: f64,
    /// A source port is only reused this long after its previous socket closed.
    #[serde(default = "default_reuse_gap")]
    pub port_reuse_min_gap_s: f64,
    pub devices: Vec<DeviceProfile>,
    pub apps: Vec<AppModel>,
    #[serde(default)]
    pub failure_rates: Vec<FailureRate>,
}

fn default_start() -> u64 {
    1_600_000_000_000_000
}
fn default_idle_gap() -> Span {
    Span::new(5.0, 60.0)
}
fn default_server_ttl() -> u8 {
    56
}
fn default_socket_poll() -> f64 {
    5.0
}
fn default_reuse_prob() -> f64 {
    0.05
}
fn default_reuse_gap() -> f64 {
    150.0
}

impl ScenarioConfig {
    /// The built-in five-device, fifteen-app scenario.
    pub fn default_testbed() -> Self {
        Self::from_toml(DEFAULT_CONFIG_TOML).expect("built-in scenario config is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `default` (the built-in scenario) or a TOML file path.
    pub fn load(name: &str) -> Result<Self, ConfigError> {
        if name == "default" {
            return Ok(Self::default_testbed());
        }
        let text = std::fs::read_to_string(Path::new(name)).map_err(|source| ConfigError::Io {
            path: name.to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn app(&self, name: &str) -> Option<&AppModel> {
        self.apps.iter().find(|a| a.app_name == name)
    }

    pub fn app_index(&self, name: &str) -> Option<usize> {
        self.apps.iter().position(|a| a.app_name == name)
    }

    /// `(lf, ef)` for a device/app pair; zero when unlisted.
    pub fn failure_rate(&self, device_id: &str, app_name: &str) -> (f64, f64) {
        self.failure_rates
            .iter()
            .find(|f| f.device_id == device_id && f.app_name == app_name)
            .map(|f| (f.lf, f.ef))
            .unwrap_or((0.0, 0.0))
    }

    pub fn failure_map(&self) -> BTreeMap<(String, String), (f64, f64)> {
        self.failure_rates
            .iter()
            .map(|f| ((f.device_id.clone(), f.app_name.clone()), (f.lf, f.ef)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return invalid(format!("duration_s must be a nonnegative number, got {}", self.duration_s));
        }
        self.idle_gap_s.check("idle_gap_s")?;
        if self.socket_poll_interval_s.is_nan() || self.socket_poll_interval_s <= 0.0 {
            return invalid("socket_poll_interval_s must be positive");
        }
        if !(0.0..=1.0).contains(&self.port_reuse_prob) {
            return invalid("port_reuse_prob must lie in [0, 1]");
        }
        if self.port_reuse_min_gap_s.is_nan() || self.port_reuse_min_gap_s < 0.0 {
            return invalid("port_reuse_min_gap_s must be nonnegative");
        }

        let mut app_names = BTreeSet::new();
        for app in &self.apps {
            self.validate_app(app)?;
            if !app_names.insert(app.app_name.as_str()) {
                return invalid(format!("duplicate app {:?}", app.app_name));
            }
        }

        let mut ips = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for d in &self.devices {
            if !ids.insert(d.device_id.as_str()) {
                return invalid(format!("duplicate device id {:?}", d.device_id));
            }
            if !ips.insert(d.local_ip) {
                return invalid(format!("duplicate device address {}", d.local_ip));
            }
            if !self.subnet.contains(&d.local_ip) {
                return invalid(format!("device {} address {} outside subnet {}", d.device_id, d.local_ip, self.subnet));
            }
            if d.installed_apps.is_empty() {
                return invalid(format!("device {} has no installed apps", d.device_id));
            }
            for name in &d.installed_apps {
                let Some(app) = self.app(name) else {
                    return invalid(format!("device {} installs unknown app {name:?}", d.device_id));
                };
                if !app.os_availability.contains(&d.os) {
                    return invalid(format!("{name} is not available on {} ({})", d.os, d.device_id));
                }
            }
            let total: f64 = d
                .installed_apps
                .iter()
                .filter_map(|n| self.app(n))
                .flat_map(|a| a.actions.iter().map(|x| x.weight))
                .sum();
            if total.is_nan() || total <= 0.0 {
                return invalid(format!("device {} has no action with positive weight", d.device_id));
            }
        }

        for f in &self.failure_rates {
            if !(0.0..=1.0).contains(&f.lf) || !(0.0..=1.0).contains(&f.ef) {
                return invalid(format!("failure rates for {}/{} must lie in [0, 1]", f.device_id, f.app_name));
            }
        }
        Ok(())
    }

    fn validate_app(&self, app: &AppModel) -> Result<(), ConfigError> {
        let name = &app.app_name;
        if app.os_availability.is_empty() {
            return invalid(format!("{name}: os_availability is empty"));
        }
        let expected_only = if ANDROID_ONLY.contains(&name.as_str()) {
            Some(Os::Android)
        } else if IOS_ONLY.contains(&name.as_str()) {
            Some(Os::Ios)
        } else {
            None
        };
        if let Some(os) = expected_only {
            if app.os_availability != [os] {
                return invalid(format!("{name} must only be available on {os}"));
            }
        }
        if !matches!(app.protocol, PROTO_TCP | PROTO_UDP) {
            return invalid(format!("{name}: protocol must be 6 or 17"));
        }
        if app.server_endpoints.is_empty() {
            return invalid(format!("{name}: no server endpoints"));
        }
        for (ip, port) in &app.server_endpoints {
            if self.subnet.contains(ip) {
                return invalid(format!("{name}: server {ip} lies inside the testbed subnet"));
            }
            if *port == 0 {
                return invalid(format!("{name}: server port 0"));
            }
        }
        if app.actions.is_empty() {
            return invalid(format!("{name}: no actions"));
        }
        let min_len = if app.protocol == PROTO_TCP { 40 } else { 28 };
        let check_steps = |what: &str, steps: &[TrafficBurst]| -> Result<(), ConfigError> {
            if steps.is_empty() {
                return invalid(format!("{name}/{what}: no steps"));
            }
            for s in steps {
                if s.pkt_count.lo < 1 || s.pkt_count.lo > s.pkt_count.hi {
                    return invalid(format!("{name}/{what}: pkt_count must be >= 1"));
                }
                if s.pkt_len.lo < min_len.max(40) || s.pkt_len.hi > 1500 || s.pkt_len.lo > s.pkt_len.hi {
                    return invalid(format!("{name}/{what}: pkt_len must lie within [40, 1500]"));
                }
                if s.inter_pkt_gap_us.lo < 1 || s.inter_pkt_gap_us.lo > s.inter_pkt_gap_us.hi {
                    return invalid(format!("{name}/{what}: inter_pkt_gap_us must be >= 1"));
                }
                if s.think_time_us.lo < 1 || s.think_time_us.lo > s.think_time_us.hi {
                    return invalid(format!("{name}/{what}: think_time_us must be >= 1"));
                }
                if s.inter_pkt_gap_us.hi > MAX_INTRA_EPISODE_GAP_US || s.think_time_us.hi > MAX_INTRA_EPISODE_GAP_US {
                    return invalid(format!("{name}/{what}: gaps above {MAX_INTRA_EPISODE_GAP_US} µs"));
                }
            }
            Ok(())
        };
        for a in &app.actions {
            if !(a.weight >= 0.0 && a.weight.is_finite()) {
                return invalid(format!("{name}/{}: weight must be nonnegative", a.action_name));
            }
            a.duration_s.check(&format!("{name}/{} duration_s", a.action_name))?;
            if a.connections.lo < 1 || a.connections.lo > a.connections.hi || a.connections.hi > 64 {
                return invalid(format!("{name}/{}: connections must lie within [1, 64]", a.action_name));
            }
            check_steps(&a.action_name, &a.steps)?;
        }
        if let Some(p) = app.background_poll_period_s {
            if !(p > 0.0 && p.is_finite()) {
                return invalid(format!("{name}: background_poll_period_s must be positive"));
            }
            check_steps("background poll", &app.poll_steps)?;
        }
        Ok(())
    }
}
