//! Flow feature vectors: 20 numerical and 16 categorical features, with
//! packet statistics split into local and remote directions.
//!
//! Column names and order are frozen in `data/feature_schema_v1.json`.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::capture::{PacketRecord, TcpOptionKinds, PROTO_TCP, PROTO_UDP};
use crate::flow::{Direction, Flow};

pub const SCHEMA_JSON: &str = include_str!("../data/feature_schema_v1.json");

pub const N_NUMERICAL: usize = 20;
pub const N_CATEGORICAL: usize = 16;
pub const N_FEATURES: usize = N_NUMERICAL + N_CATEGORICAL;

pub const NUMERICAL_NAMES: [&str; N_NUMERICAL] = [
    "duration_s",
    "local_pkt_count",
    "local_byte_count",
    "local_pkt_len_min",
    "local_pkt_len_max",
    "local_pkt_len_mean",
    "local_pkt_len_std",
    "local_iat_mean_s",
    "local_tcp_init_win",
    "local_ttl_mode",
    "remote_pkt_count",
    "remote_byte_count",
    "remote_pkt_len_min",
    "remote_pkt_len_max",
    "remote_pkt_len_mean",
    "remote_pkt_len_std",
    "remote_iat_mean_s",
    "remote_tcp_init_win",
    "remote_ttl_mode",
    "byte_ratio",
];

pub const CATEGORICAL_NAMES: [&str; N_CATEGORICAL] = [
    "protocol",
    "local_ip",
    "remote_ip",
    "local_port",
    "remote_port",
    "local_mac",
    "remote_mac",
    "local_tcp_flags",
    "remote_tcp_flags",
    "local_tcp_options",
    "remote_tcp_options",
    "first_pkt_direction",
    "vlan_id",
    "dscp_local",
    "dscp_remote",
    "l4_service",
];

/// Column offsets of the two direction blocks within the numerical features.
pub const LOCAL_BLOCK: usize = 1;
pub const REMOTE_BLOCK: usize = 10;
pub const BYTE_RATIO: usize = 19;
pub const FIRST_PKT_DIRECTION: usize = 11;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("cannot extract features from an empty flow")]
    EmptyFlow,
}

/// Per-direction packet summary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirStats {
    pub pkt_count: u64,
    pub byte_count: u64,
    pub pkt_len_min: f64,
    pub pkt_len_max: f64,
    pub pkt_len_mean: f64,
    pub pkt_len_std: f64,
    pub iat_mean_s: f64,
    pub tcp_init_win: u16,
    pub ttl_mode: u8,
}

impl DirStats {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.pkt_count as f64,
            self.byte_count as f64,
            self.pkt_len_min,
            self.pkt_len_max,
            self.pkt_len_mean,
            self.pkt_len_std,
            self.iat_mean_s,
            self.tcp_init_win as f64,
            self.ttl_mode as f64,
        ]
    }
}

/// Most frequent value; ties go to the smallest.
fn mode<T: Ord + Copy>(values: impl Iterator<Item = T>) -> Option<T> {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    // max_by_key keeps the last maximum, so iterate from the largest key down.
    counts.into_iter().rev().max_by_key(|&(_, c)| c).map(|(v, _)| v)
}

/// Summarises one direction of a flow. Packets are expected in timestamp order.
pub fn summarize_direction(packets: &[PacketRecord]) -> DirStats {
    let n = packets.len();
    if n == 0 {
        return DirStats::default();
    }
    let lens = packets.iter().map(|p| p.ip_total_len as f64);
    let byte_count: u64 = packets.iter().map(|p| p.ip_total_len as u64).sum();
    let mean = byte_count as f64 / n as f64;
    let var = lens.clone().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n as f64;
    let iat_mean_s = if n >= 2 {
        let span = packets[n - 1].ts_us.saturating_sub(packets[0].ts_us);
        span as f64 / 1e6 / (n - 1) as f64
    } else {
        0.0
    };
    DirStats {
        pkt_count: n as u64,
        byte_count,
        pkt_len_min: lens.clone().fold(f64::INFINITY, f64::min),
        pkt_len_max: lens.fold(f64::NEG_INFINITY, f64::max),
        pkt_len_mean: mean,
        pkt_len_std: var.sqrt(),
        iat_mean_s,
        tcp_init_win: packets.iter().find_map(|p| p.tcp_window()).unwrap_or(0),
        ttl_mode: mode(packets.iter().map(|p| p.ttl)).unwrap_or(0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub numerical: [f64; N_NUMERICAL],
    pub categorical: [String; N_CATEGORICAL],
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        NUMERICAL_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.numerical[i])
    }

    pub fn category(&self, name: &str) -> Option<&str> {
        CATEGORICAL_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.categorical[i].as_str())
    }

    pub fn local_stats(&self) -> &[f64] {
        &self.numerical[LOCAL_BLOCK..LOCAL_BLOCK + 9]
    }

    pub fn remote_stats(&self) -> &[f64] {
        &self.numerical[REMOTE_BLOCK..REMOTE_BLOCK + 9]
    }

    pub fn duration_s(&self) -> f64 {
        self.numerical[0]
    }

    pub fn byte_ratio(&self) -> f64 {
        self.numerical[BYTE_RATIO]
    }
}

fn service_name(port: u16) -> &'static str {
    match port {
        20 => "ftp-data",
        21 => "ftp",
        22 => "ssh",
        23 => "telnet",
        25 => "smtp",
        53 => "domain",
        67 => "bootps",
        68 => "bootpc",
        80 => "http",
        110 => "pop3",
        123 => "ntp",
        137 => "netbios-ns",
        143 => "imap",
        161 => "snmp",
        443 => "https",
        465 => "submissions",
        514 => "syslog",
        587 => "submission",
        853 => "domain-s",
        993 => "imaps",
        995 => "pop3s",
        p if p <= 1023 => "well-known",
        _ => "unregistered",
    }
}

fn flags_union(packets: &[PacketRecord]) -> String {
    let bits = packets.iter().fold(0u8, |acc, p| acc | p.tcp_flags().0);
    crate::capture::TcpFlags(bits).letters()
}

fn options_union(packets: &[PacketRecord]) -> String {
    let bits = packets
        .iter()
        .filter_map(|p| p.tcp.map(|t| t.options.0))
        .fold(0u8, |acc, o| acc | o);
    TcpOptionKinds(bits).summary()
}

fn dscp_mode(packets: &[PacketRecord]) -> String {
    mode(packets.iter().map(|p| p.dscp))
        .map(|d| d.to_string())
        .unwrap_or_else(|| "-".to_string())
}

pub fn extract_features(flow: &Flow) -> Result<FeatureVector, FeatureError> {
    if flow.packet_count() == 0 {
        return Err(FeatureError::EmptyFlow);
    }
    let local = summarize_direction(&flow.local_packets);
    let remote = summarize_direction(&flow.remote_packets);
    let total_bytes = local.byte_count + remote.byte_count;
    assert!(total_bytes > 0, "nonempty flow has at least a 20-byte IP header");
    let byte_ratio = local.byte_count as f64 / total_bytes as f64;

    let mut numerical = [0.0; N_NUMERICAL];
    numerical[0] = flow.duration_us() as f64 / 1e6;
    numerical[LOCAL_BLOCK..LOCAL_BLOCK + 9].copy_from_slice(&local.to_array());
    numerical[REMOTE_BLOCK..REMOTE_BLOCK + 9].copy_from_slice(&remote.to_array());
    numerical[BYTE_RATIO] = byte_ratio;

    let (local_mac, remote_mac) = match (flow.local_packets.first(), flow.remote_packets.first()) {
        (Some(p), _) => (p.src_mac, p.dst_mac),
        (None, Some(p)) => (p.dst_mac, p.src_mac),
        (None, None) => unreachable!(),
    };
    let first = match (flow.local_packets.first(), flow.remote_packets.first()) {
        (Some(l), Some(r)) => {
            if flow.first_pkt_direction == Direction::Local { l } else { r }
        }
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (None, None) => unreachable!(),
    };
    let local_port = flow.local_port();
    let remote_port = flow.remote_port();
    let l4_service = if matches!(flow.key.protocol, PROTO_TCP | PROTO_UDP) {
        service_name(local_port.min(remote_port))
    } else {
        "none"
    };

    let categorical = [
        flow.key.protocol.to_string(),
        flow.local_ip.to_string(),
        flow.remote_ip().to_string(),
        local_port.to_string(),
        remote_port.to_string(),
        local_mac.to_string(),
        remote_mac.to_string(),
        flags_union(&flow.local_packets),
        flags_union(&flow.remote_packets),
        options_union(&flow.local_packets),
        options_union(&flow.remote_packets),
        flow.first_pkt_direction.as_str().to_string(),
        first.vlan_id.map(|v| v.to_string()).unwrap_or_else(|| "none".to_string()),
        dscp_mode(&flow.local_packets),
        dscp_mode(&flow.remote_packets),
        l4_service.to_string(),
    ];
    Ok(FeatureVector { numerical, categorical })
}

/// Numerical features as an `n x 20` matrix plus column names.
pub fn numerical_matrix(dataset: &[FeatureVector]) -> (Array2<f64>, Vec<&'static str>) {
    let mut m = Array2::zeros((dataset.len(), N_NUMERICAL));
    for (mut row, fv) in m.rows_mut().into_iter().zip(dataset) {
        for (dst, src) in row.iter_mut().zip(fv.numerical.iter()) {
            *dst = *src;
        }
    }
    (m, NUMERICAL_NAMES.to_vec())
}
