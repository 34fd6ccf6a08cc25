//! Bidirectional 5-tuple flow assembly with an idle timeout.

use std::collections::HashMap;
use std::fmt;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use crate::capture::PacketRecord;

pub const DEFAULT_IDLE_TIMEOUT_S: f64 = 60.0;

/// Canonical 5-tuple: `(ip_a, port_a) <= (ip_b, port_b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub ip_a: Ipv4Addr,
    pub port_a: u16,
    pub ip_b: Ipv4Addr,
    pub port_b: u16,
    pub protocol: u8,
}

impl FlowKey {
    pub fn new(src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), protocol: u8) -> (Self, KeyDirection) {
        if src <= dst {
            (
                FlowKey { ip_a: src.0, port_a: src.1, ip_b: dst.0, port_b: dst.1, protocol },
                KeyDirection::AtoB,
            )
        } else {
            (
                FlowKey { ip_a: dst.0, port_a: dst.1, ip_b: src.0, port_b: src.1, protocol },
                KeyDirection::BtoA,
            )
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} <-> {}:{} proto {}",
            self.ip_a, self.port_a, self.ip_b, self.port_b, self.protocol
        )
    }
}

/// Orientation of a packet relative to its canonical key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyDirection {
    /// Sent by endpoint a. Also used when both endpoints are identical.
    AtoB,
    BtoA,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Local,
    Remote,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Local => Direction::Remote,
            Direction::Remote => Direction::Local,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Local => "local",
            Direction::Remote => "remote",
        }
    }
}

/// Where a flow's endpoints sit relative to the capture subnet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowScope {
    /// Exactly one endpoint inside the subnet.
    Local,
    /// Both endpoints inside; local is the sender of the first packet.
    Internal,
    /// Neither endpoint inside; excluded from labelling.
    Foreign,
}

pub fn canonical_key(pkt: &PacketRecord) -> (FlowKey, KeyDirection) {
    FlowKey::new((pkt.src_ip, pkt.src_port), (pkt.dst_ip, pkt.dst_port), pkt.protocol)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flow {
    pub key: FlowKey,
    /// Number of earlier flows with the same key.
    pub epoch: u32,
    pub first_ts_us: u64,
    pub last_ts_us: u64,
    pub local_ip: Ipv4Addr,
    pub local_packets: Vec<PacketRecord>,
    pub remote_packets: Vec<PacketRecord>,
    pub first_pkt_direction: Direction,
    pub scope: FlowScope,
}

impl Flow {
    pub fn packet_count(&self) -> usize {
        self.local_packets.len() + self.remote_packets.len()
    }

    pub fn duration_us(&self) -> u64 {
        self.last_ts_us - self.first_ts_us
    }

    pub fn is_foreign(&self) -> bool {
        self.scope == FlowScope::Foreign
    }

    /// The endpoint opposite `local_ip`.
    pub fn remote_ip(&self) -> Ipv4Addr {
        if self.key.ip_a == self.local_ip {
            self.key.ip_b
        } else {
            self.key.ip_a
        }
    }

    /// Port on the local endpoint.
    pub fn local_port(&self) -> u16 {
        match (self.local_packets.first(), self.remote_packets.first()) {
            (Some(p), _) => p.src_port,
            (None, Some(p)) => p.dst_port,
            (None, None) => 0,
        }
    }

    pub fn remote_port(&self) -> u16 {
        match (self.local_packets.first(), self.remote_packets.first()) {
            (Some(p), _) => p.dst_port,
            (None, Some(p)) => p.src_port,
            (None, None) => 0,
        }
    }

    fn new(key: FlowKey, epoch: u32, first: &PacketRecord, subnet: &Ipv4Net) -> Self {
        let src_in = subnet.contains(&first.src_ip);
        let dst_in = subnet.contains(&first.dst_ip);
        let (local_ip, scope) = match (src_in, dst_in) {
            (true, false) => (first.src_ip, FlowScope::Local),
            (false, true) => (first.dst_ip, FlowScope::Local),
            (true, true) => (first.src_ip, FlowScope::Internal),
            (false, false) => (first.src_ip, FlowScope::Foreign),
        };
        let first_pkt_direction = if first.src_ip == local_ip {
            Direction::Local
        } else {
            Direction::Remote
        };
        Flow {
            key,
            epoch,
            first_ts_us: first.ts_us,
            last_ts_us: first.ts_us,
            local_ip,
            local_packets: Vec::new(),
            remote_packets: Vec::new(),
            first_pkt_direction,
            scope,
        }
    }

    fn push(&mut self, pkt: PacketRecord) {
        self.last_ts_us = self.last_ts_us.max(pkt.ts_us);
        if pkt.src_ip == self.local_ip {
            self.local_packets.push(pkt);
        } else {
            self.remote_packets.push(pkt);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssemblerConfig {
    pub subnet: Ipv4Net,
    pub idle_timeout_s: f64,
}

impl AssemblerConfig {
    pub fn new(subnet: Ipv4Net, idle_timeout_s: f64) -> Self {
        Self { subnet, idle_timeout_s }
    }

    pub fn idle_timeout_us(&self) -> u64 {
        (self.idle_timeout_s * 1e6).round() as u64
    }
}

/// Groups packets into bidirectional flows.
///
/// Input order does not matter: packets are sorted by timestamp, with the
/// full record as tie-breaker, before the fold. A gap strictly greater than
/// the idle timeout starts a new epoch of the same key.
pub fn assemble_flows(packets: &[PacketRecord], config: &AssemblerConfig) -> Vec<Flow> {
    let timeout = config.idle_timeout_us();
    let mut sorted: Vec<&PacketRecord> = packets.iter().collect();
    sorted.sort_unstable_by(|a, b| a.ts_us.cmp(&b.ts_us).then_with(|| a.cmp(b)));

    let mut flows: Vec<Flow> = Vec::new();
    // key -> (index of the open flow, next epoch number)
    let mut open: HashMap<FlowKey, (usize, u32)> = HashMap::new();
    for pkt in sorted {
        let (key, _) = canonical_key(pkt);
        let idx = match open.get_mut(&key) {
            Some((idx, _)) if pkt.ts_us - flows[*idx].last_ts_us <= timeout => *idx,
            Some((idx, next_epoch)) => {
                flows.push(Flow::new(key, *next_epoch, pkt, &config.subnet));
                *idx = flows.len() - 1;
                *next_epoch += 1;
                *idx
            }
            None => {
                flows.push(Flow::new(key, 0, pkt, &config.subnet));
                open.insert(key, (flows.len() - 1, 1));
                flows.len() - 1
            }
        };
        flows[idx].push(pkt.clone());
    }
    flows.sort_by(|a, b| {
        (a.first_ts_us, a.key, a.epoch).cmp(&(b.first_ts_us, b.key, b.epoch))
    });
    flows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{MacAddr, PROTO_TCP, PROTO_UDP};

    fn pkt(ts: u64, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), proto: u8) -> PacketRecord {
        PacketRecord {
            ts_us: ts,
            src_mac: MacAddr::default(),
            dst_mac: MacAddr::default(),
            vlan_id: None,
            src_ip: src.0,
            dst_ip: dst.0,
            protocol: proto,
            src_port: src.1,
            dst_port: dst.1,
            ip_total_len: 28,
            payload_len: 0,
            ttl: 64,
            dscp: 0,
            fragment_offset: 0,
            tcp: None,
        }
    }

    const DEV: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);
    const SRV: Ipv4Addr = Ipv4Addr::new(93, 184, 216, 34);

    fn cfg() -> AssemblerConfig {
        AssemblerConfig::new("10.0.0.0/24".parse().unwrap(), 60.0)
    }

    #[test]
    fn reverse_packets_share_a_key() {
        let a = pkt(0, (DEV, 50000), (SRV, 443), PROTO_TCP);
        let b = pkt(1, (SRV, 443), (DEV, 50000), PROTO_TCP);
        let (ka, da) = canonical_key(&a);
        let (kb, db) = canonical_key(&b);
        assert_eq!(ka, kb);
        assert_ne!(da, db);
    }

    #[test]
    fn self_addressed_packet_is_local() {
        let p = pkt(0, (DEV, 7), (DEV, 7), PROTO_UDP);
        let (k, d) = canonical_key(&p);
        assert_eq!((k.ip_a, k.ip_b), (DEV, DEV));
        assert_eq!(d, KeyDirection::AtoB);
        let flows = assemble_flows(&[p], &cfg());
        assert_eq!(flows[0].first_pkt_direction, Direction::Local);
        assert_eq!(flows[0].local_packets.len(), 1);
        assert_eq!(flows[0].scope, FlowScope::Internal);
    }

    #[test]
    fn empty_and_single() {
        assert!(assemble_flows(&[], &cfg()).is_empty());
        let flows = assemble_flows(&[pkt(5, (DEV, 1), (SRV, 2), PROTO_UDP)], &cfg());
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].first_ts_us, flows[0].last_ts_us);
        assert_eq!(flows[0].duration_us(), 0);
        assert_eq!(flows[0].local_ip, DEV);
        assert_eq!(flows[0].local_port(), 1);
        assert_eq!(flows[0].remote_port(), 2);
    }

    #[test]
    fn idle_gap_splits_epochs() {
        let a = pkt(0, (DEV, 50000), (SRV, 443), PROTO_UDP);
        let b = pkt(120_000_000, (SRV, 443), (DEV, 50000), PROTO_UDP);
        let flows = assemble_flows(&[b, a], &cfg());
        assert_eq!(flows.len(), 2);
        assert_eq!((flows[0].epoch, flows[1].epoch), (0, 1));
        assert_eq!(flows[1].first_pkt_direction, Direction::Remote);
        assert_eq!(flows[1].local_ip, DEV);
    }

    #[test]
    fn gap_equal_to_timeout_does_not_split() {
        let a = pkt(0, (DEV, 50000), (SRV, 443), PROTO_UDP);
        let b = pkt(60_000_000, (DEV, 50000), (SRV, 443), PROTO_UDP);
        assert_eq!(assemble_flows(&[a, b], &cfg()).len(), 1);
    }

    #[test]
    fn foreign_flows_are_flagged() {
        let p = pkt(0, (SRV, 1), (Ipv4Addr::new(1, 1, 1, 1), 2), PROTO_UDP);
        let flows = assemble_flows(&[p], &cfg());
        assert!(flows[0].is_foreign());
    }
}
