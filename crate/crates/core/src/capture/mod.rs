//! Classic pcap capture files and Ethernet/IPv4 header decoding.
//!
//! Only the fields needed for 5-tuple flow keys and flow features are kept.
//! Payload bytes are never retained: the writer pads frames with zeros so
//! `ip_total_len` stays truthful on disk.

mod frame;
mod pcap;

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

pub use frame::{decode_frame, encode_frame, Decoded};
pub use pcap::{read_capture, read_capture_from, write_capture, write_capture_to, Capture, PcapReader, PcapWriter};

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed pcap global header: {0}")]
    Format(String),
    #[error("unsupported capture: {0}")]
    Unsupported(String),
    #[error("truncated record at byte offset {offset}: {detail}")]
    Truncated { offset: u64, detail: String },
    #[error("frame decode error: {0}")]
    Decode(String),
    #[error("packet cannot be encoded: {0}")]
    Unrepresentable(String),
}

impl CaptureError {
    pub(crate) fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        CaptureError::Io {
            path: path.to_string(),
            source,
        }
    }
}

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacAddr(pub [u8; 6]);

impl Serialize for MacAddr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl std::str::FromStr for MacAddr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for b in out.iter_mut() {
            let p = parts.next().ok_or_else(|| format!("bad MAC address {s:?}"))?;
            *b = u8::from_str_radix(p, 16).map_err(|_| format!("bad MAC address {s:?}"))?;
        }
        if parts.next().is_some() {
            return Err(format!("bad MAC address {s:?}"));
        }
        Ok(MacAddr(out))
    }
}

/// TCP flag bits in header order.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TcpFlags(pub u8);

impl TcpFlags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;
    pub const ECE: u8 = 0x40;
    pub const CWR: u8 = 0x80;

    const LETTERS: [(u8, char); 8] = [
        (Self::FIN, 'F'),
        (Self::SYN, 'S'),
        (Self::RST, 'R'),
        (Self::PSH, 'P'),
        (Self::ACK, 'A'),
        (Self::URG, 'U'),
        (Self::ECE, 'E'),
        (Self::CWR, 'C'),
    ];

    pub fn contains(self, bit: u8) -> bool {
        self.0 & bit == bit
    }

    /// Letters for the set bits, in `FSRPAUEC` order.
    pub fn letters(self) -> String {
        Self::LETTERS
            .iter()
            .filter(|(bit, _)| self.0 & bit != 0)
            .map(|(_, c)| *c)
            .collect()
    }
}

impl fmt::Debug for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TcpFlags({})", self.letters())
    }
}

/// Kinds of TCP options seen on a segment. Values are not retained.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Debug)]
pub struct TcpOptionKinds(pub u8);

impl TcpOptionKinds {
    pub const MSS: u8 = 0x01;
    pub const WSCALE: u8 = 0x02;
    pub const SACK_PERM: u8 = 0x04;
    pub const TIMESTAMP: u8 = 0x08;

    const NAMES: [(u8, &'static str); 4] = [
        (Self::MSS, "MSS"),
        (Self::WSCALE, "WS"),
        (Self::SACK_PERM, "SACK"),
        (Self::TIMESTAMP, "TS"),
    ];

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// `+`-joined option names, or `-` when none.
    pub fn summary(self) -> String {
        let names: Vec<&str> = Self::NAMES
            .iter()
            .filter(|(bit, _)| self.0 & bit != 0)
            .map(|(_, n)| *n)
            .collect();
        if names.is_empty() {
            "-".to_string()
        } else {
            names.join("+")
        }
    }

    /// Encoded option block length including NOP padding to a 4-byte boundary.
    pub fn encoded_len(self) -> usize {
        let mut n: usize = 0;
        if self.0 & Self::MSS != 0 {
            n += 4;
        }
        if self.0 & Self::WSCALE != 0 {
            n += 3;
        }
        if self.0 & Self::SACK_PERM != 0 {
            n += 2;
        }
        if self.0 & Self::TIMESTAMP != 0 {
            n += 10;
        }
        n.div_ceil(4) * 4
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TcpInfo {
    pub flags: TcpFlags,
    pub window: u16,
    pub options: TcpOptionKinds,
}

impl TcpInfo {
    pub fn header_len(&self) -> usize {
        20 + self.options.encoded_len()
    }
}

/// One captured IPv4 packet.
///
/// `tcp` is present iff `protocol == 6` and the TCP header was captured; a
/// non-first IP fragment carries no L4 header, so it has `tcp == None` and
/// zero ports even when the protocol is TCP.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PacketRecord {
    pub ts_us: u64,
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub vlan_id: Option<u16>,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub protocol: u8,
    pub src_port: u16,
    pub dst_port: u16,
    pub ip_total_len: u16,
    pub payload_len: u16,
    pub ttl: u8,
    pub dscp: u8,
    /// Fragment offset in 8-byte units.
    pub fragment_offset: u16,
    pub tcp: Option<TcpInfo>,
}

impl PacketRecord {
    pub fn is_tcp(&self) -> bool {
        self.protocol == PROTO_TCP
    }

    pub fn has_l4_header(&self) -> bool {
        self.fragment_offset == 0 && matches!(self.protocol, PROTO_TCP | PROTO_UDP)
    }

    /// Length of the L4 header implied by this record.
    pub fn l4_header_len(&self) -> usize {
        if !self.has_l4_header() {
            return 0;
        }
        match (self.protocol, self.tcp) {
            (PROTO_TCP, Some(t)) => t.header_len(),
            (PROTO_TCP, None) => 20,
            _ => 8,
        }
    }

    pub fn tcp_flags(&self) -> TcpFlags {
        self.tcp.map(|t| t.flags).unwrap_or_default()
    }

    pub fn tcp_window(&self) -> Option<u16> {
        self.tcp.map(|t| t.window)
    }

    /// Checks the invariants every decodable record satisfies.
    pub fn validate(&self) -> Result<(), String> {
        if self.payload_len > self.ip_total_len {
            return Err("payload_len exceeds ip_total_len".into());
        }
        if !self.has_l4_header() && (self.src_port != 0 || self.dst_port != 0) {
            return Err("ports must be 0 without a TCP/UDP header".into());
        }
        if self.has_l4_header() && self.is_tcp() != self.tcp.is_some() {
            return Err("tcp info must be present iff the packet carries a TCP header".into());
        }
        if !self.has_l4_header() && self.tcp.is_some() {
            return Err("tcp info present on a packet without a TCP header".into());
        }
        if self.dscp > 63 {
            return Err("dscp out of range".into());
        }
        if matches!(self.vlan_id, Some(v) if v > 4094) {
            return Err("vlan id out of range".into());
        }
        if self.fragment_offset > 0x1fff {
            return Err("fragment offset out of range".into());
        }
        let expected = 20 + self.l4_header_len() + self.payload_len as usize;
        if expected != self.ip_total_len as usize {
            return Err(format!(
                "ip_total_len {} != 20 + L4 header {} + payload {}",
                self.ip_total_len,
                self.l4_header_len(),
                self.payload_len
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub link_type: u32,
    /// Timestamp resolution of the source file in nanoseconds per tick (1000 for µs files).
    pub ts_resolution_ns: u32,
    /// Number of records in the file, decoded or not.
    pub packet_count: u64,
}

/// Records present in the file but not returned as `PacketRecord`s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub non_ipv4: u64,
    pub malformed: u64,
}

impl SkipCounts {
    pub fn total(&self) -> u64 {
        self.non_ipv4 + self.malformed
    }
}
