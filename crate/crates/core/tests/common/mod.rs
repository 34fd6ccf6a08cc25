#![allow(dead_code)]

use std::net::Ipv4Addr;

use flowforge_core::capture::{MacAddr, PacketRecord, TcpFlags, TcpInfo, TcpOptionKinds, PROTO_TCP, PROTO_UDP};
use proptest::prelude::*;

pub const SUBNET: &str = "10.0.0.0/24";

/// A few hosts inside and outside `SUBNET`, so flows collide often.
pub fn arb_ip() -> impl Strategy<Value = Ipv4Addr> {
    prop_oneof![
        (1u8..4).prop_map(|h| Ipv4Addr::new(10, 0, 0, h)),
        (1u8..4).prop_map(|h| Ipv4Addr::new(93, 184, 216, h)),
        Just(Ipv4Addr::new(8, 8, 8, 8)),
    ]
}

pub fn arb_port() -> impl Strategy<Value = u16> {
    prop_oneof![Just(443u16), Just(53), 49152u16..49156]
}

prop_compose! {
    pub fn arb_tcp()(flags in any::<u8>(), window in any::<u16>(), opts in 0u8..16) -> TcpInfo {
        TcpInfo { flags: TcpFlags(flags), window, options: TcpOptionKinds(opts) }
    }
}

prop_compose! {
    /// Any record the capture writer can encode.
    pub fn arb_packet(max_ts: u64)(
        ts_us in 0..max_ts,
        src_ip in arb_ip(),
        dst_ip in arb_ip(),
        proto in prop_oneof![4 => Just(PROTO_TCP), 4 => Just(PROTO_UDP), 1 => Just(1u8)],
        src_port in arb_port(),
        dst_port in arb_port(),
        tcp in arb_tcp(),
        fragment in prop_oneof![9 => Just(0u16), 1 => 1u16..0x1fff],
        payload_len in 0u16..400,
        vlan_id in proptest::option::of(0u16..4095),
        ttl in any::<u8>(),
        dscp in 0u8..64,
        mac_a in any::<[u8; 6]>(),
        mac_b in any::<[u8; 6]>(),
    ) -> PacketRecord {
        let has_l4 = fragment == 0 && (proto == PROTO_TCP || proto == PROTO_UDP);
        let tcp = (has_l4 && proto == PROTO_TCP).then_some(tcp);
        let (src_port, dst_port) = if has_l4 { (src_port, dst_port) } else { (0, 0) };
        let mut p = PacketRecord {
            ts_us,
            src_mac: MacAddr(mac_a),
            dst_mac: MacAddr(mac_b),
            vlan_id,
            src_ip,
            dst_ip,
            protocol: proto,
            src_port,
            dst_port,
            ip_total_len: 0,
            payload_len,
            ttl,
            dscp,
            fragment_offset: fragment,
            tcp,
        };
        p.ip_total_len = (20 + p.l4_header_len()) as u16 + payload_len;
        p
    }
}

pub fn arb_packets(max_len: usize, max_ts: u64) -> impl Strategy<Value = Vec<PacketRecord>> {
    proptest::collection::vec(arb_packet(max_ts), 0..max_len)
}
