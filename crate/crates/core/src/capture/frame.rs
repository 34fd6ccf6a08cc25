use std::net::Ipv4Addr;

use super::{CaptureError, MacAddr, PacketRecord, TcpFlags, TcpInfo, TcpOptionKinds, LINKTYPE_ETHERNET, PROTO_TCP, PROTO_UDP};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;

/// Result of decoding one link-layer frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Packet(PacketRecord),
    /// A well-formed frame carrying something other than IPv4.
    NotIpv4 { ethertype: u16 },
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn need(bytes: &[u8], len: usize, what: &str) -> Result<(), CaptureError> {
    if bytes.len() < len {
        Err(CaptureError::Decode(format!(
            "{what}: need {len} bytes, frame has {}",
            bytes.len()
        )))
    } else {
        Ok(())
    }
}

fn parse_tcp_options(mut opts: &[u8]) -> TcpOptionKinds {
    let mut kinds = 0u8;
    while let Some(&kind) = opts.first() {
        match kind {
            0 => break,
            1 => opts = &opts[1..],
            _ => {
                let Some(&len) = opts.get(1) else { break };
                let len = len as usize;
                if len < 2 || len > opts.len() {
                    break;
                }
                kinds |= match kind {
                    2 => TcpOptionKinds::MSS,
                    3 => TcpOptionKinds::WSCALE,
                    4 => TcpOptionKinds::SACK_PERM,
                    8 => TcpOptionKinds::TIMESTAMP,
                    _ => 0,
                };
                opts = &opts[len..];
            }
        }
    }
    TcpOptionKinds(kinds)
}

/// Decodes an Ethernet frame (optionally 802.1Q tagged) carrying IPv4.
///
/// Never panics: any byte string yields a record, a non-IPv4 signal, or an error.
pub fn decode_frame(bytes: &[u8], link_type: u32, ts_us: u64) -> Result<Decoded, CaptureError> {
    if link_type != LINKTYPE_ETHERNET {
        return Err(CaptureError::Unsupported(format!("link type {link_type}")));
    }
    need(bytes, 14, "ethernet header")?;
    let mut dst_mac = [0u8; 6];
    let mut src_mac = [0u8; 6];
    dst_mac.copy_from_slice(&bytes[0..6]);
    src_mac.copy_from_slice(&bytes[6..12]);
    let mut ethertype = be16(bytes, 12);
    let mut off = 14;
    let mut vlan_id = None;
    if ethertype == ETHERTYPE_VLAN {
        need(bytes, 18, "802.1Q tag")?;
        let vid = be16(bytes, 14) & 0x0fff;
        if vid == 0x0fff {
            return Err(CaptureError::Decode("reserved VLAN id 4095".into()));
        }
        vlan_id = Some(vid);
        ethertype = be16(bytes, 16);
        off = 18;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return Ok(Decoded::NotIpv4 { ethertype });
    }

    need(bytes, off + 20, "IPv4 header")?;
    let ip = &bytes[off..];
    if ip[0] >> 4 != 4 {
        return Err(CaptureError::Decode(format!("IP version {} in IPv4 frame", ip[0] >> 4)));
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if ihl < 20 {
        return Err(CaptureError::Decode(format!("IPv4 header length {ihl} < 20")));
    }
    need(bytes, off + ihl, "IPv4 options")?;
    let ip_total_len = be16(ip, 2);
    if (ip_total_len as usize) < ihl {
        return Err(CaptureError::Decode(format!(
            "IPv4 total length {ip_total_len} shorter than header {ihl}"
        )));
    }
    let dscp = ip[1] >> 2;
    let fragment_offset = be16(ip, 6) & 0x1fff;
    let ttl = ip[8];
    let protocol = ip[9];
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);

    let l4_off = off + ihl;
    let mut src_port = 0;
    let mut dst_port = 0;
    let mut tcp = None;
    let mut l4_len = 0usize;
    if fragment_offset == 0 {
        match protocol {
            PROTO_TCP => {
                need(bytes, l4_off + 20, "TCP header")?;
                let t = &bytes[l4_off..];
                let doff = ((t[12] >> 4) as usize) * 4;
                if doff < 20 {
                    return Err(CaptureError::Decode(format!("TCP data offset {doff} < 20")));
                }
                need(bytes, l4_off + doff, "TCP options")?;
                src_port = be16(t, 0);
                dst_port = be16(t, 2);
                tcp = Some(TcpInfo {
                    flags: TcpFlags(t[13]),
                    window: be16(t, 14),
                    options: parse_tcp_options(&t[20..doff]),
                });
                l4_len = doff;
            }
            PROTO_UDP => {
                need(bytes, l4_off + 8, "UDP header")?;
                src_port = be16(bytes, l4_off);
                dst_port = be16(bytes, l4_off + 2);
                l4_len = 8;
            }
            _ => {}
        }
    }
    let payload_len = (ip_total_len as usize)
        .checked_sub(ihl + l4_len)
        .ok_or_else(|| {
            CaptureError::Decode(format!(
                "IPv4 total length {ip_total_len} shorter than IP+L4 headers {}",
                ihl + l4_len
            ))
        })?;

    Ok(Decoded::Packet(PacketRecord {
        ts_us,
        src_mac: MacAddr(src_mac),
        dst_mac: MacAddr(dst_mac),
        vlan_id,
        src_ip,
        dst_ip,
        protocol,
        src_port,
        dst_port,
        ip_total_len,
        payload_len: payload_len as u16,
        ttl,
        dscp,
        fragment_offset,
        tcp,
    }))
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)]) as u32)
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

fn encode_tcp_options(kinds: TcpOptionKinds, out: &mut Vec<u8>) {
    let start = out.len();
    if kinds.0 & TcpOptionKinds::MSS != 0 {
        out.extend_from_slice(&[2, 4, 0x05, 0xb4]);
    }
    if kinds.0 & TcpOptionKinds::SACK_PERM != 0 {
        out.extend_from_slice(&[4, 2]);
    }
    if kinds.0 & TcpOptionKinds::TIMESTAMP != 0 {
        out.extend_from_slice(&[8, 10, 0, 0, 0, 0, 0, 0, 0, 0]);
    }
    if kinds.0 & TcpOptionKinds::WSCALE != 0 {
        out.extend_from_slice(&[3, 3, 7]);
    }
    while !(out.len() - start).is_multiple_of(4) {
        out.push(1);
    }
}

/// Builds the Ethernet frame for a record. The payload is zero-filled.
pub fn encode_frame(pkt: &PacketRecord) -> Result<Vec<u8>, CaptureError> {
    pkt.validate().map_err(CaptureError::Unrepresentable)?;
    let mut out = Vec::with_capacity(18 + pkt.ip_total_len as usize);
    out.extend_from_slice(&pkt.dst_mac.0);
    out.extend_from_slice(&pkt.src_mac.0);
    if let Some(vid) = pkt.vlan_id {
        out.extend_from_slice(&ETHERTYPE_VLAN.to_be_bytes());
        out.extend_from_slice(&vid.to_be_bytes());
    }
    out.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

    let ip_start = out.len();
    out.push(0x45);
    out.push(pkt.dscp << 2);
    out.extend_from_slice(&pkt.ip_total_len.to_be_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&pkt.fragment_offset.to_be_bytes());
    out.push(pkt.ttl);
    out.push(pkt.protocol);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&pkt.src_ip.octets());
    out.extend_from_slice(&pkt.dst_ip.octets());
    let csum = ipv4_checksum(&out[ip_start..ip_start + 20]);
    out[ip_start + 10..ip_start + 12].copy_from_slice(&csum.to_be_bytes());

    if pkt.has_l4_header() {
        out.extend_from_slice(&pkt.src_port.to_be_bytes());
        out.extend_from_slice(&pkt.dst_port.to_be_bytes());
        match pkt.tcp {
            Some(tcp) => {
                out.extend_from_slice(&[0; 8]);
                out.push(((tcp.header_len() / 4) as u8) << 4);
                out.push(tcp.flags.0);
                out.extend_from_slice(&tcp.window.to_be_bytes());
                out.extend_from_slice(&[0; 4]);
                encode_tcp_options(tcp.options, &mut out);
            }
            None => {
                out.extend_from_slice(&(8 + pkt.payload_len).to_be_bytes());
                out.extend_from_slice(&[0, 0]);
            }
        }
    }
    out.resize(out.len() + pkt.payload_len as usize, 0);
    Ok(out)
}
