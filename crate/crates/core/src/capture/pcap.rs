use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::frame::{decode_frame, encode_frame, Decoded};
use super::{CaptureError, CaptureMeta, PacketRecord, SkipCounts, LINKTYPE_ETHERNET};

const MAGIC_US: u32 = 0xa1b2_c3d4;
const MAGIC_NS: u32 = 0xa1b2_3c4d;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const SNAPLEN: u32 = 262_144;
/// Larger records than this are treated as corruption rather than allocated.
const MAX_RECORD_LEN: u32 = 1 << 20;

/// Decoded contents of a capture file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capture {
    pub meta: CaptureMeta,
    pub packets: Vec<PacketRecord>,
    pub skipped: SkipCounts,
}

/// Reads as many bytes as available up to `buf.len()`.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// One raw record as stored in the file.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub offset: u64,
    pub ts_us: u64,
    pub orig_len: u32,
    pub data: Vec<u8>,
}

/// Streaming reader over the records of a classic pcap file.
pub struct PcapReader<R> {
    inner: R,
    swapped: bool,
    nanos: bool,
    link_type: u32,
    offset: u64,
    source: String,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R, source: impl Into<String>) -> Result<Self, CaptureError> {
        let source = source.into();
        let mut hdr = [0u8; GLOBAL_HEADER_LEN];
        let got = read_full(&mut inner, &mut hdr).map_err(|e| CaptureError::io(&source, e))?;
        if got < GLOBAL_HEADER_LEN {
            return Err(CaptureError::Format(format!(
                "file is {got} bytes, shorter than the 24-byte global header"
            )));
        }
        let magic = u32::from_le_bytes([hdr[0], hdr[1], hdr[2], hdr[3]]);
        let (swapped, nanos) = match magic {
            MAGIC_US => (false, false),
            MAGIC_NS => (false, true),
            m if m.swap_bytes() == MAGIC_US => (true, false),
            m if m.swap_bytes() == MAGIC_NS => (true, true),
            m => return Err(CaptureError::Format(format!("bad magic 0x{m:08x}"))),
        };
        let rd16 = |at: usize| {
            let v = u16::from_le_bytes([hdr[at], hdr[at + 1]]);
            if swapped { v.swap_bytes() } else { v }
        };
        let rd32 = |at: usize| {
            let v = u32::from_le_bytes([hdr[at], hdr[at + 1], hdr[at + 2], hdr[at + 3]]);
            if swapped { v.swap_bytes() } else { v }
        };
        let major = rd16(4);
        if major != 2 {
            return Err(CaptureError::Format(format!("unsupported version {major}.{}", rd16(6))));
        }
        // Upper bits of the network field may carry FCS metadata.
        let link_type = rd32(20) & 0x0fff_ffff;
        if link_type != LINKTYPE_ETHERNET {
            return Err(CaptureError::Unsupported(format!(
                "link type {link_type} (only Ethernet is supported)"
            )));
        }
        Ok(Self {
            inner,
            swapped,
            nanos,
            link_type,
            offset: GLOBAL_HEADER_LEN as u64,
            source,
        })
    }

    pub fn link_type(&self) -> u32 {
        self.link_type
    }

    pub fn ts_resolution_ns(&self) -> u32 {
        if self.nanos { 1 } else { 1000 }
    }

    fn u32_at(&self, b: &[u8], at: usize) -> u32 {
        let v = u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]]);
        if self.swapped { v.swap_bytes() } else { v }
    }

    /// Next raw record, `None` at a clean end of file.
    pub fn next_record(&mut self) -> Result<Option<RawRecord>, CaptureError> {
        let start = self.offset;
        let mut hdr = [0u8; RECORD_HEADER_LEN];
        let got = read_full(&mut self.inner, &mut hdr).map_err(|e| CaptureError::io(&self.source, e))?;
        if got == 0 {
            return Ok(None);
        }
        if got < RECORD_HEADER_LEN {
            return Err(CaptureError::Truncated {
                offset: start,
                detail: format!("record header has {got} of 16 bytes"),
            });
        }
        let ts_sec = self.u32_at(&hdr, 0) as u64;
        let ts_frac = self.u32_at(&hdr, 4) as u64;
        let incl_len = self.u32_at(&hdr, 8);
        let orig_len = self.u32_at(&hdr, 12);
        if incl_len > MAX_RECORD_LEN {
            return Err(CaptureError::Truncated {
                offset: start,
                detail: format!("implausible captured length {incl_len}"),
            });
        }
        let mut data = vec![0u8; incl_len as usize];
        let got = read_full(&mut self.inner, &mut data).map_err(|e| CaptureError::io(&self.source, e))?;
        if got < data.len() {
            return Err(CaptureError::Truncated {
                offset: start,
                detail: format!("record data has {got} of {incl_len} bytes"),
            });
        }
        self.offset += (RECORD_HEADER_LEN + data.len()) as u64;
        let ts_us = ts_sec * 1_000_000 + if self.nanos { ts_frac / 1000 } else { ts_frac };
        Ok(Some(RawRecord {
            offset: start,
            ts_us,
            orig_len,
            data,
        }))
    }

    /// Reads and decodes every remaining record.
    pub fn read_all(mut self) -> Result<Capture, CaptureError> {
        let mut packets = Vec::new();
        let mut skipped = SkipCounts::default();
        let mut count = 0u64;
        while let Some(rec) = self.next_record()? {
            count += 1;
            match decode_frame(&rec.data, self.link_type, rec.ts_us) {
                Ok(Decoded::Packet(p)) => packets.push(p),
                Ok(Decoded::NotIpv4 { .. }) => skipped.non_ipv4 += 1,
                Err(e) => {
                    log::debug!("{}: record at offset {}: {e}", self.source, rec.offset);
                    skipped.malformed += 1;
                }
            }
        }
        if skipped.total() > 0 {
            log::info!(
                "{}: skipped {} non-IPv4 and {} malformed records",
                self.source,
                skipped.non_ipv4,
                skipped.malformed
            );
        }
        Ok(Capture {
            meta: CaptureMeta {
                link_type: self.link_type,
                ts_resolution_ns: self.ts_resolution_ns(),
                packet_count: count,
            },
            packets,
            skipped,
        })
    }
}

pub fn read_capture(path: impl AsRef<Path>) -> Result<Capture, CaptureError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CaptureError::io(path.display(), e))?;
    PcapReader::new(BufReader::new(file), path.display().to_string())?.read_all()
}

pub fn read_capture_from<R: Read>(reader: R) -> Result<Capture, CaptureError> {
    PcapReader::new(reader, "<stream>")?.read_all()
}

/// Writes microsecond-resolution little-endian pcap.
pub struct PcapWriter<W: Write> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W) -> std::io::Result<Self> {
        let mut hdr = Vec::with_capacity(GLOBAL_HEADER_LEN);
        hdr.extend_from_slice(&MAGIC_US.to_le_bytes());
        hdr.extend_from_slice(&2u16.to_le_bytes());
        hdr.extend_from_slice(&4u16.to_le_bytes());
        hdr.extend_from_slice(&0i32.to_le_bytes());
        hdr.extend_from_slice(&0u32.to_le_bytes());
        hdr.extend_from_slice(&SNAPLEN.to_le_bytes());
        hdr.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        inner.write_all(&hdr)?;
        Ok(Self { inner })
    }

    pub fn write_packet(&mut self, pkt: &PacketRecord) -> Result<(), CaptureError> {
        let frame = encode_frame(pkt)?;
        let ts_sec = u32::try_from(pkt.ts_us / 1_000_000).map_err(|_| {
            CaptureError::Unrepresentable(format!("timestamp {} µs overflows pcap seconds", pkt.ts_us))
        })?;
        let ts_usec = (pkt.ts_us % 1_000_000) as u32;
        let len = frame.len() as u32;
        let mut hdr = [0u8; RECORD_HEADER_LEN];
        hdr[0..4].copy_from_slice(&ts_sec.to_le_bytes());
        hdr[4..8].copy_from_slice(&ts_usec.to_le_bytes());
        hdr[8..12].copy_from_slice(&len.to_le_bytes());
        hdr[12..16].copy_from_slice(&len.to_le_bytes());
        self.inner
            .write_all(&hdr)
            .and_then(|_| self.inner.write_all(&frame))
            .map_err(|e| CaptureError::io("<pcap writer>", e))
    }

    pub fn into_inner(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_capture_to<W: Write>(packets: &[PacketRecord], writer: W) -> Result<W, CaptureError> {
    let mut w = PcapWriter::new(writer).map_err(|e| CaptureError::io("<pcap writer>", e))?;
    for p in packets {
        w.write_packet(p)?;
    }
    w.into_inner().map_err(|e| CaptureError::io("<pcap writer>", e))
}

pub fn write_capture(packets: &[PacketRecord], path: impl AsRef<Path>) -> Result<(), CaptureError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CaptureError::io(path.display(), e))?;
    write_capture_to(packets, BufWriter::new(file))
        .and_then(|w| {
            w.into_inner()
                .map_err(|e| CaptureError::io(path.display(), e.into_error()))
        })
        .map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{MacAddr, TcpFlags, TcpInfo, TcpOptionKinds, PROTO_TCP, PROTO_UDP};
    use std::net::Ipv4Addr;

    fn udp(ts: u64, payload: u16) -> PacketRecord {
        PacketRecord {
            ts_us: ts,
            src_mac: MacAddr([2, 0, 0, 0, 0, 1]),
            dst_mac: MacAddr([2, 0, 0, 0, 0, 2]),
            vlan_id: None,
            src_ip: Ipv4Addr::new(192, 168, 1, 10),
            dst_ip: Ipv4Addr::new(8, 8, 8, 8),
            protocol: PROTO_UDP,
            src_port: 50000,
            dst_port: 53,
            ip_total_len: 28 + payload,
            payload_len: payload,
            ttl: 64,
            dscp: 0,
            fragment_offset: 0,
            tcp: None,
        }
    }

    fn hand_built() -> Vec<PacketRecord> {
        let mut syn = udp(1_600_000_000_000_001, 0);
        syn.protocol = PROTO_TCP;
        syn.dst_port = 443;
        syn.ip_total_len = 20 + 24;
        syn.tcp = Some(TcpInfo {
            flags: TcpFlags(TcpFlags::SYN),
            window: 65535,
            options: TcpOptionKinds(TcpOptionKinds::MSS),
        });
        let mut icmp = udp(1_600_000_000_500_000, 0);
        icmp.protocol = 1;
        icmp.src_port = 0;
        icmp.dst_port = 0;
        icmp.ip_total_len = 84;
        icmp.payload_len = 64;
        vec![udp(1_600_000_000_000_000, 100), syn, icmp]
    }

    #[test]
    fn empty_capture_is_24_bytes() {
        let buf = write_capture_to(&[], Vec::new()).unwrap();
        assert_eq!(buf.len(), 24);
        let cap = read_capture_from(&buf[..]).unwrap();
        assert!(cap.packets.is_empty());
        assert_eq!(cap.meta.packet_count, 0);
        assert_eq!(cap.meta.link_type, 1);
    }

    #[test]
    fn single_udp_record_length() {
        let p = udp(5, 10);
        let buf = write_capture_to(std::slice::from_ref(&p), Vec::new()).unwrap();
        let frame_len = 14 + 28 + 10;
        assert_eq!(buf.len() - 24, 16 + frame_len);
    }

    #[test]
    fn hand_built_packets_round_trip() {
        let pkts = hand_built();
        let buf = write_capture_to(&pkts, Vec::new()).unwrap();
        let cap = read_capture_from(&buf[..]).unwrap();
        assert_eq!(cap.packets, pkts);
        assert_eq!(cap.meta.packet_count, 3);
        assert_eq!(cap.skipped.total(), 0);
    }

    #[test]
    fn truncated_final_record_reports_offset() {
        let pkts = hand_built();
        let mut buf = write_capture_to(&pkts[..1], Vec::new()).unwrap();
        let partial_at = buf.len() as u64;
        let extra = write_capture_to(&pkts[1..2], Vec::new()).unwrap();
        buf.extend_from_slice(&extra[24..24 + 20]);
        match read_capture_from(&buf[..]) {
            Err(CaptureError::Truncated { offset, .. }) => assert_eq!(offset, partial_at),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_headers() {
        assert!(matches!(read_capture_from(&[0u8; 10][..]), Err(CaptureError::Format(_))));
        let mut buf = write_capture_to(&[], Vec::new()).unwrap();
        buf[0] = 0;
        assert!(matches!(read_capture_from(&buf[..]), Err(CaptureError::Format(_))));
        let mut buf = write_capture_to(&[], Vec::new()).unwrap();
        buf[20] = 113;
        assert!(matches!(read_capture_from(&buf[..]), Err(CaptureError::Unsupported(_))));
    }

    /// Re-encodes a little-endian file as big-endian with nanosecond stamps.
    fn to_big_endian_nanos(le: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC_NS.to_be_bytes());
        out.extend_from_slice(&2u16.to_be_bytes());
        out.extend_from_slice(&4u16.to_be_bytes());
        out.extend_from_slice(&[0; 8]);
        out.extend_from_slice(&SNAPLEN.to_be_bytes());
        out.extend_from_slice(&1u32.to_be_bytes());
        let mut at = 24;
        while at < le.len() {
            let f = |i: usize| u32::from_le_bytes(le[at + i..at + i + 4].try_into().unwrap());
            let (sec, usec, incl, orig) = (f(0), f(4), f(8), f(12));
            out.extend_from_slice(&sec.to_be_bytes());
            out.extend_from_slice(&(usec * 1000 + 999).to_be_bytes());
            out.extend_from_slice(&incl.to_be_bytes());
            out.extend_from_slice(&orig.to_be_bytes());
            out.extend_from_slice(&le[at + 16..at + 16 + incl as usize]);
            at += 16 + incl as usize;
        }
        out
    }

    #[test]
    fn big_endian_nanosecond_files_are_accepted() {
        let pkts = hand_built();
        let le = write_capture_to(&pkts, Vec::new()).unwrap();
        let cap = read_capture_from(&to_big_endian_nanos(&le)[..]).unwrap();
        assert_eq!(cap.packets, pkts);
        assert_eq!(cap.meta.ts_resolution_ns, 1);
    }

    #[test]
    fn non_ip_records_are_counted() {
        let pkts = hand_built();
        let mut buf = write_capture_to(&pkts[..1], Vec::new()).unwrap();
        // An ARP frame.
        let mut arp = vec![0u8; 42];
        arp[12] = 0x08;
        arp[13] = 0x06;
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&42u32.to_le_bytes());
        buf.extend_from_slice(&42u32.to_le_bytes());
        buf.extend_from_slice(&arp);
        let cap = read_capture_from(&buf[..]).unwrap();
        assert_eq!(cap.packets.len(), 1);
        assert_eq!(cap.skipped.non_ipv4, 1);
        assert_eq!(cap.packets.len() as u64 + cap.skipped.total(), cap.meta.packet_count);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcap");
        write_capture(&hand_built(), &path).unwrap();
        assert_eq!(read_capture(&path).unwrap().packets, hand_built());
        assert!(matches!(
            write_capture(&[], dir.path().join("missing/dir/x.pcap")),
            Err(CaptureError::Io { .. })
        ));
    }
}
