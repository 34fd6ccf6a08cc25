//! Ground-truth labelling: flows are matched to device socket observations by
//! canonical 5-tuple and time, and socket owners (Android UID or iOS process
//! name) are resolved to applications.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::features::{extract_features, FeatureVector};
use crate::flow::{Flow, FlowKey};

pub const DEFAULT_GRACE_S: f64 = 2.0;
pub const UNKNOWN_APP: &str = "unknown";

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("socket owners missing from the UID map: {}", .0.join(", "))]
    OrphanOwners(Vec<String>),
    #[error("flow {key} has local address {ip} that is not in the device map")]
    UnknownDevice { key: FlowKey, ip: Ipv4Addr },
    #[error("feature extraction failed for flow {0}")]
    Features(FlowKey),
    #[error("{what} line {line}: {detail}")]
    Parse { what: &'static str, line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Os {
    Android,
    #[serde(rename = "iOS")]
    Ios,
}

impl Os {
    pub fn as_str(self) -> &'static str {
        match self {
            Os::Android => "Android",
            Os::Ios => "iOS",
        }
    }
}

impl fmt::Display for Os {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Os {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Android" | "android" => Ok(Os::Android),
            "iOS" | "ios" | "IOS" => Ok(Os::Ios),
            _ => Err(format!("unknown OS {s:?}")),
        }
    }
}

/// Identity that owns a socket on a device.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Uid(u32),
    Process(String),
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Uid(u) => write!(f, "{u}"),
            Owner::Process(p) => f.write_str(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SocketEventKind {
    Open,
    Poll,
    Close,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSocketEvent", into = "RawSocketEvent")]
pub struct SocketEvent {
    pub ts_us: u64,
    pub device_id: String,
    pub event: SocketEventKind,
    pub protocol: u8,
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub owner: Owner,
}

impl SocketEvent {
    pub fn key(&self) -> FlowKey {
        FlowKey::new((self.src_ip, self.src_port), (self.dst_ip, self.dst_port), self.protocol).0
    }
}

/// On-disk shape of a socket event.
#[derive(Serialize, Deserialize)]
struct RawSocketEvent {
    ts_us: u64,
    device_id: String,
    event: SocketEventKind,
    proto: u8,
    src_ip: Ipv4Addr,
    src_port: u16,
    dst_ip: Ipv4Addr,
    dst_port: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uid: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    process: Option<String>,
}

impl TryFrom<RawSocketEvent> for SocketEvent {
    type Error = String;

    fn try_from(r: RawSocketEvent) -> Result<Self, Self::Error> {
        let owner = match (r.uid, r.process) {
            (Some(u), None) => Owner::Uid(u),
            (None, Some(p)) => Owner::Process(p),
            _ => return Err("exactly one of uid or process is required".into()),
        };
        Ok(SocketEvent {
            ts_us: r.ts_us,
            device_id: r.device_id,
            event: r.event,
            protocol: r.proto,
            src_ip: r.src_ip,
            src_port: r.src_port,
            dst_ip: r.dst_ip,
            dst_port: r.dst_port,
            owner,
        })
    }
}

impl From<SocketEvent> for RawSocketEvent {
    fn from(e: SocketEvent) -> Self {
        let (uid, process) = match e.owner {
            Owner::Uid(u) => (Some(u), None),
            Owner::Process(p) => (None, Some(p)),
        };
        RawSocketEvent {
            ts_us: e.ts_us,
            device_id: e.device_id,
            event: e.event,
            proto: e.protocol,
            src_ip: e.src_ip,
            src_port: e.src_port,
            dst_ip: e.dst_ip,
            dst_port: e.dst_port,
            uid,
            process,
        }
    }
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<T: serde::de::DeserializeOwned, R: Read>(
    r: R,
    what: &'static str,
) -> Result<Vec<T>, LabelError> {
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| LabelError::Parse {
            what,
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

/// `(device_id, owner) -> app_name`, the analogue of a package-manager dump.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UidMap {
    entries: BTreeMap<(String, String), String>,
}

impl UidMap {
    pub fn insert(&mut self, device_id: &str, owner: &Owner, app: &str) {
        self.entries
            .insert((device_id.to_string(), owner.to_string()), app.to_string());
    }

    pub fn resolve(&self, device_id: &str, owner: &Owner) -> Option<&str> {
        self.entries
            .get(&(device_id.to_string(), owner.to_string()))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LabelError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["device_id", "owner", "app_name"])?;
        for ((dev, owner), app) in &self.entries {
            wr.write_record([dev, owner, app])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, LabelError> {
        let mut map = UidMap::default();
        for rec in csv::Reader::from_reader(r).deserialize() {
            let (dev, owner, app): (String, String, String) = rec?;
            map.entries.insert((dev, owner), app);
        }
        Ok(map)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceInfo {
    pub ip: Ipv4Addr,
    pub device_id: String,
    pub os: Os,
    pub os_version: String,
}

/// Local IP -> device identity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeviceMap {
    by_ip: BTreeMap<Ipv4Addr, DeviceInfo>,
}

impl DeviceMap {
    pub fn insert(&mut self, info: DeviceInfo) {
        self.by_ip.insert(info.ip, info);
    }

    pub fn get(&self, ip: &Ipv4Addr) -> Option<&DeviceInfo> {
        self.by_ip.get(ip)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceInfo> {
        self.by_ip.values()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LabelError> {
        let mut wr = csv::Writer::from_writer(w);
        for d in self.by_ip.values() {
            wr.serialize(d)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, LabelError> {
        let mut map = DeviceMap::default();
        for rec in csv::Reader::from_reader(r).deserialize() {
            map.insert(rec?);
        }
        Ok(map)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelConfidence {
    /// One socket episode covers the whole flow.
    Exact,
    /// Chosen among overlapping episodes, or only partially covered.
    NearestInTime,
    Unlabelled,
}

impl LabelConfidence {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelConfidence::Exact => "exact",
            LabelConfidence::NearestInTime => "nearest_in_time",
            LabelConfidence::Unlabelled => "unlabelled",
        }
    }
}

impl FromStr for LabelConfidence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(LabelConfidence::Exact),
            "nearest_in_time" => Ok(LabelConfidence::NearestInTime),
            "unlabelled" => Ok(LabelConfidence::Unlabelled),
            _ => Err(format!("unknown label confidence {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelledFlow {
    pub key: FlowKey,
    pub epoch: u32,
    pub first_ts_us: u64,
    pub last_ts_us: u64,
    pub features: FeatureVector,
    pub app_label: String,
    pub os_label: Os,
    pub device_id: String,
    pub label_confidence: LabelConfidence,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelConfig {
    pub grace_s: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { grace_s: DEFAULT_GRACE_S }
    }
}

/// One socket lifetime reconstructed from its events.
#[derive(Debug, Clone)]
struct Episode {
    start_us: u64,
    end_us: u64,
    owner: Owner,
}

fn build_episodes(events: &[SocketEvent]) -> HashMap<(String, FlowKey), Vec<Episode>> {
    let mut grouped: HashMap<(String, FlowKey), Vec<&SocketEvent>> = HashMap::new();
    for e in events {
        grouped.entry((e.device_id.clone(), e.key())).or_default().push(e);
    }
    grouped
        .into_iter()
        .map(|(k, mut evs)| {
            evs.sort_by_key(|e| e.ts_us);
            let mut episodes = Vec::new();
            let mut current: Option<Episode> = None;
            for e in evs {
                match (e.event, current.as_mut()) {
                    (SocketEventKind::Open, _) | (_, None) => {
                        if let Some(done) = current.take() {
                            episodes.push(done);
                        }
                        current = Some(Episode {
                            start_us: e.ts_us,
                            end_us: e.ts_us,
                            owner: e.owner.clone(),
                        });
                        if e.event == SocketEventKind::Close {
                            episodes.extend(current.take());
                        }
                    }
                    (SocketEventKind::Poll, Some(ep)) => ep.end_us = e.ts_us,
                    (SocketEventKind::Close, Some(ep)) => {
                        ep.end_us = e.ts_us;
                        episodes.extend(current.take());
                    }
                }
            }
            episodes.extend(current);
            (k, episodes)
        })
        .collect()
}

/// Labels every non-foreign flow. Foreign flows are dropped from the output.
pub fn label_flows(
    flows: &[Flow],
    events: &[SocketEvent],
    uid_map: &UidMap,
    device_map: &DeviceMap,
    config: &LabelConfig,
) -> Result<Vec<LabelledFlow>, LabelError> {
    let orphans: BTreeSet<String> = events
        .iter()
        .filter(|e| uid_map.resolve(&e.device_id, &e.owner).is_none())
        .map(|e| format!("{}/{}", e.device_id, e.owner))
        .collect();
    if !orphans.is_empty() {
        return Err(LabelError::OrphanOwners(orphans.into_iter().collect()));
    }

    let episodes = build_episodes(events);
    let grace = (config.grace_s * 1e6).round() as i64;
    let mut out = Vec::with_capacity(flows.len());
    for flow in flows.iter().filter(|f| !f.is_foreign()) {
        let device = device_map.get(&flow.local_ip).ok_or(LabelError::UnknownDevice {
            key: flow.key,
            ip: flow.local_ip,
        })?;
        let features = extract_features(flow).map_err(|_| LabelError::Features(flow.key))?;
        let fs = flow.first_ts_us as i64;
        let fe = flow.last_ts_us as i64;

        let mut best: Option<(i64, u64, &Episode)> = None;
        let mut n_overlapping = 0;
        if let Some(candidates) = episodes.get(&(device.device_id.clone(), flow.key)) {
            for ep in candidates {
                let ps = ep.start_us as i64 - grace;
                let pe = ep.end_us as i64 + grace;
                let overlap = fe.min(pe) - fs.max(ps);
                if overlap < 0 {
                    continue;
                }
                n_overlapping += 1;
                let better = match best {
                    None => true,
                    Some((o, start, _)) => overlap > o || (overlap == o && ep.start_us < start),
                };
                if better {
                    best = Some((overlap, ep.start_us, ep));
                }
            }
        }

        let (app_label, label_confidence) = match best {
            None => (UNKNOWN_APP.to_string(), LabelConfidence::Unlabelled),
            Some((_, _, ep)) => {
                let app = uid_map
                    .resolve(&device.device_id, &ep.owner)
                    .expect("owners checked above");
                let contained = ep.start_us as i64 - grace <= fs && fe <= ep.end_us as i64 + grace;
                let conf = if n_overlapping == 1 && contained {
                    LabelConfidence::Exact
                } else {
                    LabelConfidence::NearestInTime
                };
                (app.to_string(), conf)
            }
        };
        out.push(LabelledFlow {
            key: flow.key,
            epoch: flow.epoch,
            first_ts_us: flow.first_ts_us,
            last_ts_us: flow.last_ts_us,
            features,
            app_label,
            os_label: device.os,
            device_id: device.device_id.clone(),
            label_confidence,
        });
    }
    Ok(out)
}

/// Ground truth for one socket episode, as known to the traffic generator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub key: FlowKey,
    pub epoch: u32,
    pub first_ts_us: u64,
    pub last_ts_us: u64,
    pub app_name: String,
    pub os: Os,
    pub device_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub key: FlowKey,
    pub epoch: u32,
    pub first_ts_us: u64,
    pub labelled: String,
    pub truth: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyReport {
    pub total: usize,
    pub correct: usize,
    pub mismatches: Vec<Mismatch>,
}

impl AccuracyReport {
    /// Fraction of flows whose app label matches truth; 1.0 when there are no flows.
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Compares labels against truth. A flow is matched to the truth entry with
/// the same key whose time span contains the flow's first packet.
pub fn label_accuracy(labelled: &[LabelledFlow], truth: &[TruthEntry]) -> AccuracyReport {
    let mut by_key: HashMap<FlowKey, Vec<&TruthEntry>> = HashMap::new();
    for t in truth {
        by_key.entry(t.key).or_default().push(t);
    }
    let mut correct = 0;
    let mut mismatches = Vec::new();
    for lf in labelled {
        let t = by_key.get(&lf.key).and_then(|ts| {
            ts.iter()
                .find(|t| t.first_ts_us <= lf.first_ts_us && lf.first_ts_us <= t.last_ts_us)
        });
        match t {
            Some(t) if t.app_name == lf.app_label && lf.label_confidence != LabelConfidence::Unlabelled => {
                correct += 1
            }
            _ => mismatches.push(Mismatch {
                key: lf.key,
                epoch: lf.epoch,
                first_ts_us: lf.first_ts_us,
                labelled: lf.app_label.clone(),
                truth: t.map(|t| t.app_name.clone()),
            }),
        }
    }
    AccuracyReport {
        total: labelled.len(),
        correct,
        mismatches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{MacAddr, PacketRecord, PROTO_TCP};
    use crate::flow::{assemble_flows, AssemblerConfig};

    const DEV: Ipv4Addr = Ipv4Addr::new(192, 168, 1, 10);
    const SRV: Ipv4Addr = Ipv4Addr::new(157, 240, 8, 35);

    fn pkt(ts_s: f64, sport: u16) -> PacketRecord {
        PacketRecord {
            ts_us: (ts_s * 1e6) as u64,
            src_mac: MacAddr::default(),
            dst_mac: MacAddr::default(),
            vlan_id: None,
            src_ip: DEV,
            dst_ip: SRV,
            protocol: 17,
            src_port: sport,
            dst_port: 443,
            ip_total_len: 100,
            payload_len: 72,
            ttl: 64,
            dscp: 0,
            fragment_offset: 0,
            tcp: None,
        }
    }

    fn ev(ts_s: f64, kind: SocketEventKind, sport: u16, uid: u32) -> SocketEvent {
        SocketEvent {
            ts_us: (ts_s * 1e6) as u64,
            device_id: "moto".into(),
            event: kind,
            protocol: 17,
            src_ip: DEV,
            src_port: sport,
            dst_ip: SRV,
            dst_port: 443,
            owner: Owner::Uid(uid),
        }
    }

    fn maps() -> (UidMap, DeviceMap) {
        let mut u = UidMap::default();
        u.insert("moto", &Owner::Uid(10061), "Facebook");
        u.insert("moto", &Owner::Uid(10062), "Instagram");
        let mut d = DeviceMap::default();
        d.insert(DeviceInfo {
            ip: DEV,
            device_id: "moto".into(),
            os: Os::Android,
            os_version: "7".into(),
        });
        (u, d)
    }

    fn flows(pkts: &[PacketRecord]) -> Vec<Flow> {
        assemble_flows(pkts, &AssemblerConfig::new("192.168.1.0/24".parse().unwrap(), 60.0))
    }

    #[test]
    fn exactly_spanned_flow_is_exact() {
        let (u, d) = maps();
        let f = flows(&[pkt(10.0, 50000), pkt(20.0, 50000)]);
        let evs = [ev(10.0, SocketEventKind::Open, 50000, 10061), ev(20.0, SocketEventKind::Close, 50000, 10061)];
        let l = label_flows(&f, &evs, &u, &d, &LabelConfig::default()).unwrap();
        assert_eq!(l[0].app_label, "Facebook");
        assert_eq!(l[0].label_confidence, LabelConfidence::Exact);
        assert_eq!(l[0].os_label, Os::Android);
    }

    #[test]
    fn no_matching_event_is_unknown() {
        let (u, d) = maps();
        let f = flows(&[pkt(10.0, 50000)]);
        let evs = [ev(10.0, SocketEventKind::Open, 50001, 10061)];
        let l = label_flows(&f, &evs, &u, &d, &LabelConfig::default()).unwrap();
        assert_eq!(l[0].app_label, UNKNOWN_APP);
        assert_eq!(l[0].label_confidence, LabelConfidence::Unlabelled);
    }

    #[test]
    fn port_reuse_resolves_by_time() {
        let (u, d) = maps();
        let f = flows(&[pkt(10.0, 50000), pkt(12.0, 50000), pkt(300.0, 50000), pkt(301.0, 50000)]);
        assert_eq!(f.len(), 2);
        let evs = [
            ev(10.0, SocketEventKind::Open, 50000, 10061),
            ev(12.0, SocketEventKind::Close, 50000, 10061),
            ev(300.0, SocketEventKind::Open, 50000, 10062),
            ev(301.0, SocketEventKind::Close, 50000, 10062),
        ];
        let l = label_flows(&f, &evs, &u, &d, &LabelConfig::default()).unwrap();
        assert_eq!(l[0].app_label, "Facebook");
        assert_eq!(l[1].app_label, "Instagram");
    }

    #[test]
    fn overlapping_candidates_choose_max_overlap() {
        let (u, d) = maps();
        let f = flows(&[pkt(10.0, 50000), pkt(30.0, 50000)]);
        // Close-open pair leaves two episodes both overlapping the flow.
        let evs = [
            ev(9.0, SocketEventKind::Open, 50000, 10061),
            ev(12.0, SocketEventKind::Close, 50000, 10061),
            ev(12.5, SocketEventKind::Open, 50000, 10062),
            ev(30.0, SocketEventKind::Close, 50000, 10062),
        ];
        let l = label_flows(&f, &evs, &u, &d, &LabelConfig::default()).unwrap();
        assert_eq!(l[0].app_label, "Instagram");
        assert_eq!(l[0].label_confidence, LabelConfidence::NearestInTime);
    }

    #[test]
    fn grace_window_covers_late_observation() {
        let (u, d) = maps();
        let f = flows(&[pkt(10.0, 50000), pkt(11.0, 50000)]);
        let evs = [ev(11.5, SocketEventKind::Poll, 50000, 10061)];
        let l = label_flows(&f, &evs, &u, &d, &LabelConfig::default()).unwrap();
        assert_eq!(l[0].label_confidence, LabelConfidence::Exact);
        let strict = label_flows(&f, &evs, &u, &d, &LabelConfig { grace_s: 0.0 }).unwrap();
        assert_eq!(strict[0].label_confidence, LabelConfidence::Unlabelled);
    }

    #[test]
    fn orphan_owner_is_an_error() {
        let (u, d) = maps();
        let f = flows(&[pkt(10.0, 50000)]);
        let evs = [ev(10.0, SocketEventKind::Open, 50000, 99999)];
        match label_flows(&f, &evs, &u, &d, &LabelConfig::default()) {
            Err(LabelError::OrphanOwners(o)) => assert_eq!(o, vec!["moto/99999".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_device_is_an_error() {
        let (u, _) = maps();
        let f = flows(&[pkt(10.0, 50000)]);
        assert!(matches!(
            label_flows(&f, &[], &u, &DeviceMap::default(), &LabelConfig::default()),
            Err(LabelError::UnknownDevice { .. })
        ));
    }

    #[test]
    fn event_jsonl_shape() {
        let mut e = ev(1.0, SocketEventKind::Open, 50000, 10061);
        let line = serde_json::to_string(&e).unwrap();
        assert_eq!(
            line,
            r#"{"ts_us":1000000,"device_id":"moto","event":"open","proto":17,"src_ip":"192.168.1.10","src_port":50000,"dst_ip":"157.240.8.35","dst_port":443,"uid":10061}"#
        );
        e.owner = Owner::Process("MobileMail".into());
        let back: SocketEvent = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<SocketEvent>(&line.replace(r#","uid":10061"#, "")).is_err());
    }

    #[test]
    fn maps_round_trip_csv() {
        let (u, d) = maps();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"device_id,owner,app_name\n"));
        assert_eq!(UidMap::read_csv(&buf[..]).unwrap(), u);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"ip,device_id,os,os_version\n"));
        assert_eq!(DeviceMap::read_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn accuracy_extremes() {
        let (u, d) = maps();
        let f = flows(&[pkt(10.0, 50000)]);
        let evs = [ev(10.0, SocketEventKind::Open, 50000, 10061)];
        let l = label_flows(&f, &evs, &u, &d, &LabelConfig::default()).unwrap();
        let truth = vec![TruthEntry {
            key: f[0].key,
            epoch: 0,
            first_ts_us: 10_000_000,
            last_ts_us: 10_000_000,
            app_name: "Facebook".into(),
            os: Os::Android,
            device_id: "moto".into(),
        }];
        assert_eq!(label_accuracy(&l, &truth).fraction(), 1.0);
        let unknown = label_flows(&f, &[], &u, &d, &LabelConfig::default()).unwrap();
        let r = label_accuracy(&unknown, &truth);
        assert_eq!(r.fraction(), 0.0);
        assert_eq!(r.mismatches[0].truth.as_deref(), Some("Facebook"));
    }

    #[test]
    fn tcp_events_do_not_match_udp_flows() {
        let (u, d) = maps();
        let f = flows(&[pkt(10.0, 50000)]);
        let mut e = ev(10.0, SocketEventKind::Open, 50000, 10061);
        e.protocol = PROTO_TCP;
        let l = label_flows(&f, &[e], &u, &d, &LabelConfig::default()).unwrap();
        assert_eq!(l[0].label_confidence, LabelConfidence::Unlabelled);
    }
}
