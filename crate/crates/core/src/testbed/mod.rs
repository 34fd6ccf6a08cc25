//! Deterministic simulation of the mobile testbed: devices run weighted,
//! sequenced app actions, and the simulator emits what the capture host and
//! the devices would observe, plus exact per-flow ground truth.

pub mod config;
pub mod schedule;

use std::collections::{BTreeMap, HashMap};
use std::net::Ipv4Addr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::capture::{PacketRecord, TcpFlags, TcpInfo, TcpOptionKinds, PROTO_TCP};
use crate::flow::FlowKey;
use crate::label::{DeviceInfo, DeviceMap, Os, Owner, SocketEvent, SocketEventKind, TruthEntry, UidMap};
use crate::reliability::{ActionRecord, Outcome};

pub use config::{
    ActionModel, AppModel, BurstDirection, ConfigError, DeviceProfile, FailureRate, IntSpan, ScenarioConfig, Span,
    TrafficBurst, APP_CATALOGUE,
};
pub use schedule::{inject_failures, run_log, schedule_actions, ActionKind, ScheduledAction};

const TRAFFIC_STREAM: u64 = 2_000;
const UID_STREAM: u64 = 3_000;
const EPHEMERAL_LO: u16 = 49152;
const N_EPHEMERAL: usize = 65536 - EPHEMERAL_LO as usize;

pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Everything one simulated capture produces.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutput {
    pub packets: Vec<PacketRecord>,
    pub socket_events: Vec<SocketEvent>,
    pub run_log: Vec<ActionRecord>,
    pub truth: Vec<TruthEntry>,
    pub uid_map: UidMap,
    pub device_map: DeviceMap,
}

/// Socket owner identity for every installed app: Android UIDs from 10050
/// upward in a per-device shuffled order, iOS process names.
pub fn owners(config: &ScenarioConfig) -> Vec<BTreeMap<String, Owner>> {
    config
        .devices
        .iter()
        .enumerate()
        .map(|(d_idx, dev)| {
            let mut order: Vec<usize> = (0..dev.installed_apps.len()).collect();
            order.shuffle(&mut rng_stream(config.seed, UID_STREAM + d_idx as u64));
            dev.installed_apps
                .iter()
                .zip(order)
                .map(|(name, slot)| {
                    let owner = match dev.os {
                        Os::Android => Owner::Uid(10050 + slot as u32),
                        Os::Ios => Owner::Process(config.app(name).expect("validated").process_name()),
                    };
                    (name.clone(), owner)
                })
                .collect()
        })
        .collect()
}

/// Per-device ephemeral port allocator.
///
/// A port is eligible once its previous socket closed at least `min_gap_us`
/// ago, which keeps same-tuple sockets apart by more than any flow timeout.
struct PortAllocator {
    last_end: Vec<Option<u64>>,
    min_gap_us: u64,
    reuse_prob: f64,
}

impl PortAllocator {
    fn new(min_gap_us: u64, reuse_prob: f64) -> Self {
        Self {
            last_end: vec![None; N_EPHEMERAL],
            min_gap_us,
            reuse_prob,
        }
    }

    fn eligible(&self, slot: usize, start: u64) -> bool {
        match self.last_end[slot] {
            None => true,
            Some(end) => end + self.min_gap_us <= start,
        }
    }

    fn allocate<R: Rng>(&mut self, start: u64, end: u64, rng: &mut R) -> u16 {
        let reuse = rng.random::<f64>() < self.reuse_prob;
        let mut slot = None;
        if reuse {
            slot = (0..N_EPHEMERAL)
                .filter(|&s| self.last_end[s].is_some() && self.eligible(s, start))
                .max_by_key(|&s| (self.last_end[s], std::cmp::Reverse(s)));
        }
        let slot = slot.unwrap_or_else(|| loop {
            let s = rng.random_range(0..N_EPHEMERAL);
            if self.eligible(s, start) {
                break s;
            }
        });
        self.last_end[slot] = Some(end);
        EPHEMERAL_LO + slot as u16
    }
}

/// Packet skeleton before ports are assigned.
struct PlannedPacket {
    ts_us: u64,
    up: bool,
    ip_total_len: u16,
    tcp: Option<TcpInfo>,
}

fn window<R: Rng>(base: u16, rng: &mut R) -> u16 {
    base - rng.random_range(0..=base / 16)
}

/// Lays out the packets of one socket episode starting at `t0`.
fn plan_episode<R: Rng>(app: &AppModel, steps: &[TrafficBurst], full: bool, t0: u64, rng: &mut R) -> Vec<PlannedPacket> {
    let tcp = app.protocol == PROTO_TCP;
    let up_base = steps
        .iter()
        .find(|s| s.direction == BurstDirection::Up)
        .unwrap_or(&steps[0])
        .tcp_window_base;
    let down_base = steps
        .iter()
        .find(|s| s.direction == BurstDirection::Down)
        .unwrap_or(&steps[0])
        .tcp_window_base;
    let rtt = rng.random_range(8_000..80_000u64);
    let mut out = Vec::new();
    let mut t = t0;
    let seg = |flags: u8, win: u16, opts: u8| {
        Some(TcpInfo {
            flags: TcpFlags(flags),
            window: win,
            options: TcpOptionKinds(opts),
        })
    };
    if tcp {
        let syn_opts = TcpOptionKinds::MSS | TcpOptionKinds::WSCALE | TcpOptionKinds::SACK_PERM | TcpOptionKinds::TIMESTAMP;
        let synack_opts = TcpOptionKinds::MSS | TcpOptionKinds::WSCALE | TcpOptionKinds::SACK_PERM;
        let syn_len = 40 + TcpOptionKinds(syn_opts).encoded_len() as u16;
        let synack_len = 40 + TcpOptionKinds(synack_opts).encoded_len() as u16;
        out.push(PlannedPacket { ts_us: t, up: true, ip_total_len: syn_len, tcp: seg(TcpFlags::SYN, up_base, syn_opts) });
        t += rtt;
        out.push(PlannedPacket {
            ts_us: t,
            up: false,
            ip_total_len: synack_len,
            tcp: seg(TcpFlags::SYN | TcpFlags::ACK, down_base, synack_opts),
        });
        t += rng.random_range(50..500u64);
        out.push(PlannedPacket { ts_us: t, up: true, ip_total_len: 40, tcp: seg(TcpFlags::ACK, window(up_base, rng), 0) });
    }
    for step in steps {
        t += step.think_time_us.sample(rng);
        let n = step.pkt_count.sample(rng);
        let up = step.direction == BurstDirection::Up;
        for i in 0..n {
            if i > 0 {
                t += step.inter_pkt_gap_us.sample(rng);
            }
            let len = step.pkt_len.sample(rng) as u16;
            let flags = if i + 1 == n { TcpFlags::PSH | TcpFlags::ACK } else { TcpFlags::ACK };
            out.push(PlannedPacket {
                ts_us: t,
                up,
                ip_total_len: len,
                tcp: if tcp { seg(flags, window(step.tcp_window_base, rng), 0) } else { None },
            });
        }
    }
    if tcp && full {
        t += rng.random_range(1_000..100_000u64);
        out.push(PlannedPacket { ts_us: t, up: true, ip_total_len: 40, tcp: seg(TcpFlags::FIN | TcpFlags::ACK, window(up_base, rng), 0) });
        t += rtt;
        out.push(PlannedPacket {
            ts_us: t,
            up: false,
            ip_total_len: 40,
            tcp: seg(TcpFlags::FIN | TcpFlags::ACK, window(down_base, rng), 0),
        });
        t += rng.random_range(50..500u64);
        out.push(PlannedPacket { ts_us: t, up: true, ip_total_len: 40, tcp: seg(TcpFlags::ACK, window(up_base, rng), 0) });
    }
    out
}

/// Whether a poll at `t` follows a launched foreground action of the same app.
fn launched_before(schedule: &[ScheduledAction], device_idx: usize, app_idx: usize, t: u64) -> bool {
    schedule.iter().any(|a| {
        a.kind == ActionKind::Foreground
            && a.device_idx == device_idx
            && a.app_idx == app_idx
            && a.outcome != Outcome::LaunchFailure
            && a.start_us < t
    })
}

/// Runs the whole scenario. Output depends only on `config` (including its seed).
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutput, ConfigError> {
    let schedule = schedule_actions(config)?;
    let schedule = inject_failures(schedule, |d, a| config.failure_rate(d, a), config.seed);
    let run_log = run_log(&schedule);
    let owners = owners(config);

    let mut uid_map = UidMap::default();
    let mut device_map = DeviceMap::default();
    for (dev, own) in config.devices.iter().zip(&owners) {
        device_map.insert(DeviceInfo {
            ip: dev.local_ip,
            device_id: dev.device_id.clone(),
            os: dev.os,
            os_version: dev.os_version.clone(),
        });
        for (app, owner) in own {
            uid_map.insert(&dev.device_id, owner, app);
        }
    }

    let poll_us = ((config.socket_poll_interval_s * 1e6).round() as u64).max(1);
    let mut tagged_packets: Vec<(u64, usize, PacketRecord)> = Vec::new();
    let mut events: Vec<(u64, usize, SocketEvent)> = Vec::new();
    let mut episodes: Vec<(FlowKey, u64, u64, usize, usize)> = Vec::new();

    for (d_idx, dev) in config.devices.iter().enumerate() {
        let mut rng = rng_stream(config.seed, TRAFFIC_STREAM + d_idx as u64);
        let mut ports = PortAllocator::new(
            (config.port_reuse_min_gap_s * 1e6).round() as u64,
            config.port_reuse_prob,
        );
        for act in schedule.iter().filter(|a| a.device_idx == d_idx) {
            if act.kind == ActionKind::BackgroundPoll && !launched_before(&schedule, d_idx, act.app_idx, act.start_us) {
                continue;
            }
            let app = &config.apps[act.app_idx];
            let all_steps = match act.action_idx {
                Some(i) => &app.actions[i].steps,
                None => &app.poll_steps,
            };
            let steps = &all_steps[..act.steps_executed];
            if steps.is_empty() {
                continue;
            }
            let n_conn = match act.action_idx {
                Some(i) => app.actions[i].connections.sample(&mut rng),
                None => 1,
            };
            let mut launch_us = act.start_us;
            for _ in 0..n_conn {
                launch_us += rng.random_range(20_000..500_000u64);
                let (server_ip, server_port) = app.server_endpoints[rng.random_range(0..app.server_endpoints.len())];
                let t0 = launch_us;
                let plan = plan_episode(app, steps, act.steps_executed == act.steps_total, t0, &mut rng);
                let first = plan.first().expect("nonempty steps").ts_us;
                let last = plan.last().expect("nonempty steps").ts_us;
                let port = ports.allocate(first, last, &mut rng);

                let owner = owners[d_idx][&app.app_name].clone();
                let event = |ts_us: u64, kind: SocketEventKind| SocketEvent {
                    ts_us,
                    device_id: dev.device_id.clone(),
                    event: kind,
                    protocol: app.protocol,
                    src_ip: dev.local_ip,
                    src_port: port,
                    dst_ip: server_ip,
                    dst_port: server_port,
                    owner: owner.clone(),
                };
                let seq = episodes.len();
                events.push((first, seq, event(first, SocketEventKind::Open)));
                let mut p = first + poll_us;
                while p < last {
                    events.push((p, seq, event(p, SocketEventKind::Poll)));
                    p += poll_us;
                }
                events.push((last, seq, event(last, SocketEventKind::Close)));

                let key = FlowKey::new((dev.local_ip, port), (server_ip, server_port), app.protocol).0;
                episodes.push((key, first, last, d_idx, act.app_idx));

                for pp in plan {
                    let (src_ip, src_port, dst_ip, dst_port, src_mac, dst_mac, ttl) = if pp.up {
                        (dev.local_ip, port, server_ip, server_port, dev.mac, config.gateway_mac, dev.ttl_default)
                    } else {
                        (server_ip, server_port, dev.local_ip, port, config.gateway_mac, dev.mac, config.server_ttl)
                    };
                    let l4 = match pp.tcp {
                        Some(t) => t.header_len() as u16,
                        None => 8,
                    };
                    tagged_packets.push((
                        pp.ts_us,
                        seq,
                        PacketRecord {
                            ts_us: pp.ts_us,
                            src_mac,
                            dst_mac,
                            vlan_id: None,
                            src_ip,
                            dst_ip,
                            protocol: app.protocol,
                            src_port,
                            dst_port,
                            ip_total_len: pp.ip_total_len,
                            payload_len: pp.ip_total_len - 20 - l4,
                            ttl,
                            dscp: 0,
                            fragment_offset: 0,
                            tcp: pp.tcp,
                        },
                    ));
                }
            }
        }
    }

    tagged_packets.sort_by_key(|(ts, seq, _)| (*ts, *seq));
    events.sort_by_key(|(ts, seq, _)| (*ts, *seq));

    let mut epochs: HashMap<FlowKey, u32> = HashMap::new();
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    order.sort_by_key(|&i| (episodes[i].1, i));
    let mut truth = Vec::with_capacity(episodes.len());
    for i in order {
        let (key, first, last, d_idx, a_idx) = episodes[i];
        let epoch = epochs.entry(key).or_insert(0);
        let dev = &config.devices[d_idx];
        truth.push(TruthEntry {
            key,
            epoch: *epoch,
            first_ts_us: first,
            last_ts_us: last,
            app_name: config.apps[a_idx].app_name.clone(),
            os: dev.os,
            device_id: dev.device_id.clone(),
        });
        *epoch += 1;
    }

    Ok(ScenarioOutput {
        packets: tagged_packets.into_iter().map(|(_, _, p)| p).collect(),
        socket_events: events.into_iter().map(|(_, _, e)| e).collect(),
        run_log,
        truth,
        uid_map,
        device_map,
    })
}

/// The remote address of every configured server endpoint.
pub fn server_addresses(config: &ScenarioConfig) -> Vec<Ipv4Addr> {
    let mut v: Vec<Ipv4Addr> = config
        .apps
        .iter()
        .flat_map(|a| a.server_endpoints.iter().map(|e| e.0))
        .collect();
    v.sort();
    v.dedup();
    v
}
