mod common;

use std::collections::BTreeMap;

use flowforge_core::capture::PacketRecord;
use flowforge_core::flow::{assemble_flows, canonical_key, AssemblerConfig, Flow, FlowKey, FlowScope};
use proptest::prelude::*;
use proptest::sample::Index;

fn cfg(timeout_s: f64) -> AssemblerConfig {
    AssemblerConfig::new(common::SUBNET.parse().unwrap(), timeout_s)
}

fn shuffled<T: Clone>(v: &[T], picks: &[Index]) -> Vec<T> {
    let mut v = v.to_vec();
    for (i, ix) in picks.iter().enumerate().take(v.len()) {
        let j = ix.index(v.len() - i) + i;
        v.swap(i, j);
    }
    v
}

proptest! {
    #[test]
    fn assembly_ignores_input_order(
        pkts in common::arb_packets(80, 400_000_000),
        picks in proptest::collection::vec(any::<Index>(), 80),
    ) {
        let a = assemble_flows(&pkts, &cfg(60.0));
        let b = assemble_flows(&shuffled(&pkts, &picks), &cfg(60.0));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_packet_lands_in_exactly_one_flow(pkts in common::arb_packets(80, 400_000_000)) {
        let flows = assemble_flows(&pkts, &cfg(60.0));
        let total: usize = flows.iter().map(Flow::packet_count).sum();
        prop_assert_eq!(total, pkts.len());
        for f in &flows {
            for p in f.local_packets.iter().chain(&f.remote_packets) {
                prop_assert_eq!(canonical_key(p).0, f.key);
                prop_assert!(f.first_ts_us <= p.ts_us && p.ts_us <= f.last_ts_us);
            }
            if f.scope != FlowScope::Foreign {
                prop_assert!(f.local_packets.iter().all(|p| p.src_ip == f.local_ip));
                prop_assert!(f.remote_packets.iter().all(|p| p.src_ip != f.local_ip));
            }
        }
    }

    #[test]
    fn epochs_are_separated_by_more_than_the_timeout(pkts in common::arb_packets(80, 400_000_000), timeout in 1.0f64..120.0) {
        let c = cfg(timeout);
        let flows = assemble_flows(&pkts, &c);
        let mut by_key: BTreeMap<FlowKey, Vec<&Flow>> = BTreeMap::new();
        for f in &flows {
            by_key.entry(f.key).or_default().push(f);
        }
        for fs in by_key.values_mut() {
            fs.sort_by_key(|f| f.epoch);
            for (i, f) in fs.iter().enumerate() {
                prop_assert_eq!(f.epoch as usize, i);
            }
            for w in fs.windows(2) {
                prop_assert!(w[1].first_ts_us - w[0].last_ts_us > c.idle_timeout_us());
            }
        }
    }

    #[test]
    fn time_translation_shifts_flows(pkts in common::arb_packets(60, 400_000_000), shift in 0u64..1_000_000_000_000) {
        let moved: Vec<PacketRecord> = pkts.iter().cloned().map(|mut p| { p.ts_us += shift; p }).collect();
        let a = assemble_flows(&pkts, &cfg(60.0));
        let b = assemble_flows(&moved, &cfg(60.0));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!((x.key, x.epoch, x.first_ts_us + shift, x.last_ts_us + shift), (y.key, y.epoch, y.first_ts_us, y.last_ts_us));
            prop_assert_eq!(x.packet_count(), y.packet_count());
        }
    }

    #[test]
    fn canonical_key_is_direction_free(p in common::arb_packet(1000)) {
        let mut r = p.clone();
        std::mem::swap(&mut r.src_ip, &mut r.dst_ip);
        std::mem::swap(&mut r.src_port, &mut r.dst_port);
        let (k1, d1) = canonical_key(&p);
        let (k2, d2) = canonical_key(&r);
        prop_assert_eq!(k1, k2);
        prop_assert!((k1.ip_a, k1.port_a) <= (k1.ip_b, k1.port_b));
        if (p.src_ip, p.src_port) != (p.dst_ip, p.dst_port) {
            prop_assert_ne!(d1, d2);
        }
    }
}

#[test]
fn empty_input_gives_no_flows() {
    assert!(assemble_flows(&[], &cfg(60.0)).is_empty());
}
