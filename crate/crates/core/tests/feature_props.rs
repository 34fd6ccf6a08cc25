mod common;

use flowforge_core::features::{extract_features, CATEGORICAL_NAMES, NUMERICAL_NAMES};
use flowforge_core::flow::{assemble_flows, AssemblerConfig};
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn feature_vector_invariants(pkts in common::arb_packets(80, 200_000_000)) {
        let cfg = AssemblerConfig::new(common::SUBNET.parse().unwrap(), 60.0);
        for f in assemble_flows(&pkts, &cfg) {
            let fv = extract_features(&f).unwrap();
            prop_assert_eq!(fv.numerical.len(), 20);
            prop_assert_eq!(fv.categorical.len(), 16);
            prop_assert!((0.0..=1.0).contains(&fv.byte_ratio()));
            prop_assert!(fv.numerical.iter().all(|v| v.is_finite() && *v >= 0.0));
            for name in ["local_tcp_flags", "remote_tcp_flags"] {
                prop_assert!(fv.category(name).unwrap().chars().all(|c| "FSRPAUEC".contains(c)));
            }
            let n_local = fv.get("local_pkt_count").unwrap() as usize;
            let n_remote = fv.get("remote_pkt_count").unwrap() as usize;
            prop_assert_eq!(n_local + n_remote, f.packet_count());
        }
    }

    #[test]
    fn stats_match_a_running_recomputation(pkts in common::arb_packets(80, 200_000_000)) {
        let cfg = AssemblerConfig::new(common::SUBNET.parse().unwrap(), 60.0);
        for f in assemble_flows(&pkts, &cfg) {
            let fv = extract_features(&f).unwrap();
            for (block, dir) in [(fv.local_stats(), &f.local_packets), (fv.remote_stats(), &f.remote_packets)] {
                // Welford's update as an independent route to mean and variance.
                let (mut n, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
                for p in dir.iter() {
                    let x = p.ip_total_len as f64;
                    n += 1.0;
                    let d = x - mean;
                    mean += d / n;
                    m2 += d * (x - mean);
                }
                let std = if n > 0.0 { (m2 / n).sqrt() } else { 0.0 };
                prop_assert_eq!(block[0], n);
                prop_assert!(close(block[4], mean), "mean {} vs {}", block[4], mean);
                prop_assert!((block[5] - std).abs() <= 1e-9 * std.max(1.0), "std {} vs {}", block[5], std);
            }
        }
    }
}

#[test]
fn schema_names_are_unique() {
    let mut all: Vec<&str> = NUMERICAL_NAMES.iter().chain(CATEGORICAL_NAMES.iter()).copied().collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 36);
}
