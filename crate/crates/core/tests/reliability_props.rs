use flowforge_core::reliability::{compute_reliability, ActionRecord, Counts, EfDenominator, Outcome};
use proptest::prelude::*;

fn arb_record() -> impl Strategy<Value = ActionRecord> {
    (
        prop::sample::select(vec!["moto-g4", "huawei", "iphone-7"]),
        prop::sample::select(vec!["Gmail", "Twitter", "YouTube", "Safari"]),
        prop_oneof![Just(Outcome::Success), Just(Outcome::LaunchFailure), Just(Outcome::ExecutionFailure)],
        any::<u32>(),
    )
        .prop_map(|(d, a, outcome, ts)| ActionRecord {
            ts_us: ts as u64,
            device_id: d.into(),
            app_name: a.into(),
            action_name: "Act".into(),
            outcome,
        })
}

fn sum<'a>(it: impl Iterator<Item = &'a Counts>) -> Counts {
    it.fold(Counts::default(), |mut acc, c| {
        acc.attempts += c.attempts;
        acc.successes += c.successes;
        acc.lf_count += c.lf_count;
        acc.ef_count += c.ef_count;
        acc
    })
}

proptest! {
    #[test]
    fn groupings_aggregate_consistently(log in prop::collection::vec(arb_record(), 0..300)) {
        let r = compute_reliability(&log, EfDenominator::All);
        let total = sum(r.by_device_app.values());
        prop_assert_eq!(total.attempts, log.len() as u64);
        prop_assert_eq!(sum(r.by_device.values()), total);
        prop_assert_eq!(sum(r.by_app.values()), total);
        for (dev, c) in &r.by_device {
            prop_assert_eq!(*c, sum(r.by_device_app.iter().filter(|((d, _), _)| d == dev).map(|(_, c)| c)));
        }
        for c in r.by_device_app.values() {
            prop_assert_eq!(c.attempts, c.successes + c.lf_count + c.ef_count);
            for v in [c.lf_pct(), c.ef_pct(EfDenominator::All), c.ef_pct(EfDenominator::Launched)] {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }
    }

    #[test]
    fn log_order_does_not_matter(mut log in prop::collection::vec(arb_record(), 0..100)) {
        let a = compute_reliability(&log, EfDenominator::All);
        log.reverse();
        prop_assert_eq!(a, compute_reliability(&log, EfDenominator::All));
    }
}
