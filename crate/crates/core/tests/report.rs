use proptest::prelude::*;
use zico_core::eval::report::{parse_records_csv, records_csv};
use zico_core::eval::BenchmarkRecord;
use zico_core::proxies::ProxyValues;
use zico_core::space::{Genome, SpaceKind};

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn record() -> impl Strategy<Value = BenchmarkRecord> {
    (
        prop::collection::vec(0u32..5, 6),
        prop::collection::vec(finite(), 9),
        any::<u64>(),
    )
        .prop_map(|(genes, v, seed)| BenchmarkRecord {
            genome: Genome {
                space: SpaceKind::Cell,
                genes,
            },
            proxies: ProxyValues {
                params: v[0],
                flops: v[1],
                zico: v[2],
                zico_mean_only: v[3],
                zico_std_only: v[4],
                grad_norm: v[5],
                snip: v[6],
                synflow: v[7],
            },
            accuracy: v[8],
            seed,
        })
}

proptest! {
    #[test]
    fn records_round_trip_exactly(records in prop::collection::vec(record(), 0..20)) {
        let text = records_csv(&records);
        prop_assert_eq!(parse_records_csv(&text).unwrap(), records.clone());
        prop_assert_eq!(records_csv(&parse_records_csv(&text).unwrap()), text);
    }
}
