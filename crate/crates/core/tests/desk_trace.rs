//! Tolerance checks on the desk Zipf(0.99) trace: N = 10^6, 10^6 events,
//! seed 1.

use proptest::prelude::*;
use setassoc_core::harness::run_on_trace;
use setassoc_core::{
    CacheSpec, Engine, ExperimentConfig, FilterKind, IntegerFactor, MultiRegionCache,
    MultiRegionConfig, PolicyKind, RegionSpec, Trace, TraceSource, ZipfSpec,
};

fn desk() -> (ZipfSpec, Trace) {
    let spec = ZipfSpec { n: 1_000_000, s: 0.99, length: 1_000_000, seed: 1 };
    (spec, Trace::from_zipf(&spec).unwrap())
}

fn ratio(engine: Engine, cache: CacheSpec, spec: ZipfSpec, trace: &Trace) -> f64 {
    let cfg = ExperimentConfig {
        engine,
        full: false,
        cache,
        integer_factor: IntegerFactor::DEFAULT,
        trace: TraceSource::Zipf(spec),
    };
    run_on_trace(&cfg, trace).unwrap().hit_ratio * 100.0
}

#[test]
fn lfu_within_four_points_of_reference() {
    let (spec, trace) = desk();
    let cache = CacheSpec::Single { policy: PolicyKind::Lfu, k: 8, d: 16 };
    let a = ratio(Engine::Restricted, cache, spec, &trace);
    let b = ratio(Engine::Reference, cache, spec, &trace);
    assert!((a - b).abs() <= 4.0, "restricted {a:.3}% vs reference {b:.3}%");
}

#[test]
fn w_tinylfu_within_three_points_of_reference() {
    let (spec, trace) = desk();
    let cache = CacheSpec::Multi {
        window: RegionSpec { policy: PolicyKind::Lru, k: 4, d: 16 },
        main: RegionSpec { policy: PolicyKind::Lru, k: 16, d: 16 },
        filter: FilterKind::TinyLfu,
    };
    let a = ratio(Engine::Restricted, cache, spec, &trace);
    let b = ratio(Engine::Reference, cache, spec, &trace);
    assert!((a - b).abs() <= 3.0, "restricted {a:.3}% vs reference {b:.3}%");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With and without the filter, the engines agree up to the first step
    /// where a window victim meets a full main set.
    #[test]
    fn filter_only_changes_admission(
        keys in prop::collection::vec(1u64..40, 1..400),
        main in prop::sample::select(vec![PolicyKind::Lru, PolicyKind::Lfu, PolicyKind::Fifo]),
    ) {
        let cfg = |filter| MultiRegionConfig::new(
            RegionSpec { policy: PolicyKind::Fifo, k: 2, d: 2 },
            RegionSpec { policy: main, k: 2, d: 3 },
            filter,
            40,
        );
        let mut plain = MultiRegionCache::new(cfg(FilterKind::None)).unwrap();
        let mut filtered = MultiRegionCache::new(cfg(FilterKind::TinyLfu)).unwrap();
        for &key in &keys {
            let window_set = plain.window_store().peek_set((key % 2) as usize);
            let cached = plain.main_store().live_keys().contains(&key)
                || window_set.iter().any(|e| e.key == key);
            let window_full = window_set.iter().all(|e| !e.is_empty());
            let a = plain.fetch(key).unwrap();
            let b = filtered.fetch(key).unwrap();
            let same = (a.is_hit(), a.evicted.map(|e| e.key)) == (b.is_hit(), b.evicted.map(|e| e.key));
            if !same {
                // Only a miss that pushed a window victim into a full main
                // set can tell the two apart.
                prop_assert!(!cached && window_full && a.evicted.is_some());
                break;
            }
        }
    }
}
