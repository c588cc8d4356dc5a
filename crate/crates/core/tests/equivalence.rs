use proptest::prelude::*;
use setassoc_core::harness::hit_stream;
use setassoc_core::oracle::{Associativity, ReferenceCache};
use setassoc_core::traces::{generate_zipf, parse_trace};
use setassoc_core::{
    Cache, CacheModel, CacheSpec, Engine, ExperimentConfig, FilterKind, IntegerFactor,
    LayoutConfig, MultiRegionCache, MultiRegionConfig, PolicyKind, RegionSpec, Trace,
    TraceFormat, TraceSource, ZipfSpec,
};

fn restricted(policy: PolicyKind, k: usize, d: usize) -> Cache {
    let layout = LayoutConfig::new(k, d).unwrap();
    match policy {
        PolicyKind::Fifo => Cache::fifo(layout).unwrap(),
        PolicyKind::Lru => Cache::lru(layout).unwrap(),
        _ => unreachable!(),
    }
}

fn replay(model: &mut dyn CacheModel, keys: &[u64]) -> Vec<(bool, Option<u64>)> {
    keys.iter()
        .map(|&k| {
            let a = model.access(k).unwrap();
            (a.hit, a.evicted)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lru_and_fifo_match_reference(
        k in 1usize..6,
        d in 1usize..5,
        keys in prop::collection::vec(1u64..40, 1..400),
    ) {
        for policy in [PolicyKind::Fifo, PolicyKind::Lru] {
            let mut a = restricted(policy, k, d);
            let mut b = ReferenceCache::new(Associativity::KWay { k, d }, policy).unwrap();
            prop_assert_eq!(replay(&mut a, &keys), replay(&mut b, &keys));
        }
    }

    #[test]
    fn filterless_fifo_lru_matches_reference(
        kw in 1usize..4,
        dw in 1usize..4,
        km in 1usize..5,
        dm in 1usize..4,
        keys in prop::collection::vec(1u64..50, 1..400),
    ) {
        let cfg = MultiRegionConfig::new(
            RegionSpec { policy: PolicyKind::Fifo, k: kw, d: dw },
            RegionSpec { policy: PolicyKind::Lru, k: km, d: dm },
            FilterKind::None,
            50,
        );
        let mut a = MultiRegionCache::new(cfg).unwrap();
        let mut b = ReferenceCache::multi(&cfg, false).unwrap();
        prop_assert_eq!(replay(&mut a, &keys), replay(&mut b, &keys));
    }

    #[test]
    fn full_is_one_set_of_capacity_ways(
        cap in 1usize..12,
        keys in prop::collection::vec(1u64..30, 1..300),
    ) {
        for policy in PolicyKind::ALL {
            let mut a = ReferenceCache::new(Associativity::Full { capacity: cap }, policy).unwrap();
            let mut b = ReferenceCache::new(Associativity::KWay { k: cap, d: 1 }, policy).unwrap();
            prop_assert_eq!(replay(&mut a, &keys), replay(&mut b, &keys));
        }
    }

    #[test]
    fn reference_lru_hit_sets_are_nested(
        small in 1usize..10,
        extra in 1usize..10,
        keys in prop::collection::vec(1u64..30, 1..300),
    ) {
        let mut a = ReferenceCache::new(Associativity::Full { capacity: small }, PolicyKind::Lru).unwrap();
        let mut b = ReferenceCache::new(Associativity::Full { capacity: small + extra }, PolicyKind::Lru).unwrap();
        for &k in &keys {
            let (ha, _) = a.fetch(k).unwrap();
            let (hb, _) = b.fetch(k).unwrap();
            prop_assert!(!ha || hb, "hit at capacity {} but not at {}", small, small + extra);
        }
    }

    #[test]
    fn remapping_preserves_hit_streams(
        raw in prop::collection::vec(prop::sample::select(vec![3u64, 17, 99, 1 << 40, u64::MAX, 12, 5000]), 1..200),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        std::fs::write(&path, raw.iter().map(|k| format!("{k}\n")).collect::<String>()).unwrap();
        let remapped = parse_trace(&path, &TraceFormat::Plain).unwrap();
        // Fully associative, so placement cannot depend on key values.
        let mut a = ReferenceCache::new(Associativity::Full { capacity: 3 }, PolicyKind::Lru).unwrap();
        let mut b = ReferenceCache::new(Associativity::Full { capacity: 3 }, PolicyKind::Lru).unwrap();
        let hits_raw: Vec<bool> = raw.iter().map(|&k| a.fetch(k).unwrap().0).collect();
        let hits_new: Vec<bool> = remapped.iter().map(|&k| b.fetch(k).unwrap().0).collect();
        prop_assert_eq!(hits_raw, hits_new);
        let mut distinct = raw.clone();
        distinct.sort();
        distinct.dedup();
        prop_assert_eq!(*remapped.iter().max().unwrap() as usize, distinct.len());
    }
}

#[test]
fn restricted_lru_equals_reference_through_the_harness() {
    let spec = ZipfSpec { n: 50_000, s: 0.99, length: 100_000, seed: 5 };
    let trace = Trace::from_zipf(&spec).unwrap();
    let cfg = |engine| ExperimentConfig {
        engine,
        full: false,
        cache: CacheSpec::Single { policy: PolicyKind::Lru, k: 8, d: 16 },
        integer_factor: IntegerFactor::DEFAULT,
        trace: TraceSource::Zipf(spec),
    };
    assert_eq!(
        hit_stream(&cfg(Engine::Restricted), &trace).unwrap(),
        hit_stream(&cfg(Engine::Reference), &trace).unwrap()
    );
}

#[test]
fn zipf_deciles_are_non_increasing() {
    let n = 1000u64;
    let keys = generate_zipf(&ZipfSpec { n, s: 0.99, length: 200_000, seed: 2 }).unwrap();
    let mut deciles = [0u64; 10];
    for k in keys {
        deciles[((k - 1) * 10 / n) as usize] += 1;
    }
    assert!(deciles.windows(2).all(|w| w[0] >= w[1]), "{deciles:?}");
}

#[test]
fn lfu_and_hyperbolic_stay_close_to_reference() {
    // Not exact (ties and quantization), but never far apart.
    let spec = ZipfSpec { n: 20_000, s: 0.99, length: 100_000, seed: 4 };
    let trace = Trace::from_zipf(&spec).unwrap();
    for policy in [PolicyKind::Lfu, PolicyKind::Hyperbolic] {
        let ratio = |engine| {
            let cfg = ExperimentConfig {
                engine,
                full: false,
                cache: CacheSpec::Single { policy, k: 8, d: 16 },
                integer_factor: IntegerFactor::DEFAULT,
                trace: TraceSource::Zipf(spec),
            };
            let hits = hit_stream(&cfg, &trace).unwrap();
            hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
        };
        let (a, b) = (ratio(Engine::Restricted), ratio(Engine::Reference));
        assert!((a - b).abs() < 0.05, "{policy}: {a} vs {b}");
    }
}
