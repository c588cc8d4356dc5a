//! Two-region caches: a window region in front of a main region, with an
//! optional frequency-based admission filter between them (W-TinyLFU when
//! the filter is on).
//!
//! New keys always enter the window. An element evicted from the window is
//! written into way 0 of its main set and the main set is reduced to find
//! the main victim. With the filter on, the main victim is put back when its
//! counter is strictly larger than the window victim's, in which case the
//! window victim leaves instead. Equal counts admit the window victim.
//!
//! Elements carry one SCN word per region (word 0 for the window policy,
//! word 1 for the main policy) so that both metrics stay defined wherever
//! the element sits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CacheError, Result};
use crate::hyperbolic::{Hyperbolic, IntegerFactor, LOOKUPS_PER_COMPARE};
use crate::layout::{field_mask, CacheElement, LayoutConfig};
use crate::model::{Access, CacheModel};
use crate::policy::{
    insert_and_fold, AnyPolicy, BackingStore, Fifo, FetchResult, IdentityBacking, Lfu, Lru,
    Outcome, PolicyKind, SetPolicy,
};
use crate::store::{hash_to_set, OpCounter, RegisterStore};

const WINDOW: usize = 0;
const MAIN: usize = 1;

pub const DEFAULT_AGING_STRIDE: u64 = 16;
pub const DEFAULT_COUNTER_CAP: u32 = (1 << 15) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    None,
    TinyLfu,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::None => "none",
            FilterKind::TinyLfu => "TinyLFU",
        })
    }
}

impl FromStr for FilterKind {
    type Err = CacheError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "off" => Ok(FilterKind::None),
            "tinylfu" | "tiny-lfu" => Ok(FilterKind::TinyLfu),
            other => Err(CacheError::InvalidConfig(format!("unknown filter '{other}'"))),
        }
    }
}

/// What the main-region metric word holds when a window victim is admitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AdmissionScn {
    /// Reset to the main policy's just-inserted value.
    #[default]
    Refresh,
    /// Keep the word maintained while the element lived in the window.
    Carry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub policy: PolicyKind,
    pub k: usize,
    pub d: usize,
}

impl RegionSpec {
    pub fn capacity(&self) -> usize {
        self.k * self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiRegionConfig {
    pub window: RegionSpec,
    pub main: RegionSpec,
    pub filter: FilterKind,
    /// Keys must lie in `1..key_universe`.
    pub key_universe: u64,
    /// Accesses per full halving epoch (`W`).
    pub aging_window: u64,
    /// Accesses between partial halving steps (`n`).
    pub aging_stride: u64,
    pub counter_cap: u32,
    pub admission: AdmissionScn,
    pub integer_factor: IntegerFactor,
}

impl MultiRegionConfig {
    /// Defaults: `n = 16`, `W = 16 * total capacity`, 15-bit counters.
    pub fn new(window: RegionSpec, main: RegionSpec, filter: FilterKind, key_universe: u64) -> Self {
        let capacity = (window.capacity() + main.capacity()) as u64;
        MultiRegionConfig {
            window,
            main,
            filter,
            key_universe,
            aging_window: 16 * capacity,
            aging_stride: DEFAULT_AGING_STRIDE,
            counter_cap: DEFAULT_COUNTER_CAP,
            admission: AdmissionScn::Refresh,
            integer_factor: IntegerFactor::DEFAULT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.key_universe < 2 {
            return Err(CacheError::InvalidConfig(
                "key universe must contain at least one live key".into(),
            ));
        }
        if self.aging_stride == 0 || self.aging_stride >= self.aging_window {
            return Err(CacheError::InvalidConfig(format!(
                "aging stride {} must satisfy 0 < n < W = {}",
                self.aging_stride, self.aging_window
            )));
        }
        if self.counter_cap == 0 {
            return Err(CacheError::InvalidConfig("counter cap must be positive".into()));
        }
        Ok(())
    }

    /// Policy label in table form, e.g. `FIFOxLRUxTinyLFU`.
    pub fn label(&self) -> String {
        match self.filter {
            FilterKind::None => format!("{}x{}", self.window.policy, self.main.policy),
            FilterKind::TinyLfu => format!("{}x{}xTinyLFU", self.window.policy, self.main.policy),
        }
    }
}

/// Explicit per-key frequency counters with de-amortized aging: every
/// `stride` accesses the next `ceil(universe * stride / window)` counters,
/// in cyclic key order, are halved.
#[derive(Debug, Clone)]
pub struct CountingFilter {
    counters: Vec<u32>,
    cap: u32,
    accesses: u64,
    stride: u64,
    per_step: usize,
    cursor: usize,
}

impl CountingFilter {
    pub fn new(universe: u64, window: u64, stride: u64, cap: u32) -> Result<Self> {
        if universe == 0 || stride == 0 || stride >= window {
            return Err(CacheError::InvalidConfig(format!(
                "filter needs universe > 0 and 0 < n < W (universe={universe}, W={window}, n={stride})"
            )));
        }
        let per_step = (universe * stride).div_ceil(window) as usize;
        Ok(CountingFilter {
            counters: vec![0; universe as usize],
            cap,
            accesses: 0,
            stride,
            per_step,
            cursor: 0,
        })
    }

    pub fn universe(&self) -> u64 {
        self.counters.len() as u64
    }

    pub fn per_step(&self) -> usize {
        self.per_step
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn count(&self, key: u64) -> u32 {
        self.counters[key as usize]
    }

    pub fn counters(&self) -> &[u32] {
        &self.counters
    }

    /// Increments `key`'s counter and runs an aging step when one is due.
    pub fn record(&mut self, key: u64, ops: &mut OpCounter) -> Result<()> {
        let universe = self.universe();
        let slot = self
            .counters
            .get_mut(key as usize)
            .ok_or(CacheError::OutsideUniverse { key, universe })?;
        *slot = (*slot + 1).min(self.cap);
        ops.filter_reads += 1;
        ops.filter_writes += 1;
        self.accesses += 1;
        if self.accesses.is_multiple_of(self.stride) {
            self.age_step(ops);
        }
        Ok(())
    }

    /// Halves the next batch of counters in cyclic order.
    pub fn age_step(&mut self, ops: &mut OpCounter) {
        let n = self.counters.len();
        for _ in 0..self.per_step.min(n) {
            self.counters[self.cursor] >>= 1;
            self.cursor = (self.cursor + 1) % n;
        }
        ops.filter_reads += self.per_step.min(n) as u64;
        ops.filter_writes += self.per_step.min(n) as u64;
    }
}

#[derive(Debug, Clone)]
struct Region {
    store: RegisterStore,
    policy: AnyPolicy,
}

fn build_policy(kind: PolicyKind, layout: &LayoutConfig, factor: IntegerFactor) -> Result<AnyPolicy> {
    Ok(match kind {
        PolicyKind::Fifo => AnyPolicy::Fifo(Fifo),
        PolicyKind::Lru => AnyPolicy::Lru(Lru::new(layout)?),
        PolicyKind::Lfu => AnyPolicy::Lfu(Lfu::new(layout)),
        PolicyKind::Hyperbolic => AnyPolicy::Hyperbolic(Hyperbolic::with_factor(factor, layout)?),
    })
}

impl Region {
    fn new(spec: RegionSpec, factor: IntegerFactor) -> Result<Self> {
        let layout = LayoutConfig::new(spec.k, spec.d)?.with_scn_words(2)?;
        Ok(Region {
            policy: build_policy(spec.policy, &layout, factor)?,
            store: RegisterStore::new(layout)?,
        })
    }

    fn d(&self) -> usize {
        self.store.layout().d
    }

    fn k(&self) -> u64 {
        self.store.layout().k as u64
    }
}

pub struct MultiRegionCache {
    config: MultiRegionConfig,
    window: Region,
    main: Region,
    filter: CountingFilter,
    backing: Box<dyn BackingStore>,
}

impl fmt::Debug for MultiRegionCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiRegionCache")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl MultiRegionCache {
    pub fn new(config: MultiRegionConfig) -> Result<Self> {
        config.validate()?;
        let window = Region::new(config.window, config.integer_factor)?;
        let main = Region::new(config.main, config.integer_factor)?;
        let filter = CountingFilter::new(
            config.key_universe,
            config.aging_window,
            config.aging_stride,
            config.counter_cap,
        )?;
        Ok(MultiRegionCache {
            backing: Box::new(IdentityBacking {
                value_bits: window.store.layout().value_bits,
            }),
            config,
            window,
            main,
            filter,
        })
    }

    pub fn with_backing(mut self, backing: Box<dyn BackingStore>) -> Self {
        self.backing = backing;
        self
    }

    pub fn config(&self) -> &MultiRegionConfig {
        &self.config
    }

    pub fn filter(&self) -> &CountingFilter {
        &self.filter
    }

    pub fn window_store(&self) -> &RegisterStore {
        &self.window.store
    }

    pub fn main_store(&self) -> &RegisterStore {
        &self.main.store
    }

    /// Upper bound on one packet's cost. Both regions are matched on every
    /// packet; a miss may reduce both regions; the filter adds one counter
    /// update, one aging batch and the admission comparison.
    pub fn packet_ceiling(&self) -> OpCounter {
        let (kw, km) = (self.window.k(), self.main.k());
        let lookups = |r: &Region| match r.policy.kind() {
            PolicyKind::Hyperbolic => LOOKUPS_PER_COMPARE * (r.k() - 1),
            _ => 0,
        };
        let per_step = self.filter.per_step() as u64;
        OpCounter {
            tcam_matches: 2,
            register_reads: 2 + 2 * (kw + km),
            register_writes: 2 + 2 * (kw + km),
            table_lookups: lookups(&self.window) + lookups(&self.main),
            filter_reads: 1 + per_step + 2,
            filter_writes: 1 + per_step,
        }
    }

    fn total_ops(&self, filter_ops: OpCounter) -> OpCounter {
        let mut ops = self.window.store.ops();
        ops += self.main.store.ops();
        ops += filter_ops;
        ops
    }

    pub fn fetch(&mut self, key: u64) -> Result<FetchResult> {
        if key == 0 {
            return Err(CacheError::ReservedKey);
        }
        if key >= self.config.key_universe {
            return Err(CacheError::OutsideUniverse {
                key,
                universe: self.config.key_universe,
            });
        }
        self.window.store.reset_ops();
        self.main.store.reset_ops();
        let mut filter_ops = OpCounter::default();

        self.window.policy.begin_packet(&mut self.window.store, WINDOW)?;
        self.main.policy.begin_packet(&mut self.main.store, MAIN)?;
        self.filter.record(key, &mut filter_ops)?;

        let h_main = hash_to_set(key, self.main.d())?;
        let h_window = hash_to_set(key, self.window.d())?;
        let main_way = self.main.store.ternary_lookup(h_main, key)?;
        let window_way = self.window.store.ternary_lookup(h_window, key)?;

        if let Some(way) = main_way {
            let mut set = self.main.store.read_set(h_main)?;
            self.main.policy.on_hit(&mut set, way, MAIN);
            let value = set[way].value;
            self.main.store.write_set(h_main, &set)?;
            return Ok(self.finish(Outcome::Hit, value, None, filter_ops));
        }
        if let Some(way) = window_way {
            let mut set = self.window.store.read_set(h_window)?;
            self.window.policy.on_hit(&mut set, way, WINDOW);
            self.main.policy.touch(&mut set[way], MAIN);
            let value = set[way].value;
            self.window.store.write_set(h_window, &set)?;
            return Ok(self.finish(Outcome::Hit, value, None, filter_ops));
        }

        let value = self.backing.fetch_value(key)
            & field_mask(self.window.store.layout().value_bits);
        let mut wset = self.window.store.read_set(h_window)?;
        self.window.policy.age_for_insert(&mut wset, WINDOW);
        let incoming = CacheElement::with_scn(
            key,
            value,
            [self.window.policy.fresh_scn(), self.main.policy.fresh_scn()],
        );
        let window_victim =
            insert_and_fold(&self.window.policy, &mut self.window.store, &mut wset, incoming, WINDOW);
        self.window.store.write_set(h_window, &wset)?;
        if window_victim.is_empty() {
            return Ok(self.finish(Outcome::Miss, value, None, filter_ops));
        }

        let mut admitted = window_victim;
        if self.config.admission == AdmissionScn::Refresh {
            admitted.scn[MAIN] = self.main.policy.fresh_scn();
        }
        let h_admit = hash_to_set(admitted.key, self.main.d())?;
        let mut mset = self.main.store.read_set(h_admit)?;
        self.main.policy.age_for_insert(&mut mset, MAIN);
        let main_victim =
            insert_and_fold(&self.main.policy, &mut self.main.store, &mut mset, admitted, MAIN);

        let evicted = if main_victim.is_empty() {
            None
        } else {
            match self.config.filter {
                FilterKind::None => Some(main_victim),
                FilterKind::TinyLfu => {
                    filter_ops.filter_reads += 2;
                    // Way 0 still holds the admitted window victim.
                    if self.filter.count(main_victim.key) > self.filter.count(mset[0].key) {
                        let rejected = std::mem::replace(&mut mset[0], main_victim);
                        Some(rejected)
                    } else {
                        Some(main_victim)
                    }
                }
            }
        };
        self.main.store.write_set(h_admit, &mset)?;
        Ok(self.finish(Outcome::Miss, value, evicted, filter_ops))
    }

    fn finish(
        &self,
        outcome: Outcome,
        value: u64,
        evicted: Option<CacheElement>,
        filter_ops: OpCounter,
    ) -> FetchResult {
        let ops = self.total_ops(filter_ops);
        debug_assert!(ops.within(&self.packet_ceiling()), "{ops:?}");
        FetchResult {
            outcome,
            value,
            evicted,
            ops,
        }
    }
}

impl CacheModel for MultiRegionCache {
    fn access(&mut self, key: u64) -> Result<Access> {
        let r = self.fetch(key)?;
        Ok(Access {
            hit: r.is_hit(),
            evicted: r.evicted.map(|e| e.key),
            ops: r.ops,
        })
    }

    fn live_keys(&self) -> Vec<u64> {
        let mut keys = self.window.store.live_keys();
        keys.extend(self.main.store.live_keys());
        keys
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn region(policy: PolicyKind, k: usize, d: usize) -> RegionSpec {
        RegionSpec { policy, k, d }
    }

    fn tiny(filter: FilterKind) -> MultiRegionCache {
        // One window way, two main ways, single sets: easy to steer.
        let cfg = MultiRegionConfig {
            aging_window: 1_000_000,
            ..MultiRegionConfig::new(
                region(PolicyKind::Fifo, 1, 1),
                region(PolicyKind::Lru, 2, 1),
                filter,
                100,
            )
        };
        MultiRegionCache::new(cfg).unwrap()
    }

    fn main_keys(c: &MultiRegionCache) -> HashSet<u64> {
        c.main_store().live_keys().into_iter().collect()
    }

    #[test]
    fn age_step_count() {
        let f = CountingFilter::new(100, 1000, 10, DEFAULT_COUNTER_CAP).unwrap();
        assert_eq!(f.per_step(), 1);
        let f = CountingFilter::new(1000, 1000, 16, DEFAULT_COUNTER_CAP).unwrap();
        assert_eq!(f.per_step(), 16);
        assert!(CountingFilter::new(100, 10, 10, 1).is_err());
    }

    #[test]
    fn halving_is_a_right_shift() {
        let mut f = CountingFilter::new(4, 1000, 10, DEFAULT_COUNTER_CAP).unwrap();
        let mut ops = OpCounter::default();
        for _ in 0..7 {
            f.record(0, &mut ops).unwrap();
        }
        f.age_step(&mut ops);
        assert_eq!(f.count(0), 3);
        assert_eq!(f.cursor(), 1);
    }

    #[test]
    fn counters_saturate() {
        let mut f = CountingFilter::new(4, 1000, 999, 5).unwrap();
        let mut ops = OpCounter::default();
        for _ in 0..10 {
            f.record(2, &mut ops).unwrap();
        }
        assert_eq!(f.count(2), 5);
        assert!(matches!(
            f.record(4, &mut ops),
            Err(CacheError::OutsideUniverse { .. })
        ));
    }

    #[test]
    fn one_full_epoch_halves_every_counter() {
        // Over one epoch of W accesses every counter is halved exactly once,
        // so it ends at most (snapshot + hits before its halving) / 2 plus the
        // hits after it.
        let (universe, window, stride) = (50u64, 200u64, 8u64);
        let mut f = CountingFilter::new(universe, window, stride, DEFAULT_COUNTER_CAP).unwrap();
        let mut ops = OpCounter::default();
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) % universe
        };
        for _ in 0..333 {
            f.record(next(), &mut ops).unwrap();
        }
        let snapshot = f.counters().to_vec();
        let n = universe as usize;
        let mut halved = vec![false; n];
        let mut before = vec![0u32; n];
        let mut after = vec![0u32; n];
        for _ in 0..window {
            let key = next() as usize;
            let cursor = f.cursor();
            f.record(key as u64, &mut ops).unwrap();
            if halved[key] {
                after[key] += 1;
            } else {
                before[key] += 1;
            }
            let mut c = cursor;
            while c != f.cursor() {
                assert!(!halved[c], "counter {c} halved twice");
                halved[c] = true;
                c = (c + 1) % n;
            }
        }
        assert!(halved.iter().all(|&h| h));
        for key in 0..n {
            let bound = (snapshot[key] + before[key]) / 2 + after[key];
            assert!(
                f.counters()[key] <= bound,
                "key {key}: {} > {bound}",
                f.counters()[key]
            );
    }
    }

    #[test]
    fn main_hit_cost() {
        let mut c = tiny(FilterKind::TinyLfu);
        for k in [1, 2] {
            c.fetch(k).unwrap();
        }
        // key 1 was pushed to main by key 2.
        assert!(main_keys(&c).contains(&1));
        let r = c.fetch(1).unwrap();
        assert!(r.is_hit());
        assert_eq!(r.ops.tcam_matches, 2);
        assert_eq!(r.ops.register_reads, 1);
        assert_eq!(r.ops.register_writes, 1);
        assert_eq!(r.ops.filter_reads, 1);
        assert_eq!(r.ops.filter_writes, 1);
        assert_eq!(c.filter().count(1), 2);
    }

    #[test]
    fn frequent_window_victim_displaces_main_victim() {
        let mut c = tiny(FilterKind::TinyLfu);
        // Main holds {1, 2}; window holds 3.
        for k in [1, 2, 3] {
            c.fetch(k).unwrap();
        }
        assert_eq!(main_keys(&c), HashSet::from([1, 2]));
        // Raise key 3's count while it sits in the window.
        for _ in 0..4 {
            assert!(c.fetch(3).unwrap().is_hit());
        }
        assert_eq!((c.filter().count(3), c.filter().count(1)), (5, 1));
        // Key 4 pushes 3 out of the window; main's LRU victim is 1.
        let r = c.fetch(4).unwrap();
        assert_eq!(r.evicted.map(|e| e.key), Some(1));
        assert_eq!(main_keys(&c), HashSet::from([2, 3]));
    }

    #[test]
    fn infrequent_window_victim_is_rejected() {
        let mut c = tiny(FilterKind::TinyLfu);
        for k in [1, 2] {
            c.fetch(k).unwrap();
        }
        for _ in 0..5 {
            c.fetch(1).unwrap();
        }
        c.fetch(3).unwrap();
        // Window: 3 (count 1). Main: {1 (count 6), 2 (count 1)} -> give 2 a lead.
        for _ in 0..5 {
            c.fetch(2).unwrap();
        }
        c.fetch(3).unwrap();
        assert_eq!(c.filter().count(3), 2);
        let before = main_keys(&c);
        let r = c.fetch(4).unwrap();
        assert_eq!(r.evicted.map(|e| e.key), Some(3));
        assert_eq!(main_keys(&c), before);
    }

    #[test]
    fn equal_counts_admit_the_window_victim() {
        let mut c = tiny(FilterKind::TinyLfu);
        for k in [1, 2, 3] {
            c.fetch(k).unwrap();
        }
        // Window victim 3 (count 1) meets main victim 1 (count 1): the main
        // victim is only restored on a strictly larger count.
        let r = c.fetch(4).unwrap();
        assert_eq!(r.evicted.map(|e| e.key), Some(1));
        assert_eq!(main_keys(&c), HashSet::from([2, 3]));
    }

    #[test]
    fn filterless_admits_unconditionally() {
        let mut c = tiny(FilterKind::None);
        for k in [1, 2, 3, 4] {
            c.fetch(k).unwrap();
        }
        assert_eq!(main_keys(&c), HashSet::from([2, 3]));
    }

    #[test]
    fn regions_stay_disjoint_and_bounded() {
        let cfg = MultiRegionConfig::new(
            region(PolicyKind::Lru, 2, 2),
            region(PolicyKind::Lfu, 2, 3),
            FilterKind::TinyLfu,
            40,
        );
        let mut c = MultiRegionCache::new(cfg).unwrap();
        let mut state = 7u64;
        for _ in 0..5000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let key = 1 + (state >> 40) % 39;
            let r = c.fetch(key).unwrap();
            assert!(r.ops.within(&c.packet_ceiling()));
            let w: HashSet<u64> = c.window_store().live_keys().into_iter().collect();
            let m = main_keys(&c);
            assert!(w.is_disjoint(&m));
            assert!(w.len() + m.len() <= 4 + 6);
            assert!(w.contains(&key) || m.contains(&key));
        }
    }

    #[test]
    fn rejects_keys_outside_universe() {
        let mut c = tiny(FilterKind::TinyLfu);
        assert!(matches!(
            c.fetch(100),
            Err(CacheError::OutsideUniverse { .. })
        ));
        assert!(matches!(c.fetch(0), Err(CacheError::ReservedKey)));
    }

    #[test]
    fn admission_word_refresh_or_carry() {
        // Key 2 is hit twice in the window, so its main (LFU) word reaches 3.
        let main_word = |admission| {
            let cfg = MultiRegionConfig {
                admission,
                ..MultiRegionConfig::new(
                    region(PolicyKind::Lru, 1, 1),
                    region(PolicyKind::Lfu, 2, 1),
                    FilterKind::None,
                    10,
                )
            };
            let mut c = MultiRegionCache::new(cfg).unwrap();
            for key in [2, 2, 2, 3] {
                c.fetch(key).unwrap();
            }
            let set = c.main_store().peek_set(0);
            set.iter().find(|e| e.key == 2).unwrap().scn[MAIN]
        };
        assert_eq!(main_word(AdmissionScn::Refresh), 1);
        assert_eq!(main_word(AdmissionScn::Carry), 3);
    }

    #[test]
    fn labels() {
        let cfg = MultiRegionConfig::new(
            region(PolicyKind::Fifo, 4, 16),
            region(PolicyKind::Lru, 16, 16),
            FilterKind::TinyLfu,
            10,
        );
        assert_eq!(cfg.label(), "FIFOxLRUxTinyLFU");
        assert_eq!(cfg.aging_window, 16 * (64 + 256));
    }
}
