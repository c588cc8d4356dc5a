//! Single-region cache engines under the restricted data-plane model.
//!
//! Every policy follows the same shape. A packet does one ternary match on
//! its set; a hit updates the hit element's metric and writes the set back.
//! A miss writes the new element into way 0, takes the previous way-0
//! occupant as the eviction candidate and threads it through ways
//! `1..k` with a fixed sequence of compare-and-swap steps. Whatever
//! candidate falls out of way `k - 1` leaves the cache. No step iterates a
//! data-dependent number of times, and all metric arithmetic is integer
//! add/subtract/compare.
//!
//! The policy only decides the comparator and how metric words change; see
//! [`SetPolicy`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CacheError, Result};
use crate::hyperbolic::Hyperbolic;
use crate::layout::{field_mask, CacheElement, LayoutConfig};
use crate::model::{Access, CacheModel};
use crate::store::{hash_to_set, OpCounter, RegisterStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    Fifo,
    Lru,
    Lfu,
    Hyperbolic,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Fifo,
        PolicyKind::Lru,
        PolicyKind::Lfu,
        PolicyKind::Hyperbolic,
    ];
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Fifo => "FIFO",
            PolicyKind::Lru => "LRU",
            PolicyKind::Lfu => "LFU",
            PolicyKind::Hyperbolic => "Hyperbolic",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = CacheError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fifo" => Ok(PolicyKind::Fifo),
            "lru" => Ok(PolicyKind::Lru),
            "lfu" => Ok(PolicyKind::Lfu),
            "hyperbolic" | "hyper" => Ok(PolicyKind::Hyperbolic),
            other => Err(CacheError::InvalidConfig(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    Miss,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResult {
    pub outcome: Outcome,
    /// The cached value on a hit, the backing-store value on a miss.
    pub value: u64,
    /// The element that left the cache during this packet, if any.
    pub evicted: Option<CacheElement>,
    pub ops: OpCounter,
}

impl FetchResult {
    pub fn is_hit(&self) -> bool {
        self.outcome == Outcome::Hit
    }
}

/// Where values come from on a miss.
pub trait BackingStore: Send {
    fn fetch_value(&self, key: u64) -> u64;
}

/// Returns the key itself, truncated to the value width.
#[derive(Debug, Clone, Copy)]
pub struct IdentityBacking {
    pub value_bits: u32,
}

impl BackingStore for IdentityBacking {
    fn fetch_value(&self, key: u64) -> u64 {
        key & field_mask(self.value_bits)
    }
}

/// Explicit key→value table; keys missing from the table fall back to the
/// identity mapping.
#[derive(Debug, Clone)]
pub struct TableBacking {
    pub table: HashMap<u64, u64>,
    pub fallback: IdentityBacking,
}

impl BackingStore for TableBacking {
    fn fetch_value(&self, key: u64) -> u64 {
        self.table
            .get(&key)
            .copied()
            .unwrap_or_else(|| self.fallback.fetch_value(key))
    }
}

pub fn fetch_value(backing: &dyn BackingStore, key: u64) -> u64 {
    backing.fetch_value(key)
}

/// Metric handling of one region's replacement policy. `slot` selects which
/// SCN word of an element belongs to this region.
pub trait SetPolicy {
    fn kind(&self) -> PolicyKind;

    /// Advances per-packet clocks. May rescale stored metrics when a clock is
    /// about to overflow its field.
    fn begin_packet(&mut self, store: &mut RegisterStore, slot: usize) -> Result<()>;

    /// Updates one element's own metric for an access.
    fn touch(&self, element: &mut CacheElement, slot: usize);

    /// Hit on `set[way]`.
    fn on_hit(&self, set: &mut [CacheElement], way: usize, slot: usize) {
        self.touch(&mut set[way], slot);
    }

    /// Applied to the old contents of a set just before a new element is
    /// written into way 0.
    fn age_for_insert(&self, _set: &mut [CacheElement], _slot: usize) {}

    /// Metric word of a just-inserted element.
    fn fresh_scn(&self) -> u64;

    /// Reduce comparator: swap the candidate into this way iff true.
    fn prefers_swap(
        &self,
        stored: &CacheElement,
        candidate: &CacheElement,
        slot: usize,
        ops: &mut OpCounter,
    ) -> bool;
}

#[derive(Debug, Clone, Default)]
pub struct Fifo;

impl SetPolicy for Fifo {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Fifo
    }

    fn begin_packet(&mut self, _: &mut RegisterStore, _: usize) -> Result<()> {
        Ok(())
    }

    fn touch(&self, _: &mut CacheElement, _: usize) {}

    fn fresh_scn(&self) -> u64 {
        0
    }

    fn prefers_swap(&self, _: &CacheElement, _: &CacheElement, _: usize, _: &mut OpCounter) -> bool {
        true
    }
}

/// Recency via a global sequence number stamped on every access.
#[derive(Debug, Clone)]
pub struct Lru {
    clock: u64,
    max: u64,
}

impl Lru {
    pub fn new(layout: &LayoutConfig) -> Result<Self> {
        let max = layout.scn_max();
        if max <= layout.k as u64 + 1 {
            return Err(CacheError::InvalidLayout(format!(
                "scn_bits={} too narrow for LRU over {} ways",
                layout.scn_bits, layout.k
            )));
        }
        Ok(Lru { clock: 0, max })
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }
}

/// Replaces each live metric in a set by its rank (1-based), keeping order.
fn rank_compress(set: &mut [CacheElement], slot: usize) -> u64 {
    let mut live: Vec<usize> = (0..set.len()).filter(|&w| !set[w].is_empty()).collect();
    live.sort_by_key(|&w| set[w].scn[slot]);
    for (rank, &w) in live.iter().enumerate() {
        set[w].scn[slot] = rank as u64 + 1;
    }
    live.len() as u64
}

impl SetPolicy for Lru {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Lru
    }

    fn begin_packet(&mut self, store: &mut RegisterStore, slot: usize) -> Result<()> {
        if self.clock >= self.max {
            let mut top = 0;
            store.maintain(|set| top = top.max(rank_compress(set, slot)))?;
            self.clock = top;
        }
        self.clock += 1;
        Ok(())
    }

    fn touch(&self, element: &mut CacheElement, slot: usize) {
        element.scn[slot] = self.clock;
    }

    fn fresh_scn(&self) -> u64 {
        self.clock
    }

    fn prefers_swap(&self, stored: &CacheElement, candidate: &CacheElement, slot: usize, _: &mut OpCounter) -> bool {
        stored.scn[slot] < candidate.scn[slot]
    }
}

/// Frequency with per-set aging: an access to a set raises the touched
/// element's count and lowers every other live count in that set by one,
/// never below 1.
#[derive(Debug, Clone)]
pub struct Lfu {
    max: u64,
}

impl Lfu {
    pub fn new(layout: &LayoutConfig) -> Self {
        Lfu {
            max: layout.scn_max(),
        }
    }
}

fn age_others(set: &mut [CacheElement], skip: Option<usize>, slot: usize) {
    for (way, e) in set.iter_mut().enumerate() {
        if Some(way) != skip && !e.is_empty() {
            e.scn[slot] = e.scn[slot].saturating_sub(1).max(1);
        }
    }
}

impl SetPolicy for Lfu {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Lfu
    }

    fn begin_packet(&mut self, _: &mut RegisterStore, _: usize) -> Result<()> {
        Ok(())
    }

    fn touch(&self, element: &mut CacheElement, slot: usize) {
        element.scn[slot] = (element.scn[slot] + 1).min(self.max);
    }

    fn on_hit(&self, set: &mut [CacheElement], way: usize, slot: usize) {
        self.touch(&mut set[way], slot);
        age_others(set, Some(way), slot);
    }

    fn age_for_insert(&self, set: &mut [CacheElement], slot: usize) {
        age_others(set, None, slot);
    }

    fn fresh_scn(&self) -> u64 {
        1
    }

    fn prefers_swap(&self, stored: &CacheElement, candidate: &CacheElement, slot: usize, _: &mut OpCounter) -> bool {
        stored.scn[slot] < candidate.scn[slot]
    }
}

#[derive(Debug, Clone)]
pub enum AnyPolicy {
    Fifo(Fifo),
    Lru(Lru),
    Lfu(Lfu),
    Hyperbolic(Hyperbolic),
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $body:expr) => {
        match $self {
            AnyPolicy::Fifo($p) => $body,
            AnyPolicy::Lru($p) => $body,
            AnyPolicy::Lfu($p) => $body,
            AnyPolicy::Hyperbolic($p) => $body,
        }
    };
}

impl SetPolicy for AnyPolicy {
    fn kind(&self) -> PolicyKind {
        dispatch!(self, p => p.kind())
    }

    fn begin_packet(&mut self, store: &mut RegisterStore, slot: usize) -> Result<()> {
        dispatch!(self, p => p.begin_packet(store, slot))
    }

    fn touch(&self, element: &mut CacheElement, slot: usize) {
        dispatch!(self, p => p.touch(element, slot))
    }

    fn on_hit(&self, set: &mut [CacheElement], way: usize, slot: usize) {
        dispatch!(self, p => p.on_hit(set, way, slot))
    }

    fn age_for_insert(&self, set: &mut [CacheElement], slot: usize) {
        dispatch!(self, p => p.age_for_insert(set, slot))
    }

    fn fresh_scn(&self) -> u64 {
        dispatch!(self, p => p.fresh_scn())
    }

    fn prefers_swap(
        &self,
        stored: &CacheElement,
        candidate: &CacheElement,
        slot: usize,
        ops: &mut OpCounter,
    ) -> bool {
        dispatch!(self, p => p.prefers_swap(stored, candidate, slot, ops))
    }
}

/// Writes `incoming` into way 0 and reduces the displaced element through
/// ways `1..k`. Returns the final candidate, which is empty when the set had
/// room. Charges one fold step per way.
pub(crate) fn insert_and_fold<P: SetPolicy + ?Sized>(
    policy: &P,
    store: &mut RegisterStore,
    set: &mut [CacheElement],
    incoming: CacheElement,
    slot: usize,
) -> CacheElement {
    let mut candidate = std::mem::replace(&mut set[0], incoming);
    store.record_fold_step();
    for stored in set.iter_mut().skip(1) {
        store.record_fold_step();
        if policy.prefers_swap(stored, &candidate, slot, store.ops_mut()) {
            std::mem::swap(stored, &mut candidate);
        }
    }
    candidate
}

/// A single-region cache: one register store driven by one policy.
pub struct Cache {
    store: RegisterStore,
    policy: AnyPolicy,
    backing: Box<dyn BackingStore>,
}

impl fmt::Debug for Cache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cache")
            .field("layout", self.store.layout())
            .field("policy", &self.policy)
            .finish_non_exhaustive()
    }
}

impl Cache {
    pub fn new(layout: LayoutConfig, policy: AnyPolicy) -> Result<Self> {
        let store = RegisterStore::new(layout)?;
        Ok(Cache {
            backing: Box::new(IdentityBacking {
                value_bits: layout.value_bits,
            }),
            store,
            policy,
        })
    }

    pub fn fifo(layout: LayoutConfig) -> Result<Self> {
        Cache::new(layout, AnyPolicy::Fifo(Fifo))
    }

    pub fn lru(layout: LayoutConfig) -> Result<Self> {
        let policy = AnyPolicy::Lru(Lru::new(&layout)?);
        Cache::new(layout, policy)
    }

    pub fn lfu(layout: LayoutConfig) -> Result<Self> {
        Cache::new(layout, AnyPolicy::Lfu(Lfu::new(&layout)))
    }

    pub fn hyperbolic(layout: LayoutConfig, policy: Hyperbolic) -> Result<Self> {
        policy.check_layout(&layout)?;
        Cache::new(layout, AnyPolicy::Hyperbolic(policy))
    }

    pub fn with_backing(mut self, backing: Box<dyn BackingStore>) -> Self {
        self.backing = backing;
        self
    }

    pub fn store(&self) -> &RegisterStore {
        &self.store
    }

    pub fn policy(&self) -> &AnyPolicy {
        &self.policy
    }

    pub fn layout(&self) -> &LayoutConfig {
        self.store.layout()
    }

    /// Exact per-packet cost of a hit.
    pub fn hit_cost() -> OpCounter {
        OpCounter {
            tcam_matches: 1,
            register_reads: 1,
            register_writes: 1,
            ..OpCounter::default()
        }
    }

    /// Upper bound on the per-packet cost of a miss.
    pub fn miss_ceiling(&self) -> OpCounter {
        let k = self.layout().k as u64;
        OpCounter {
            tcam_matches: 1,
            register_reads: 1 + 2 * k,
            register_writes: 1 + 2 * k,
            table_lookups: match self.policy.kind() {
                PolicyKind::Hyperbolic => crate::hyperbolic::LOOKUPS_PER_COMPARE * (k - 1),
                _ => 0,
            },
            ..OpCounter::default()
        }
    }

    pub fn fetch(&mut self, key: u64) -> Result<FetchResult> {
        let layout = *self.store.layout();
        if key == 0 {
            return Err(CacheError::ReservedKey);
        }
        self.store.reset_ops();
        self.policy.begin_packet(&mut self.store, 0)?;
        let h = hash_to_set(key, layout.d)?;
        let hit_way = self.store.ternary_lookup(h, key)?;
        let mut set = self.store.read_set(h)?;

        let result = match hit_way {
            Some(way) => {
                self.policy.on_hit(&mut set, way, 0);
                let value = set[way].value;
                self.store.write_set(h, &set)?;
                FetchResult {
                    outcome: Outcome::Hit,
                    value,
                    evicted: None,
                    ops: self.store.ops(),
                }
            }
            None => {
                let value = self.backing.fetch_value(key) & field_mask(layout.value_bits);
                self.policy.age_for_insert(&mut set, 0);
                let incoming = CacheElement::new(key, value, self.policy.fresh_scn());
                let victim = insert_and_fold(&self.policy, &mut self.store, &mut set, incoming, 0);
                self.store.write_set(h, &set)?;
                FetchResult {
                    outcome: Outcome::Miss,
                    value,
                    evicted: (!victim.is_empty()).then_some(victim),
                    ops: self.store.ops(),
                }
            }
        };
        debug_assert!(match result.outcome {
            Outcome::Hit => result.ops == Cache::hit_cost(),
            Outcome::Miss => result.ops.within(&self.miss_ceiling()),
        });
        Ok(result)
    }
}

impl CacheModel for Cache {
    fn access(&mut self, key: u64) -> Result<Access> {
        let r = self.fetch(key)?;
        Ok(Access {
            hit: r.is_hit(),
            evicted: r.evicted.map(|e| e.key),
            ops: r.ops,
        })
    }

    fn live_keys(&self) -> Vec<u64> {
        self.store.live_keys()
    }
}
