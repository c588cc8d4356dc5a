//! Unrestricted reference caches.
//!
//! These keep explicit per-entry metadata (insertion time, last access,
//! frequency) and pick victims by scanning the whole set, with exact
//! integer arithmetic throughout. They serve as the test oracle for the
//! restricted engines and as the "unrestricted" rows of the experiment
//! tables. Fully associative caches are the `k = capacity, d = 1` case.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CacheError, Result};
use crate::hyperbolic::{Hyperbolic, IntegerFactor, LogTable, DEFAULT_MAX_SCN};
use crate::layout::LayoutConfig;
use crate::model::{Access, CacheModel};
use crate::multiregion::{FilterKind, MultiRegionConfig};
use crate::policy::{AnyPolicy, Cache, PolicyKind};
use crate::store::OpCounter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Associativity {
    Full { capacity: usize },
    KWay { k: usize, d: usize },
}

impl Associativity {
    /// `(k, d)`; a fully associative cache is one set of `capacity` ways.
    pub fn geometry(&self) -> (usize, usize) {
        match *self {
            Associativity::Full { capacity } => (capacity, 1),
            Associativity::KWay { k, d } => (k, d),
        }
    }
}

/// How the reference LFU ages its counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LfuAging {
    /// Same rule as the restricted engine: an access to a set lowers every
    /// other live count in it by one, floored at 1.
    #[default]
    PerSet,
    /// Plain access counts since insertion.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    key: u64,
    inserted: u64,
    last: u64,
    freq: u64,
}

impl Entry {
    fn fresh(key: u64, now: u64) -> Self {
        Entry {
            key,
            inserted: now,
            last: now,
            freq: 1,
        }
    }
}

/// `a.freq / (now - a.inserted)` against the same for `b`, by
/// cross-multiplication.
fn cmp_hyperbolic(a: &Entry, b: &Entry, now: u64) -> Ordering {
    let la = now.saturating_sub(a.inserted).max(1) as u128;
    let lb = now.saturating_sub(b.inserted).max(1) as u128;
    (a.freq as u128 * lb).cmp(&(b.freq as u128 * la))
}

#[derive(Debug, Clone)]
struct RefRegion {
    policy: PolicyKind,
    k: usize,
    d: usize,
    sets: Vec<Vec<Entry>>,
    lfu_aging: LfuAging,
}

impl RefRegion {
    fn new(policy: PolicyKind, assoc: Associativity, lfu_aging: LfuAging) -> Result<Self> {
        let (k, d) = assoc.geometry();
        if k == 0 || d == 0 {
            return Err(CacheError::InvalidConfig(format!(
                "reference cache needs k, d >= 1 (k={k}, d={d})"
            )));
        }
        Ok(RefRegion {
            policy,
            k,
            d,
            sets: vec![Vec::with_capacity(k.min(4096)); d],
            lfu_aging,
        })
    }

    fn set_of(&self, key: u64) -> usize {
        (key % self.d as u64) as usize
    }

    fn find(&self, key: u64) -> Option<usize> {
        self.sets[self.set_of(key)].iter().position(|e| e.key == key)
    }

    fn age_others(&mut self, h: usize, skip: Option<usize>) {
        if self.policy == PolicyKind::Lfu && self.lfu_aging == LfuAging::PerSet {
            for (i, e) in self.sets[h].iter_mut().enumerate() {
                if Some(i) != skip {
                    e.freq = e.freq.saturating_sub(1).max(1);
                }
            }
        }
    }

    fn hit(&mut self, key: u64, idx: usize, now: u64) {
        let h = self.set_of(key);
        let e = &mut self.sets[h][idx];
        e.last = now;
        e.freq += 1;
        self.age_others(h, Some(idx));
    }

    fn victim(&self, h: usize, now: u64) -> usize {
        let set = &self.sets[h];
        let mut best = 0;
        for i in 1..set.len() {
            let (a, b) = (&set[i], &set[best]);
            let lower = match self.policy {
                PolicyKind::Fifo => a.inserted < b.inserted,
                PolicyKind::Lru => a.last < b.last,
                PolicyKind::Lfu => (a.freq, a.last) < (b.freq, b.last),
                PolicyKind::Hyperbolic => cmp_hyperbolic(a, b, now) == Ordering::Less,
            };
            if lower {
                best = i;
            }
        }
        best
    }

    /// Inserts `entry`, returning whatever had to leave.
    fn insert(&mut self, entry: Entry, now: u64) -> Option<Entry> {
        let h = self.set_of(entry.key);
        self.age_others(h, None);
        if self.sets[h].len() < self.k {
            self.sets[h].push(entry);
            return None;
        }
        let v = self.victim(h, now);
        Some(std::mem::replace(&mut self.sets[h][v], entry))
    }

    fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.sets.iter().flatten().map(|e| e.key)
    }
}

#[derive(Debug, Clone)]
struct RefMulti {
    window: RefRegion,
    main: RefRegion,
    filter: FilterKind,
    counters: Vec<u32>,
    cap: u32,
    aging_window: u64,
}

#[derive(Debug, Clone)]
enum Inner {
    Single(RefRegion),
    Multi(Box<RefMulti>),
}

#[derive(Debug, Clone)]
pub struct ReferenceCache {
    inner: Inner,
    clock: u64,
}

impl ReferenceCache {
    pub fn new(assoc: Associativity, policy: PolicyKind) -> Result<Self> {
        ReferenceCache::with_lfu_aging(assoc, policy, LfuAging::PerSet)
    }

    pub fn with_lfu_aging(assoc: Associativity, policy: PolicyKind, aging: LfuAging) -> Result<Self> {
        Ok(ReferenceCache {
            inner: Inner::Single(RefRegion::new(policy, assoc, aging)?),
            clock: 0,
        })
    }

    /// Reference two-region cache. Counter aging halves every counter at
    /// once every `W` accesses; the tie rule of the admission comparison
    /// matches the restricted engine.
    pub fn multi(config: &MultiRegionConfig, full: bool) -> Result<Self> {
        config.validate()?;
        let assoc = |k: usize, d: usize| {
            if full {
                Associativity::Full { capacity: k * d }
            } else {
                Associativity::KWay { k, d }
            }
        };
        let w = config.window;
        let m = config.main;
        Ok(ReferenceCache {
            inner: Inner::Multi(Box::new(RefMulti {
                window: RefRegion::new(w.policy, assoc(w.k, w.d), LfuAging::PerSet)?,
                main: RefRegion::new(m.policy, assoc(m.k, m.d), LfuAging::PerSet)?,
                filter: config.filter,
                counters: vec![0; config.key_universe as usize],
                cap: config.counter_cap,
                aging_window: config.aging_window,
            })),
            clock: 0,
        })
    }

    /// Returns whether `key` hit and the key that left the cache, if any.
    pub fn fetch(&mut self, key: u64) -> Result<(bool, Option<u64>)> {
        if key == 0 {
            return Err(CacheError::ReservedKey);
        }
        self.clock += 1;
        let now = self.clock;
        match &mut self.inner {
            Inner::Single(region) => Ok(match region.find(key) {
                Some(idx) => {
                    region.hit(key, idx, now);
                    (true, None)
                }
                None => (false, region.insert(Entry::fresh(key, now), now).map(|e| e.key)),
            }),
            Inner::Multi(m) => m.fetch(key, now),
        }
    }

    pub fn keys(&self) -> Vec<u64> {
        match &self.inner {
            Inner::Single(r) => r.keys().collect(),
            Inner::Multi(m) => m.window.keys().chain(m.main.keys()).collect(),
        }
    }

    fn describe_set(&self, key: u64) -> String {
        let mut out = String::new();
        let regions: Vec<(&str, &RefRegion)> = match &self.inner {
            Inner::Single(r) => vec![("set", r)],
            Inner::Multi(m) => vec![("window", &m.window), ("main", &m.main)],
        };
        for (name, r) in regions {
            let h = r.set_of(key);
            let _ = write!(out, "{name}[{h}]:");
            for e in &r.sets[h] {
                let _ = write!(
                    out,
                    " {}(ins={},last={},freq={})",
                    e.key, e.inserted, e.last, e.freq
                );
            }
            out.push('\n');
        }
        out
    }
}

impl RefMulti {
    fn fetch(&mut self, key: u64, now: u64) -> Result<(bool, Option<u64>)> {
        let universe = self.counters.len() as u64;
        let c = self
            .counters
            .get_mut(key as usize)
            .ok_or(CacheError::OutsideUniverse { key, universe })?;
        *c = (*c + 1).min(self.cap);
        if now.is_multiple_of(self.aging_window) {
            self.counters.iter_mut().for_each(|c| *c >>= 1);
        }

        if let Some(idx) = self.main.find(key) {
            self.main.hit(key, idx, now);
            return Ok((true, None));
        }
        if let Some(idx) = self.window.find(key) {
            self.window.hit(key, idx, now);
            return Ok((true, None));
        }
        let Some(window_victim) = self.window.insert(Entry::fresh(key, now), now) else {
            return Ok((false, None));
        };
        let h = self.main.set_of(window_victim.key);
        self.main.age_others(h, None);
        if self.main.sets[h].len() < self.main.k {
            self.main.sets[h].push(Entry::fresh(window_victim.key, now));
            return Ok((false, None));
        }
        let v = self.main.victim(h, now);
        let main_victim = self.main.sets[h][v];
        let reject = self.filter == FilterKind::TinyLfu
            && self.counters[main_victim.key as usize] > self.counters[window_victim.key as usize];
        if reject {
            return Ok((false, Some(window_victim.key)));
        }
        self.main.sets[h][v] = Entry::fresh(window_victim.key, now);
        Ok((false, Some(main_victim.key)))
    }
}

impl CacheModel for ReferenceCache {
    fn access(&mut self, key: u64) -> Result<Access> {
        let (hit, evicted) = self.fetch(key)?;
        Ok(Access {
            hit,
            evicted,
            ops: OpCounter::default(),
        })
    }

    fn live_keys(&self) -> Vec<u64> {
        self.keys()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivergenceClass {
    /// The two victims were equal under the restricted engine's metric or
    /// under the exact metric, so either choice is a valid tie-break.
    MetricTie,
    Unexplained,
}

/// `(hit, evicted key)` for one access.
pub type StepOutcome = (bool, Option<u64>);

#[derive(Debug, Clone)]
pub struct Divergence {
    pub sequence: Vec<u64>,
    /// Index into `sequence` of the first step where the engines disagree.
    pub step: usize,
    pub restricted: StepOutcome,
    pub reference: StepOutcome,
    pub class: DivergenceClass,
    /// Both engines' state for the contended set just before `step`.
    pub dump: String,
}

#[derive(Debug, Clone)]
pub struct ExhaustiveReport {
    pub policy: PolicyKind,
    pub k: usize,
    pub d: usize,
    pub sequences: u64,
    pub divergent: u64,
    pub metric_ties: u64,
    pub unexplained: u64,
    pub first_divergence: Option<Divergence>,
    pub first_unexplained: Option<Divergence>,
}

impl ExhaustiveReport {
    pub fn is_clean(&self) -> bool {
        self.divergent == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExhaustiveConfig {
    pub policy: PolicyKind,
    pub k: usize,
    pub d: usize,
    pub alphabet: u64,
    pub max_len: usize,
    pub integer_factor: IntegerFactor,
}

struct CheckContext {
    cfg: ExhaustiveConfig,
    layout: LayoutConfig,
    table: Option<Arc<LogTable>>,
}

impl CheckContext {
    fn restricted(&self) -> Result<Cache> {
        let policy = match self.cfg.policy {
            PolicyKind::Fifo => return Cache::fifo(self.layout),
            PolicyKind::Lru => return Cache::lru(self.layout),
            PolicyKind::Lfu => return Cache::lfu(self.layout),
            PolicyKind::Hyperbolic => Hyperbolic::new(
                self.table.clone().expect("hyperbolic table"),
                &self.layout,
            )?,
        };
        Cache::hyperbolic(self.layout, policy)
    }

    fn reference(&self) -> Result<ReferenceCache> {
        ReferenceCache::new(
            Associativity::KWay {
                k: self.cfg.k,
                d: self.cfg.d,
            },
            self.cfg.policy,
        )
    }

    /// Replays `seq` through both engines; returns the first step where
    /// they disagree.
    fn first_divergence(&self, seq: &[u64]) -> Result<Option<(usize, StepOutcome, StepOutcome)>> {
        let mut restricted = self.restricted()?;
        let mut reference = self.reference()?;
        for (i, &key) in seq.iter().enumerate() {
            let r = restricted.fetch(key)?;
            let r = (r.is_hit(), r.evicted.map(|e| e.key));
            let o = reference.fetch(key)?;
            if r != o {
                return Ok(Some((i, r, o)));
            }
        }
        Ok(None)
    }

    fn classify(
        &self,
        seq: &[u64],
        step: usize,
        restricted_out: StepOutcome,
        reference_out: StepOutcome,
    ) -> Result<Divergence> {
        let mut restricted = self.restricted()?;
        let mut reference = self.reference()?;
        for &key in &seq[..step] {
            restricted.fetch(key)?;
            reference.fetch(key)?;
        }
        let key = seq[step];
        let h = (key % self.cfg.d as u64) as usize;
        let set = restricted.store().peek_set(h);

        let mut dump = String::new();
        let _ = writeln!(dump, "sequence {seq:?}, step {step} (key {key})");
        let _ = write!(dump, "restricted set[{h}]:");
        for e in &set {
            let _ = write!(dump, " {e};");
        }
        dump.push('\n');
        dump.push_str(&reference.describe_set(key));

        let class = match (restricted_out, reference_out) {
            ((false, Some(a)), (false, Some(b))) => {
                let find = |k: u64| set.iter().find(|e| e.key == k).copied();
                match (find(a), find(b), restricted.policy()) {
                    (Some(ea), Some(eb), AnyPolicy::Lfu(_)) => {
                        // Compare after the insert-time aging both engines apply.
                        let aged = |scn: u64| scn.saturating_sub(1).max(1);
                        if aged(ea.scn[0]) == aged(eb.scn[0]) {
                            DivergenceClass::MetricTie
                        } else {
                            DivergenceClass::Unexplained
                        }
                    }
                    (Some(ea), Some(eb), AnyPolicy::Hyperbolic(p)) => {
                        // Scores as of the tick this packet runs at.
                        let mut probe = p.clone();
                        let mut scratch = restricted.store().clone();
                        crate::policy::SetPolicy::begin_packet(&mut probe, &mut scratch, 0)?;
                        let packing = probe.packing();
                        let now = probe.tick();
                        let exact = |e: &crate::layout::CacheElement| Entry {
                            key: e.key,
                            inserted: packing.insert_time(e.scn[0]),
                            last: 0,
                            freq: packing.freq(e.scn[0]),
                        };
                        let score_tie = probe.score(&ea, 0) == probe.score(&eb, 0);
                        let exact_tie =
                            cmp_hyperbolic(&exact(&ea), &exact(&eb), now) == Ordering::Equal;
                        if score_tie || exact_tie {
                            DivergenceClass::MetricTie
                        } else {
                            DivergenceClass::Unexplained
                        }
                    }
                    _ => DivergenceClass::Unexplained,
                }
            }
            _ => DivergenceClass::Unexplained,
        };
        Ok(Divergence {
            sequence: seq.to_vec(),
            step,
            restricted: restricted_out,
            reference: reference_out,
            class,
            dump,
        })
    }
}

/// Replays every key sequence of length `1..=max_len` over keys
/// `1..=alphabet` through the restricted engine and the k-way reference,
/// and classifies each sequence's first disagreement.
pub fn exhaustive_check(cfg: ExhaustiveConfig) -> Result<ExhaustiveReport> {
    if cfg.alphabet == 0 || cfg.max_len == 0 {
        return Err(CacheError::InvalidConfig(
            "exhaustive check needs alphabet >= 1 and max_len >= 1".into(),
        ));
    }
    let ctx = CheckContext {
        layout: LayoutConfig::new(cfg.k, cfg.d)?,
        table: match cfg.policy {
            PolicyKind::Hyperbolic => Some(Arc::new(LogTable::build(
                DEFAULT_MAX_SCN,
                cfg.integer_factor,
            )?)),
            _ => None,
        },
        cfg,
    };
    let mut report = ExhaustiveReport {
        policy: cfg.policy,
        k: cfg.k,
        d: cfg.d,
        sequences: 0,
        divergent: 0,
        metric_ties: 0,
        unexplained: 0,
        first_divergence: None,
        first_unexplained: None,
    };
    for len in 1..=cfg.max_len {
        let mut seq = vec![1u64; len];
        loop {
            report.sequences += 1;
            if let Some((step, r, o)) = ctx.first_divergence(&seq)? {
                let div = ctx.classify(&seq, step, r, o)?;
                report.divergent += 1;
                match div.class {
                    DivergenceClass::MetricTie => report.metric_ties += 1,
                    DivergenceClass::Unexplained => {
                        report.unexplained += 1;
                        if report.first_unexplained.is_none() {
                            report.first_unexplained = Some(div.clone());
                        }
                    }
                }
                if report.first_divergence.is_none() {
                    report.first_divergence = Some(div);
                }
            }
            // Odometer increment over 1..=alphabet.
            let mut pos = len;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                if seq[pos] < cfg.alphabet {
                    seq[pos] += 1;
                    seq[pos + 1..].iter_mut().for_each(|x| *x = 1);
                    break;
                }
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
    }
    Ok(report)
}
