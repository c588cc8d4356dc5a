//! Hyperbolic caching with integer-only arithmetic.
//!
//! The priority of an element is `freq / lifetime`. Division is replaced by
//! a difference of fixed-point base-2 logarithms read from a table that is
//! loaded once at deployment: `score = log[freq] - log[lifetime]`, where
//! `log[x] = floor(log2(x) * integer_factor)`. Comparing scores stands in for
//! comparing the exact ratios.
//!
//! Each element's SCN word holds two packed fields: the access count in the
//! high half and the insertion tick in the low half.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{CacheError, Result};
use crate::layout::{field_mask, CacheElement, LayoutConfig};
use crate::policy::{PolicyKind, SetPolicy};
use crate::store::{OpCounter, RegisterStore};

pub const DEFAULT_MAX_SCN: u64 = 2048;

/// Log-table reads per reduce comparison (freq and lifetime, both sides).
pub const LOOKUPS_PER_COMPARE: u64 = 4;

/// Fixed-point scale applied to log values before flooring, kept as an exact
/// decimal fraction `num / den` so that e.g. 0.1 is represented exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IntegerFactor {
    num: u64,
    den: u64,
}

impl IntegerFactor {
    pub const DEFAULT: IntegerFactor = IntegerFactor { num: 100, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(CacheError::InvalidConfig(format!(
                "integer factor {num}/{den} must be positive"
            )));
        }
        let g = gcd(num, den);
        Ok(IntegerFactor {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(n: u64) -> Result<Self> {
        IntegerFactor::new(n, 1)
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `floor(value * factor)` for a non-negative float, the conversion the
    /// table loader applies to each log value.
    pub fn scale_floor(&self, value: f64) -> i64 {
        (value * self.num as f64 / self.den as f64).floor() as i64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Default for IntegerFactor {
    fn default() -> Self {
        IntegerFactor::DEFAULT
    }
}

impl fmt::Display for IntegerFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            return write!(f, "{}", self.num);
        }
        // Print as a terminating decimal when one exists.
        let mut scale = 1u64;
        for digits in 1..=18usize {
            scale *= 10;
            if scale.is_multiple_of(self.den) {
                let n = self.num * (scale / self.den);
                return write!(f, "{}.{:0digits$}", n / scale, n % scale);
            }
        }
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for IntegerFactor {
    type Err = CacheError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || CacheError::InvalidConfig(format!("invalid integer factor '{s}'"));
        if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse().map_err(|_| bad())?;
            let d = d.trim().parse().map_err(|_| bad())?;
            return IntegerFactor::new(n, d);
        }
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        if whole.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 18 {
            return Err(bad());
        }
        let digits = format!("{whole}{frac}");
        let num: u64 = digits.parse().map_err(|_| bad())?;
        IntegerFactor::new(num, 10u64.pow(frac.len() as u32))
    }
}

impl TryFrom<String> for IntegerFactor {
    type Error = CacheError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<IntegerFactor> for String {
    fn from(f: IntegerFactor) -> String {
        f.to_string()
    }
}

/// `floor(log2(x) * factor)` computed exactly.
///
/// `log2(x) * p / q = log2(x^p) / q`, and flooring commutes with integer
/// division, so the value is `floor(floor(log2(x^p)) / q)` where
/// `floor(log2(x^p))` is one less than the bit length of `x^p`.
pub fn exact_scaled_log2(x: u64, factor: IntegerFactor) -> u64 {
    if x <= 1 {
        return 0;
    }
    let power = BigUint::from(x).pow(factor.num as u32);
    (power.bits() - 1) / factor.den
}

/// Precomputed fixed-point log2 table over `0..max_scn`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogTable {
    entries: Vec<u64>,
    factor: IntegerFactor,
}

impl LogTable {
    /// Entry 0 is defined as 0; it is never consulted for live elements.
    pub fn build(max_scn: u64, factor: IntegerFactor) -> Result<Self> {
        if max_scn < 2 {
            return Err(CacheError::InvalidConfig(format!(
                "log table needs max_scn >= 2, got {max_scn}"
            )));
        }
        if factor.num > u32::MAX as u64 {
            return Err(CacheError::InvalidConfig("integer factor too large".into()));
        }
        let entries = (0..max_scn).map(|x| exact_scaled_log2(x, factor)).collect();
        Ok(LogTable { entries, factor })
    }

    pub fn max_scn(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn factor(&self) -> IntegerFactor {
        self.factor
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    /// Table read; indices past the end saturate to the last entry.
    pub fn get(&self, x: u64) -> u64 {
        let last = self.entries.len() - 1;
        self.entries[(x as usize).min(last)]
    }

    /// Storage for the table as deployed: each entry keeps its value plus the
    /// index it answers for.
    pub fn memory_bits(&self) -> u64 {
        let max_value = self.entries.iter().copied().max().unwrap_or(0);
        let index_bits = bit_width(self.max_scn() - 1);
        (bit_width(max_value) + index_bits) * self.max_scn()
    }
}

fn bit_width(v: u64) -> u64 {
    (64 - v.leading_zeros() as u64).max(1)
}

/// `log[freq] - log[lifetime]`; `lifetime` below 1 is treated as 1.
pub fn priority_score(freq: u64, lifetime: u64, table: &LogTable) -> i64 {
    table.get(freq) as i64 - table.get(lifetime.max(1)) as i64
}

/// Packs `(freq, insert_time)` into one SCN word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScnPacking {
    pub time_bits: u32,
    pub freq_bits: u32,
}

impl ScnPacking {
    pub fn for_scn_bits(scn_bits: u32) -> Self {
        let time_bits = scn_bits / 2;
        ScnPacking {
            time_bits,
            freq_bits: scn_bits - time_bits,
        }
    }

    pub fn pack(&self, freq: u64, insert_time: u64) -> u64 {
        (freq.min(field_mask(self.freq_bits)) << self.time_bits)
            | (insert_time & field_mask(self.time_bits))
    }

    pub fn freq(&self, word: u64) -> u64 {
        word >> self.time_bits
    }

    pub fn insert_time(&self, word: u64) -> u64 {
        word & field_mask(self.time_bits)
    }
}

#[derive(Debug, Clone)]
pub struct Hyperbolic {
    tick: u64,
    table: Arc<LogTable>,
    packing: ScnPacking,
}

impl Hyperbolic {
    pub fn new(table: Arc<LogTable>, layout: &LayoutConfig) -> Result<Self> {
        let policy = Hyperbolic {
            tick: 0,
            packing: ScnPacking::for_scn_bits(layout.scn_bits),
            table,
        };
        policy.check_layout(layout)?;
        Ok(policy)
    }

    /// Default table: `max_scn = 2048`, the given integer factor.
    pub fn with_factor(factor: IntegerFactor, layout: &LayoutConfig) -> Result<Self> {
        Hyperbolic::new(Arc::new(LogTable::build(DEFAULT_MAX_SCN, factor)?), layout)
    }

    pub(crate) fn check_layout(&self, layout: &LayoutConfig) -> Result<()> {
        let packing = ScnPacking::for_scn_bits(layout.scn_bits);
        if packing != self.packing || packing.time_bits == 0 {
            return Err(CacheError::InvalidLayout(format!(
                "hyperbolic metrics need scn_bits >= 2 matching the policy, got {}",
                layout.scn_bits
            )));
        }
        if self.table.max_scn() - 1 > field_mask(packing.time_bits) {
            return Err(CacheError::InvalidLayout(format!(
                "max_scn {} does not fit the {}-bit insertion-time field",
                self.table.max_scn(),
                packing.time_bits
            )));
        }
        Ok(())
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn table(&self) -> &LogTable {
        &self.table
    }

    pub fn packing(&self) -> ScnPacking {
        self.packing
    }

    /// Score of `element` at the current tick.
    pub fn score(&self, element: &CacheElement, slot: usize) -> i64 {
        let word = element.scn[slot];
        let lifetime = self
            .tick
            .saturating_sub(self.packing.insert_time(word));
        priority_score(self.packing.freq(word), lifetime, &self.table)
    }
}

impl SetPolicy for Hyperbolic {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Hyperbolic
    }

    /// Advances the tick. When it reaches `max_scn - 1`, the tick and every
    /// stored insertion time are halved by a right shift.
    fn begin_packet(&mut self, store: &mut RegisterStore, slot: usize) -> Result<()> {
        self.tick += 1;
        if self.tick >= self.table.max_scn() - 1 {
            self.tick >>= 1;
            let packing = self.packing;
            store.maintain(|set| {
                for e in set.iter_mut().filter(|e| !e.is_empty()) {
                    let word = e.scn[slot];
                    e.scn[slot] = packing.pack(packing.freq(word), packing.insert_time(word) >> 1);
                }
            })?;
        }
        Ok(())
    }

    fn touch(&self, element: &mut CacheElement, slot: usize) {
        let word = element.scn[slot];
        let freq = self.packing.freq(word).saturating_add(1);
        element.scn[slot] = self.packing.pack(freq, self.packing.insert_time(word));
    }

    fn fresh_scn(&self) -> u64 {
        self.packing.pack(1, self.tick)
    }

    /// Swap iff the stored element's score is strictly below the candidate's.
    /// Empty ways rank below every live element.
    fn prefers_swap(
        &self,
        stored: &CacheElement,
        candidate: &CacheElement,
        slot: usize,
        ops: &mut OpCounter,
    ) -> bool {
        match (stored.is_empty(), candidate.is_empty()) {
            (_, true) => false,
            (true, false) => true,
            (false, false) => {
                ops.table_lookups += LOOKUPS_PER_COMPARE;
                self.score(stored, slot) < self.score(candidate, slot)
            }
        }
    }
}
