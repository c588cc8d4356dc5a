//! Register storage for one cache region, plus the per-packet operation
//! accountant.
//!
//! The store keeps two registers of `d` entries each: the full sets and a
//! keys-only copy used for the ternary membership match. Every access goes
//! through [`RegisterStore::ternary_lookup`], [`RegisterStore::read_set`] and
//! [`RegisterStore::write_set`], each of which is charged to the
//! [`OpCounter`].

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{CacheError, Result};
use crate::layout::{decode_set, encode_set, BitString, CacheElement, LayoutConfig};

/// Data-plane operations charged to one packet.
///
/// `tcam_matches`, `register_reads` and `register_writes` are the cost model
/// of the set registers and the auxiliary candidate/keys registers.
/// `table_lookups` counts log-table reads (hyperbolic priority) and the
/// `filter_*` fields count accesses to the admission filter's counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub tcam_matches: u64,
    pub register_reads: u64,
    pub register_writes: u64,
    pub table_lookups: u64,
    pub filter_reads: u64,
    pub filter_writes: u64,
}

impl OpCounter {
    pub fn reset(&mut self) {
        *self = OpCounter::default();
    }

    /// Field-wise maximum, used to track per-packet peaks over a run.
    pub fn max(self, other: OpCounter) -> OpCounter {
        OpCounter {
            tcam_matches: self.tcam_matches.max(other.tcam_matches),
            register_reads: self.register_reads.max(other.register_reads),
            register_writes: self.register_writes.max(other.register_writes),
            table_lookups: self.table_lookups.max(other.table_lookups),
            filter_reads: self.filter_reads.max(other.filter_reads),
            filter_writes: self.filter_writes.max(other.filter_writes),
        }
    }

    /// True when no field exceeds the matching field of `ceiling`.
    pub fn within(&self, ceiling: &OpCounter) -> bool {
        self.tcam_matches <= ceiling.tcam_matches
            && self.register_reads <= ceiling.register_reads
            && self.register_writes <= ceiling.register_writes
            && self.table_lookups <= ceiling.table_lookups
            && self.filter_reads <= ceiling.filter_reads
            && self.filter_writes <= ceiling.filter_writes
    }
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: OpCounter) {
        self.tcam_matches += rhs.tcam_matches;
        self.register_reads += rhs.register_reads;
        self.register_writes += rhs.register_writes;
        self.table_lookups += rhs.table_lookups;
        self.filter_reads += rhs.filter_reads;
        self.filter_writes += rhs.filter_writes;
    }
}

/// Modulo placement of a live key into one of `d` sets.
pub fn hash_to_set(key: u64, d: usize) -> Result<usize> {
    if key == 0 {
        return Err(CacheError::ReservedKey);
    }
    if d == 0 {
        return Err(CacheError::InvalidLayout("d must be at least 1".into()));
    }
    Ok((key % d as u64) as usize)
}

/// Ternary membership test over one keys-register entry.
///
/// The key is replicated `k` times, XORed with the entry, and the way whose
/// `key_bits`-wide slice comes out all-zero is the match. Works on the raw
/// bit-string, with no access to the decoded elements.
pub fn ternary_match(entry: &BitString, key: u64, key_bits: u32, k: usize) -> Result<Option<usize>> {
    if key == 0 {
        return Err(CacheError::ReservedKey);
    }
    let replicated = BitString::from_fields(&vec![key; k], key_bits);
    let diff = replicated.xor(entry);
    Ok((0..k).find(|&way| diff.field(way * key_bits as usize, key_bits) == 0))
}

#[derive(Debug, Clone)]
pub struct RegisterStore {
    layout: LayoutConfig,
    sets: Vec<BitString>,
    keys: Vec<BitString>,
    ops: OpCounter,
}

impl RegisterStore {
    pub fn new(layout: LayoutConfig) -> Result<Self> {
        layout.validate()?;
        Ok(RegisterStore {
            sets: vec![BitString::zeros(layout.set_bits()); layout.d],
            keys: vec![BitString::zeros(layout.keys_bits()); layout.d],
            layout,
            ops: OpCounter::default(),
        })
    }

    pub fn layout(&self) -> &LayoutConfig {
        &self.layout
    }

    pub fn set_index(&self, key: u64) -> Result<usize> {
        hash_to_set(key, self.layout.d)
    }

    pub fn ops(&self) -> OpCounter {
        self.ops
    }

    pub fn reset_ops(&mut self) {
        self.ops.reset();
    }

    pub(crate) fn ops_mut(&mut self) -> &mut OpCounter {
        &mut self.ops
    }

    fn check_index(&self, h: usize) -> Result<()> {
        if h >= self.layout.d {
            Err(CacheError::SetOutOfRange {
                index: h,
                sets: self.layout.d,
            })
        } else {
            Ok(())
        }
    }

    fn check_key(&self, key: u64) -> Result<()> {
        if key == 0 {
            return Err(CacheError::ReservedKey);
        }
        if key & !crate::layout::field_mask(self.layout.key_bits) != 0 {
            return Err(CacheError::KeyTooWide {
                key,
                bits: self.layout.key_bits,
            });
        }
        Ok(())
    }

    /// One TCAM match against `keys_register[h]`.
    pub fn ternary_lookup(&mut self, h: usize, key: u64) -> Result<Option<usize>> {
        self.check_index(h)?;
        self.check_key(key)?;
        self.ops.tcam_matches += 1;
        ternary_match(&self.keys[h], key, self.layout.key_bits, self.layout.k)
    }

    pub fn read_set(&mut self, h: usize) -> Result<Vec<CacheElement>> {
        self.check_index(h)?;
        self.ops.register_reads += 1;
        Ok(decode_set(&self.layout, &self.sets[h]))
    }

    /// Writes a whole set and re-derives its keys-register entry.
    pub fn write_set(&mut self, h: usize, elements: &[CacheElement]) -> Result<()> {
        self.check_index(h)?;
        check_distinct(elements)?;
        let bits = encode_set(&self.layout, elements)?;
        let keys: Vec<u64> = elements.iter().map(|e| e.key).collect();
        self.sets[h] = bits;
        self.keys[h] = BitString::from_fields(&keys, self.layout.key_bits);
        self.ops.register_writes += 1;
        debug_assert!(self.keys_consistent(h));
        Ok(())
    }

    /// Charges one reduce step: a read and write of the candidate register and
    /// of the keys register.
    pub fn record_fold_step(&mut self) {
        self.ops.register_reads += 2;
        self.ops.register_writes += 2;
    }

    pub fn keys_entry(&self, h: usize) -> &BitString {
        &self.keys[h]
    }

    pub fn set_entry(&self, h: usize) -> &BitString {
        &self.sets[h]
    }

    /// Decodes a set without charging the accountant (inspection only).
    pub fn peek_set(&self, h: usize) -> Vec<CacheElement> {
        decode_set(&self.layout, &self.sets[h])
    }

    /// All live keys, in set-then-way order.
    pub fn live_keys(&self) -> Vec<u64> {
        (0..self.layout.d)
            .flat_map(|h| self.peek_set(h))
            .filter(|e| !e.is_empty())
            .map(|e| e.key)
            .collect()
    }

    /// Rewrites every set through `f` without charging per-packet operations.
    /// Used for counter rescaling that a control plane would perform.
    pub(crate) fn maintain(&mut self, mut f: impl FnMut(&mut [CacheElement])) -> Result<()> {
        for h in 0..self.layout.d {
            let mut set = decode_set(&self.layout, &self.sets[h]);
            f(&mut set);
            self.sets[h] = encode_set(&self.layout, &set)?;
            debug_assert!(self.keys_consistent(h));
        }
        Ok(())
    }

    /// The keys register agrees with the key fields of the full set.
    pub fn keys_consistent(&self, h: usize) -> bool {
        let keys: Vec<u64> = self.peek_set(h).iter().map(|e| e.key).collect();
        BitString::from_fields(&keys, self.layout.key_bits) == self.keys[h]
    }
}

fn check_distinct(elements: &[CacheElement]) -> Result<()> {
    for (i, a) in elements.iter().enumerate() {
        if a.is_empty() {
            continue;
        }
        if elements[i + 1..].iter().any(|b| b.key == a.key) {
            return Err(CacheError::DuplicateKey(a.key));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn modulo_placement() {
        assert_eq!(hash_to_set(37, 16).unwrap(), 5);
        assert_eq!(hash_to_set(16, 16).unwrap(), 0);
        assert!(matches!(hash_to_set(0, 16), Err(CacheError::ReservedKey)));
    }

    #[test]
    fn modulo_placement_matches_long_division() {
        // Schoolbook long division over the decimal digits, independent of `%`.
        fn long_div_rem(n: u64, d: u64) -> u64 {
            n.to_string()
                .bytes()
                .fold(0, |rem, digit| (rem * 10 + (digit - b'0') as u64) % d)
        }
        assert_eq!(long_div_rem(1_000_003, 7), 4);
        assert_eq!(hash_to_set(1_000_003, 7).unwrap(), 4);
    }

    #[test]
    fn ternary_examples() {
        let entry = BitString::from_fields(&[7, 0, 9], 32);
        assert_eq!(ternary_match(&entry, 9, 32, 3).unwrap(), Some(2));
        assert_eq!(ternary_match(&entry, 3, 32, 3).unwrap(), None);
        assert!(matches!(
            ternary_match(&entry, 0, 32, 3),
            Err(CacheError::ReservedKey)
        ));
    }

    #[test]
    fn ternary_xor_slice_is_all_zero_at_match() {
        let key_bits = 32;
        let entry = BitString::from_fields(&[5, 6, 7, 8], key_bits);
        assert_eq!(ternary_match(&entry, 5, key_bits, 4).unwrap(), Some(0));
        let diff = BitString::from_fields(&[5; 4], key_bits).xor(&entry);
        // Slice-by-slice oracle: the zero count equals key_bits exactly where
        // the stored key equals the probe.
        for (way, stored) in [5u64, 6, 7, 8].into_iter().enumerate() {
            let zeros = diff.count_zeros(way * key_bits as usize, key_bits);
            assert_eq!(zeros == key_bits, stored == 5);
        }
        assert_eq!(diff.count_zeros(0, key_bits), key_bits);
    }

    #[test]
    fn write_read_round_trip_and_counters() {
        let mut store = RegisterStore::new(LayoutConfig::new(2, 4).unwrap()).unwrap();
        let fresh = store.read_set(0).unwrap();
        assert_eq!(fresh, vec![CacheElement::EMPTY; 2]);

        let elems = vec![CacheElement::new(3, 30, 2), CacheElement::EMPTY];
        store.write_set(3, &elems).unwrap();
        assert_eq!(store.read_set(3).unwrap(), elems);
        assert_eq!(
            store.keys_entry(3),
            &BitString::from_fields(&[3, 0], 32)
        );
        let ops = store.ops();
        assert_eq!((ops.register_reads, ops.register_writes), (2, 1));
        store.reset_ops();
        assert_eq!(store.ops(), OpCounter::default());
    }

    #[test]
    fn rejects_bad_writes() {
        let mut store = RegisterStore::new(LayoutConfig::new(2, 2).unwrap()).unwrap();
        assert!(matches!(
            store.read_set(2),
            Err(CacheError::SetOutOfRange { .. })
        ));
        let dup = [CacheElement::new(4, 0, 0), CacheElement::new(4, 1, 1)];
        assert!(matches!(
            store.write_set(0, &dup),
            Err(CacheError::DuplicateKey(4))
        ));
        assert!(matches!(
            store.ternary_lookup(0, 1 << 40),
            Err(CacheError::KeyTooWide { .. })
        ));
    }

    proptest! {
        #[test]
        fn ternary_agrees_with_linear_scan(
            keys in proptest::collection::hash_set(1u64..64, 0..8),
            probe in 1u64..64,
            key_bits in 6u32..=40,
        ) {
            let mut ways: Vec<u64> = keys.into_iter().collect();
            ways.resize(8, 0);
            let entry = BitString::from_fields(&ways, key_bits);
            let scan = ways.iter().position(|&k| k == probe);
            prop_assert_eq!(ternary_match(&entry, probe, key_bits, 8).unwrap(), scan);
        }

        #[test]
        fn keys_register_tracks_writes(
            keys in proptest::collection::hash_set(1u64..1000, 0..=4),
            h in 0usize..3,
        ) {
            let mut store = RegisterStore::new(LayoutConfig::new(4, 3).unwrap()).unwrap();
            let mut elems: Vec<CacheElement> =
                keys.iter().map(|&k| CacheElement::new(k, k * 2, k + 1)).collect();
            elems.resize(4, CacheElement::EMPTY);
            store.write_set(h, &elems).unwrap();
            let expected: Vec<u64> = elems.iter().map(|e| e.key).collect();
            prop_assert_eq!(store.keys_entry(h), &BitString::from_fields(&expected, 32));
            prop_assert!(store.keys_consistent(h));
        }
    }
}
