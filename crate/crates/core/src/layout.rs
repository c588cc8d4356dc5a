//! Bit-level layout of a cache set.
//!
//! A set is one register entry: `k` elements packed back to back, way 0 in
//! the lowest-order slice. Each element is `key | value | scn[0] | scn[1]`,
//! again from low to high bits. The keys-only register uses the same way
//! order with `key_bits`-wide slices.

use std::fmt;

use crate::error::{CacheError, Result};

/// TCAM masks are limited to this many bits, which caps `k * key_bits`.
pub const TCAM_MASK_LIMIT: u32 = 2048;

pub const DEFAULT_KEY_BITS: u32 = 32;
pub const DEFAULT_VALUE_BITS: u32 = 32;
pub const DEFAULT_SCN_BITS: u32 = 32;

/// Geometry and field widths of one cache region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutConfig {
    pub key_bits: u32,
    pub value_bits: u32,
    pub scn_bits: u32,
    /// 1 for single-region elements, 2 when an element carries a metric word
    /// for each region of a two-region cache.
    pub scn_words: u32,
    pub k: usize,
    pub d: usize,
}

impl LayoutConfig {
    /// A `k`-way, `d`-set layout with the default 32-bit fields.
    pub fn new(k: usize, d: usize) -> Result<Self> {
        let layout = LayoutConfig {
            key_bits: DEFAULT_KEY_BITS,
            value_bits: DEFAULT_VALUE_BITS,
            scn_bits: DEFAULT_SCN_BITS,
            scn_words: 1,
            k,
            d,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn with_widths(self, key_bits: u32, value_bits: u32, scn_bits: u32) -> Result<Self> {
        let layout = LayoutConfig {
            key_bits,
            value_bits,
            scn_bits,
            ..self
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn with_scn_words(self, scn_words: u32) -> Result<Self> {
        let layout = LayoutConfig { scn_words, ..self };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CacheError::InvalidLayout(msg));
        if self.k == 0 || self.d == 0 {
            return bad(format!("k={} and d={} must both be at least 1", self.k, self.d));
        }
        for (name, bits) in [
            ("key_bits", self.key_bits),
            ("value_bits", self.value_bits),
            ("scn_bits", self.scn_bits),
        ] {
            if !(1..=64).contains(&bits) {
                return bad(format!("{name}={bits} must be within 1..=64"));
            }
        }
        if !(1..=2).contains(&self.scn_words) {
            return bad(format!("scn_words={} must be 1 or 2", self.scn_words));
        }
        let mask_bits = self.k as u64 * self.key_bits as u64;
        if mask_bits > TCAM_MASK_LIMIT as u64 {
            return bad(format!(
                "k*key_bits = {mask_bits} exceeds the {TCAM_MASK_LIMIT}-bit TCAM mask limit"
            ));
        }
        Ok(())
    }

    pub fn element_bits(&self) -> u32 {
        self.key_bits + self.value_bits + self.scn_words * self.scn_bits
    }

    pub fn set_bits(&self) -> usize {
        self.k * self.element_bits() as usize
    }

    pub fn keys_bits(&self) -> usize {
        self.k * self.key_bits as usize
    }

    pub fn capacity(&self) -> usize {
        self.k * self.d
    }

    /// Largest `k` the TCAM mask admits for the given key width.
    pub fn max_ways(key_bits: u32) -> usize {
        (TCAM_MASK_LIMIT / key_bits.max(1)) as usize
    }

    pub fn scn_max(&self) -> u64 {
        field_mask(self.scn_bits)
    }
}

pub(crate) fn field_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// The payload of one way. `key == 0` marks an empty way.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CacheElement {
    pub key: u64,
    pub value: u64,
    pub scn: [u64; 2],
}

impl CacheElement {
    pub const EMPTY: CacheElement = CacheElement {
        key: 0,
        value: 0,
        scn: [0, 0],
    };

    pub fn new(key: u64, value: u64, scn: u64) -> Self {
        CacheElement {
            key,
            value,
            scn: [scn, 0],
        }
    }

    pub fn with_scn(key: u64, value: u64, scn: [u64; 2]) -> Self {
        CacheElement { key, value, scn }
    }

    pub fn is_empty(&self) -> bool {
        self.key == 0
    }

    /// Checks every field against the layout's widths.
    pub fn check_widths(&self, layout: &LayoutConfig) -> Result<()> {
        let check = |field: &'static str, value: u64, bits: u32| {
            if value & !field_mask(bits) != 0 {
                Err(CacheError::FieldOverflow { field, value, bits })
            } else {
                Ok(())
            }
        };
        check("key", self.key, layout.key_bits)?;
        check("value", self.value, layout.value_bits)?;
        for word in 0..2 {
            if word < layout.scn_words as usize {
                check("scn", self.scn[word], layout.scn_bits)?;
            } else if self.scn[word] != 0 {
                return Err(CacheError::FieldOverflow {
                    field: "scn",
                    value: self.scn[word],
                    bits: 0,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for CacheElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            write!(f, "<empty>")
        } else {
            write!(
                f,
                "{}={} scn[{}, {}]",
                self.key, self.value, self.scn[0], self.scn[1]
            )
        }
    }
}

/// A fixed-length bit string backed by 64-bit words, bit 0 being the lowest
/// bit of word 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    /// Packs `fields` as consecutive `width`-bit slices, field 0 lowest.
    pub fn from_fields(fields: &[u64], width: u32) -> Self {
        let mut bits = BitString::zeros(fields.len() * width as usize);
        for (i, &f) in fields.iter().enumerate() {
            bits.set_field(i * width as usize, width, f);
        }
        bits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Reads `width <= 64` bits starting at `offset`.
    pub fn field(&self, offset: usize, width: u32) -> u64 {
        debug_assert!((1..=64).contains(&width));
        debug_assert!(offset + width as usize <= self.len);
        let word = offset / 64;
        let shift = (offset % 64) as u32;
        let mut value = self.words[word] >> shift;
        if shift + width > 64 {
            value |= self.words[word + 1] << (64 - shift);
        }
        value & field_mask(width)
    }

    /// Writes the low `width` bits of `value` at `offset`.
    pub fn set_field(&mut self, offset: usize, width: u32, value: u64) {
        debug_assert!((1..=64).contains(&width));
        debug_assert!(offset + width as usize <= self.len);
        let mask = field_mask(width);
        let value = value & mask;
        let word = offset / 64;
        let shift = (offset % 64) as u32;
        self.words[word] = (self.words[word] & !(mask << shift)) | (value << shift);
        if shift + width > 64 {
            let spill = shift + width - 64;
            let high_mask = field_mask(spill);
            self.words[word + 1] =
                (self.words[word + 1] & !high_mask) | (value >> (64 - shift));
        }
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        assert_eq!(self.len, other.len, "xor of bit strings of different length");
        BitString {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a ^ b)
                .collect(),
            len: self.len,
        }
    }

    /// Number of zero bits in `[offset, offset + width)`.
    pub fn count_zeros(&self, offset: usize, width: u32) -> u32 {
        let mut zeros = 0;
        let mut done = 0u32;
        while done < width {
            let chunk = (width - done).min(64);
            zeros += chunk - self.field(offset + done as usize, chunk).count_ones();
            done += chunk;
        }
        zeros
    }
}

/// Encodes `elements` (exactly `k` of them) into one set bit-string.
pub fn encode_set(layout: &LayoutConfig, elements: &[CacheElement]) -> Result<BitString> {
    if elements.len() != layout.k {
        return Err(CacheError::WayCountMismatch {
            expected: layout.k,
            got: elements.len(),
        });
    }
    let width = layout.element_bits() as usize;
    let mut bits = BitString::zeros(layout.set_bits());
    for (way, element) in elements.iter().enumerate() {
        element.check_widths(layout)?;
        let mut offset = way * width;
        bits.set_field(offset, layout.key_bits, element.key);
        offset += layout.key_bits as usize;
        bits.set_field(offset, layout.value_bits, element.value);
        offset += layout.value_bits as usize;
        for word in 0..layout.scn_words as usize {
            bits.set_field(offset, layout.scn_bits, element.scn[word]);
            offset += layout.scn_bits as usize;
        }
    }
    Ok(bits)
}

pub fn decode_set(layout: &LayoutConfig, bits: &BitString) -> Vec<CacheElement> {
    let width = layout.element_bits() as usize;
    (0..layout.k)
        .map(|way| {
            let mut offset = way * width;
            let key = bits.field(offset, layout.key_bits);
            offset += layout.key_bits as usize;
            let value = bits.field(offset, layout.value_bits);
            offset += layout.value_bits as usize;
            let mut scn = [0; 2];
            for slot in scn.iter_mut().take(layout.scn_words as usize) {
                *slot = bits.field(offset, layout.scn_bits);
                offset += layout.scn_bits as usize;
            }
            CacheElement { key, value, scn }
        })
        .collect()
}
