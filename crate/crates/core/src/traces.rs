//! Workloads: Zipf synthesis and trace-file ingestion.
//!
//! Every trace that reaches a cache has dense keys `1..=distinct`, assigned
//! in first-seen order, so the reserved key 0 never appears downstream.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CacheError, Result};

/// Recorded in every report produced from a generated trace.
pub const GENERATOR_ID: &str = "chacha8-rand0.9/zipf-cdf-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipfSpec {
    pub n: u64,
    pub s: f64,
    pub length: usize,
    pub seed: u64,
}

impl ZipfSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.s.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !self.s.is_finite() || self.length == 0 {
            return Err(CacheError::InvalidConfig(format!(
                "zipf spec needs N >= 1, s > 0, length >= 1 (N={}, s={}, length={})",
                self.n, self.s, self.length
            )));
        }
        Ok(())
    }

    pub fn identity(&self) -> String {
        format!("zipf(N={},s={},len={})", self.n, self.s, self.length)
    }
}

fn weights(n: u64, s: f64) -> impl Iterator<Item = f64> {
    (1..=n).map(move |r| (r as f64).powf(-s))
}

/// `(1 / l^s) / sum_{n=1..N} 1 / n^s`
pub fn zipf_frequency(n: u64, l: u64, s: f64) -> Result<f64> {
    if l == 0 || l > n {
        return Err(CacheError::InvalidConfig(format!(
            "rank {l} outside 1..={n}"
        )));
    }
    // Smallest terms first keeps the sum accurate for large N.
    let total: f64 = (1..=n).rev().map(|r| (r as f64).powf(-s)).sum();
    Ok((l as f64).powf(-s) / total)
}

/// I.i.d. rank draws. Rank `r` becomes key `r`, so key 1 is the hottest.
pub fn generate_zipf(spec: &ZipfSpec) -> Result<Vec<u64>> {
    spec.validate()?;
    let mut cdf: Vec<f64> = Vec::with_capacity(spec.n as usize);
    let mut acc = 0.0;
    for w in weights(spec.n, spec.s) {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let last = cdf.len() - 1;
    Ok((0..spec.length)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let idx = cdf.partition_point(|&c| c <= u).min(last);
            idx as u64 + 1
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceFormat {
    /// One decimal key per line.
    Plain,
    /// Headed CSV; the key is taken from the named column (or a zero-based
    /// column index when no header matches).
    Csv { column: String },
    /// Whitespace-separated block traces: `start [count ...]`. A count
    /// expands to `count` consecutive block keys.
    Arc,
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceFormat::Plain => f.write_str("plain"),
            TraceFormat::Csv { column } => write!(f, "csv:{column}"),
            TraceFormat::Arc => f.write_str("arc"),
        }
    }
}

impl FromStr for TraceFormat {
    type Err = CacheError;

    /// `plain`, `arc`, `csv` (column `key`) or `csv:<column>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "plain" => Ok(TraceFormat::Plain),
            "arc" | "lirs" => Ok(TraceFormat::Arc),
            "csv" => Ok(TraceFormat::Csv { column: "key".into() }),
            _ => match s.split_once(':') {
                Some((head, col)) if head.eq_ignore_ascii_case("csv") && !col.is_empty() => {
                    Ok(TraceFormat::Csv { column: col.to_string() })
                }
                _ => Err(CacheError::InvalidConfig(format!("unknown trace format '{s}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub keys: Vec<u64>,
    /// File path or generator description.
    pub identity: String,
    pub seed: Option<u64>,
    pub generator: Option<String>,
}

impl Trace {
    pub fn from_zipf(spec: &ZipfSpec) -> Result<Self> {
        Ok(Trace {
            keys: generate_zipf(spec)?,
            identity: spec.identity(),
            seed: Some(spec.seed),
            generator: Some(GENERATOR_ID.to_string()),
        })
    }

    pub fn from_file(path: &Path, format: &TraceFormat) -> Result<Self> {
        Ok(Trace {
            keys: parse_trace(path, format)?,
            identity: path.display().to_string(),
            seed: None,
            generator: None,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// One past the largest key: the universe a counting filter must cover.
    pub fn universe(&self) -> u64 {
        self.keys.iter().copied().max().unwrap_or(0) + 1
    }
}

/// First-seen dense remapping onto `1..`.
#[derive(Debug, Default)]
pub struct Remapper {
    ids: HashMap<u64, u64>,
}

impl Remapper {
    pub fn map(&mut self, raw: u64) -> u64 {
        let next = self.ids.len() as u64 + 1;
        *self.ids.entry(raw).or_insert(next)
    }

    pub fn distinct(&self) -> usize {
        self.ids.len()
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> CacheError {
    CacheError::TraceParse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_key(path: &Path, line: usize, field: &str) -> Result<u64> {
    field
        .trim()
        .parse::<u64>()
        .map_err(|e| parse_error(path, line, format!("bad key '{}': {e}", field.trim())))
}

pub fn parse_trace(path: &Path, format: &TraceFormat) -> Result<Vec<u64>> {
    let file = File::open(path).map_err(|e| CacheError::io(format!("opening {}", path.display()), e))?;
    let mut remap = Remapper::default();
    let mut keys = Vec::new();
    match format {
        TraceFormat::Plain | TraceFormat::Arc => {
            let reader = BufReader::new(file);
            for (i, line) in reader.lines().enumerate() {
                let lineno = i + 1;
                let line = line.map_err(|e| CacheError::io(format!("reading {}", path.display()), e))?;
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                if *format == TraceFormat::Plain {
                    keys.push(remap.map(parse_key(path, lineno, line)?));
                    continue;
                }
                let mut fields = line.split_whitespace();
                let start = parse_key(path, lineno, fields.next().unwrap_or_default())?;
                let count = match fields.next() {
                    Some(f) => parse_key(path, lineno, f)?.max(1),
                    None => 1,
                };
                for b in 0..count {
                    let block = start
                        .checked_add(b)
                        .ok_or_else(|| parse_error(path, lineno, "block range overflows u64"))?;
                    keys.push(remap.map(block));
                }
            }
        }
        TraceFormat::Csv { column } => {
            let mut reader = csv::ReaderBuilder::new()
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(file);
            let headers = reader
                .headers()
                .map_err(|e| parse_error(path, 1, e.to_string()))?
                .clone();
            let idx = headers
                .iter()
                .position(|h| h == column)
                .or_else(|| column.parse::<usize>().ok())
                .ok_or_else(|| parse_error(path, 1, format!("no column '{column}' in header")))?;
            for record in reader.records() {
                let record = record.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    parse_error(path, line, e.to_string())
                })?;
                let line = record.position().map_or(0, |p| p.line() as usize);
                if record.iter().all(|f| f.is_empty()) {
                    continue;
                }
                let field = record
                    .get(idx)
                    .ok_or_else(|| parse_error(path, line, format!("missing column {idx}")))?;
                keys.push(remap.map(parse_key(path, line, field)?));
            }
        }
    }
    if keys.is_empty() {
        return Err(CacheError::EmptyTrace(PathBuf::from(path)));
    }
    Ok(keys)
}

/// Writes keys in PLAIN format.
pub fn write_plain(path: &Path, keys: &[u64]) -> Result<()> {
    let file = File::create(path).map_err(|e| CacheError::io(format!("creating {}", path.display()), e))?;
    let mut out = BufWriter::new(file);
    for k in keys {
        writeln!(out, "{k}").map_err(|e| CacheError::io(format!("writing {}", path.display()), e))?;
    }
    out.flush().map_err(|e| CacheError::io(format!("writing {}", path.display()), e))
}
