//! Trace replay, parameter sweeps and report output.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CacheError, Result};
use crate::hyperbolic::{Hyperbolic, IntegerFactor};
use crate::layout::LayoutConfig;
use crate::model::CacheModel;
use crate::multiregion::{FilterKind, MultiRegionCache, MultiRegionConfig, RegionSpec};
use crate::oracle::{Associativity, ReferenceCache};
use crate::policy::{Cache, PolicyKind};
use crate::store::OpCounter;
use crate::traces::{Trace, TraceFormat, ZipfSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engine {
    Restricted,
    Reference,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Restricted => "restricted",
            Engine::Reference => "reference",
        })
    }
}

impl FromStr for Engine {
    type Err = CacheError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "restricted" | "engine" => Ok(Engine::Restricted),
            "reference" | "oracle" => Ok(Engine::Reference),
            _ => Err(CacheError::InvalidConfig(format!("unknown engine '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CacheSpec {
    Single { policy: PolicyKind, k: usize, d: usize },
    Multi { window: RegionSpec, main: RegionSpec, filter: FilterKind },
}

impl CacheSpec {
    pub fn label(&self) -> String {
        match *self {
            CacheSpec::Single { policy, .. } => policy.to_string(),
            CacheSpec::Multi { window, main, filter } => {
                MultiRegionConfig::new(window, main, filter, 2).label()
            }
        }
    }

    /// `(k_w, d_w, k_m, d_m)`; single-region caches have no window.
    pub fn geometry(&self) -> (usize, usize, usize, usize) {
        match *self {
            CacheSpec::Single { k, d, .. } => (0, 0, k, d),
            CacheSpec::Multi { window, main, .. } => (window.k, window.d, main.k, main.d),
        }
    }

    fn with_main(&self, k: usize, d: usize) -> CacheSpec {
        match *self {
            CacheSpec::Single { policy, .. } => CacheSpec::Single { policy, k, d },
            CacheSpec::Multi { window, main, filter } => CacheSpec::Multi {
                window,
                main: RegionSpec { k, d, ..main },
                filter,
            },
        }
    }

    fn uses_hyperbolic(&self) -> bool {
        match self {
            CacheSpec::Single { policy, .. } => *policy == PolicyKind::Hyperbolic,
            CacheSpec::Multi { window, main, .. } => {
                window.policy == PolicyKind::Hyperbolic || main.policy == PolicyKind::Hyperbolic
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceSource {
    File { path: PathBuf, format: TraceFormat },
    Zipf(ZipfSpec),
}

impl TraceSource {
    pub fn load(&self) -> Result<Trace> {
        match self {
            TraceSource::File { path, format } => Trace::from_file(path, format),
            TraceSource::Zipf(spec) => Trace::from_zipf(spec),
        }
    }

    /// Size of the key space a filter must count over.
    fn universe(&self, trace: &Trace) -> u64 {
        match self {
            TraceSource::Zipf(spec) => spec.n + 1,
            TraceSource::File { .. } => trace.universe(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub engine: Engine,
    /// Reference only: one fully associative set per region.
    pub full: bool,
    pub cache: CacheSpec,
    pub integer_factor: IntegerFactor,
    pub trace: TraceSource,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.full && self.engine == Engine::Restricted {
            return Err(CacheError::InvalidConfig(
                "full associativity is only available on the reference engine".into(),
            ));
        }
        let (kw, dw, km, dm) = self.cache.geometry();
        if km == 0 || dm == 0 || (matches!(self.cache, CacheSpec::Multi { .. }) && (kw == 0 || dw == 0)) {
            return Err(CacheError::InvalidConfig("every region needs k, d >= 1".into()));
        }
        Ok(())
    }

    fn engine_label(&self) -> String {
        match (self.engine, self.full) {
            (Engine::Reference, true) => "reference-full".into(),
            (e, _) => e.to_string(),
        }
    }
}

enum Model {
    Single(Cache),
    Multi(Box<MultiRegionCache>),
    Reference(ReferenceCache),
}

impl Model {
    fn build(cfg: &ExperimentConfig, universe: u64) -> Result<Model> {
        cfg.validate()?;
        let multi_config = |window, main, filter| {
            let mut c = MultiRegionConfig::new(window, main, filter, universe);
            c.integer_factor = cfg.integer_factor;
            c
        };
        Ok(match (cfg.engine, cfg.cache) {
            (Engine::Restricted, CacheSpec::Single { policy, k, d }) => {
                let layout = LayoutConfig::new(k, d)?;
                Model::Single(match policy {
                    PolicyKind::Fifo => Cache::fifo(layout)?,
                    PolicyKind::Lru => Cache::lru(layout)?,
                    PolicyKind::Lfu => Cache::lfu(layout)?,
                    PolicyKind::Hyperbolic => Cache::hyperbolic(
                        layout,
                        Hyperbolic::with_factor(cfg.integer_factor, &layout)?,
                    )?,
                })
            }
            (Engine::Restricted, CacheSpec::Multi { window, main, filter }) => Model::Multi(
                Box::new(MultiRegionCache::new(multi_config(window, main, filter))?),
            ),
            (Engine::Reference, CacheSpec::Single { policy, k, d }) => {
                let assoc = if cfg.full {
                    Associativity::Full { capacity: k * d }
                } else {
                    Associativity::KWay { k, d }
                };
                Model::Reference(ReferenceCache::new(assoc, policy)?)
            }
            (Engine::Reference, CacheSpec::Multi { window, main, filter }) => Model::Reference(
                ReferenceCache::multi(&multi_config(window, main, filter), cfg.full)?,
            ),
        })
    }

    fn model(&mut self) -> &mut dyn CacheModel {
        match self {
            Model::Single(c) => c,
            Model::Multi(c) => c.as_mut(),
            Model::Reference(c) => c,
        }
    }

    fn ceiling(&self) -> Option<OpCounter> {
        match self {
            Model::Single(c) => Some(c.miss_ceiling()),
            Model::Multi(c) => Some(c.packet_ceiling()),
            Model::Reference(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub engine: String,
    pub policy: String,
    pub k_w: usize,
    pub d_w: usize,
    pub k_m: usize,
    pub d_m: usize,
    pub integer_factor: IntegerFactor,
    pub trace: String,
    pub seed: Option<u64>,
    pub generator: Option<String>,
    pub events: u64,
    pub hits: u64,
    pub misses: u64,
    pub hit_ratio: f64,
    pub max_ops: OpCounter,
    pub total_ops: OpCounter,
}

/// Per-event outcome stream, for cross-engine comparisons.
pub fn hit_stream(config: &ExperimentConfig, trace: &Trace) -> Result<Vec<bool>> {
    let mut model = Model::build(config, config.trace.universe(trace))?;
    let m = model.model();
    trace.keys.iter().map(|&k| m.access(k).map(|a| a.hit)).collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let trace = config.trace.load()?;
    run_on_trace(config, &trace)
}

/// Replays `trace` (already loaded from `config.trace`) through a fresh
/// cache. Per-packet op counts are checked against the engine's ceiling
/// and hit packets of single-region caches against the exact hit cost.
pub fn run_on_trace(config: &ExperimentConfig, trace: &Trace) -> Result<ExperimentReport> {
    let mut model = Model::build(config, config.trace.universe(trace))?;
    let ceiling = model.ceiling();
    let exact_hit = matches!(model, Model::Single(_)).then(Cache::hit_cost);
    let mut hits = 0u64;
    let mut max_ops = OpCounter::default();
    let mut total_ops = OpCounter::default();
    let m = model.model();
    for (i, &key) in trace.keys.iter().enumerate() {
        let a = m.access(key)?;
        if let Some(c) = &ceiling {
            let hit_ok = !a.hit || exact_hit.is_none_or(|h| h == a.ops);
            if !a.ops.within(c) || !hit_ok {
                return Err(CacheError::OpBound(format!(
                    "event {i} (key {key}) cost {:?} breaks the per-packet bound {c:?}",
                    a.ops
                )));
            }
        }
        hits += a.hit as u64;
        max_ops = max_ops.max(a.ops);
        total_ops += a.ops;
    }
    let events = trace.len() as u64;
    let (k_w, d_w, k_m, d_m) = config.cache.geometry();
    Ok(ExperimentReport {
        engine: config.engine_label(),
        policy: config.cache.label(),
        k_w,
        d_w,
        k_m,
        d_m,
        integer_factor: config.integer_factor,
        trace: trace.identity.clone(),
        seed: trace.seed,
        generator: trace.generator.clone(),
        events,
        hits,
        misses: events - hits,
        hit_ratio: if events == 0 { 0.0 } else { hits as f64 / events as f64 },
        max_ops,
        total_ops,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    /// Main-region associativities at the base main capacity.
    pub ks: Vec<usize>,
    /// Main-region capacities. With `ks` empty the base `k_m` is kept.
    pub cache_sizes: Vec<usize>,
    pub integer_factors: Vec<IntegerFactor>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.ks.is_empty() && self.cache_sizes.is_empty() && self.integer_factors.is_empty()
    }
}

/// Grid points in a fixed order: sizes, then k, then integer factor.
pub fn expand_sweep(base: &ExperimentConfig, axes: &SweepAxes) -> Result<Vec<ExperimentConfig>> {
    let (_, _, base_k, base_d) = base.cache.geometry();
    let sizes = if axes.cache_sizes.is_empty() {
        vec![base_k * base_d]
    } else {
        axes.cache_sizes.clone()
    };
    let ks = if axes.ks.is_empty() { vec![base_k] } else { axes.ks.clone() };
    let factors = if axes.integer_factors.is_empty() {
        vec![base.integer_factor]
    } else {
        axes.integer_factors.clone()
    };
    if !axes.integer_factors.is_empty() && !base.cache.uses_hyperbolic() {
        return Err(CacheError::InvalidConfig(
            "integer-factor sweep needs a hyperbolic region".into(),
        ));
    }
    let mut out = Vec::new();
    for &size in &sizes {
        for &k in &ks {
            // A fully associative reference has one set of `size` ways.
            let (k, d) = if base.full {
                (size, 1)
            } else {
                if k == 0 || size == 0 || size % k != 0 {
                    return Err(CacheError::InvalidConfig(format!(
                        "k = {k} does not divide cache size {size}"
                    )));
                }
                (k, size / k)
            };
            for &integer_factor in &factors {
                out.push(ExperimentConfig {
                    cache: base.cache.with_main(k, d),
                    integer_factor,
                    ..base.clone()
                });
            }
        }
    }
    out.dedup();
    Ok(out)
}

/// Runs every grid point (concurrently) over one shared trace; the result
/// order follows [`expand_sweep`].
pub fn run_sweep(base: &ExperimentConfig, axes: &SweepAxes) -> Result<Vec<ExperimentReport>> {
    let points = expand_sweep(base, axes)?;
    let trace = base.trace.load()?;
    points.par_iter().map(|cfg| run_on_trace(cfg, &trace)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = CacheError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(CacheError::InvalidConfig(format!("unknown report format '{s}'"))),
        }
    }
}

pub const CSV_COLUMNS: [&str; 15] = [
    "engine",
    "policy",
    "k_w",
    "d_w",
    "k_m",
    "d_m",
    "integer_factor",
    "trace",
    "seed",
    "events",
    "hits",
    "hit_ratio",
    "max_tcam",
    "max_reads",
    "max_writes",
];

fn csv_row(r: &ExperimentReport) -> [String; 15] {
    [
        r.engine.clone(),
        r.policy.clone(),
        r.k_w.to_string(),
        r.d_w.to_string(),
        r.k_m.to_string(),
        r.d_m.to_string(),
        r.integer_factor.to_string(),
        r.trace.clone(),
        r.seed.map(|s| s.to_string()).unwrap_or_default(),
        r.events.to_string(),
        r.hits.to_string(),
        format!("{:.4}", r.hit_ratio),
        r.max_ops.tcam_matches.to_string(),
        r.max_ops.register_reads.to_string(),
        r.max_ops.register_writes.to_string(),
    ]
}

pub fn emit_report(reports: &[ExperimentReport], format: ReportFormat, out: &mut dyn Write) -> Result<()> {
    let fail = |e: std::io::Error| CacheError::io("writing report", e);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let to_err = |e: csv::Error| CacheError::Report(e.to_string());
            w.write_record(CSV_COLUMNS).map_err(to_err)?;
            for r in reports {
                w.write_record(csv_row(r)).map_err(to_err)?;
            }
            w.flush().map_err(fail)
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, reports)
                .map_err(|e| CacheError::Report(e.to_string()))?;
            out.write_all(b"\n").map_err(fail)
        }
    }
}

pub fn parse_json_reports(text: &str) -> Result<Vec<ExperimentReport>> {
    serde_json::from_str(text).map_err(|e| CacheError::Report(e.to_string()))
}
