//! Limited-associativity key-value caches under a switch-style restricted
//! computation model, with unrestricted reference caches and a trace-driven
//! experiment harness.
//!
//! The restricted engines ([`Cache`], [`MultiRegionCache`]) keep every set
//! as one packed bit string in a register array, find keys with a ternary
//! match over a parallel keys register, and choose victims with a fixed
//! sequence of compare-and-swap steps over the ways. Every register and
//! table access is counted in an [`OpCounter`].

pub mod error;
pub mod harness;
pub mod hyperbolic;
pub mod layout;
pub mod model;
pub mod multiregion;
pub mod oracle;
pub mod policy;
pub mod store;
pub mod traces;

pub use error::{CacheError, Result};
pub use harness::{
    emit_report, run_experiment, run_on_trace, run_sweep, CacheSpec, Engine, ExperimentConfig,
    ExperimentReport, ReportFormat, SweepAxes, TraceSource,
};
pub use hyperbolic::{Hyperbolic, IntegerFactor, LogTable};
pub use layout::{BitString, CacheElement, LayoutConfig};
pub use model::{Access, CacheModel};
pub use multiregion::{AdmissionScn, FilterKind, MultiRegionCache, MultiRegionConfig, RegionSpec};
pub use oracle::{exhaustive_check, Associativity, ExhaustiveConfig, ReferenceCache};
pub use policy::{Cache, FetchResult, Outcome, PolicyKind};
pub use store::{OpCounter, RegisterStore};
pub use traces::{Trace, TraceFormat, ZipfSpec};
