use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use setassoc_core::harness::{run_sweep, ReportFormat};
use setassoc_core::oracle::{exhaustive_check, ExhaustiveConfig};
use setassoc_core::traces::{generate_zipf, write_plain, ZipfSpec, GENERATOR_ID};
use setassoc_core::{
    emit_report, run_experiment, CacheSpec, Engine, ExperimentConfig, FilterKind, IntegerFactor,
    PolicyKind, RegionSpec, SweepAxes, TraceFormat, TraceSource,
};

#[derive(Parser)]
#[command(name = "setassoc", version, about = "Limited-associativity data-plane cache simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay one trace through one cache configuration.
    Run(RunArgs),
    /// Replay one trace over a grid of configurations.
    Sweep(SweepArgs),
    /// Write a Zipf trace in plain format.
    GenZipf(ZipfArgs),
    /// Compare the restricted engine with the reference on every short sequence.
    Check(CheckArgs),
}

#[derive(Args)]
struct ZipfArgs {
    #[arg(long, default_value_t = 1_000_000)]
    zipf_n: u64,
    #[arg(long, default_value_t = 0.99)]
    zipf_s: f64,
    #[arg(long, default_value_t = 1_000_000)]
    zipf_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ZipfArgs {
    fn spec(&self) -> ZipfSpec {
        ZipfSpec {
            n: self.zipf_n,
            s: self.zipf_s,
            length: self.zipf_len,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// restricted | reference
    #[arg(long, default_value = "restricted")]
    engine: String,
    /// Reference engine only: fully associative regions of the same capacity.
    #[arg(long)]
    full: bool,
    /// A single policy (lru) or a window-main pair (fifo-lru, FIFOxLRU).
    #[arg(long, default_value = "lru")]
    policy: String,
    #[arg(long, default_value_t = 8)]
    km: usize,
    #[arg(long, default_value_t = 64)]
    dm: usize,
    #[arg(long)]
    kw: Option<usize>,
    #[arg(long)]
    dw: Option<usize>,
    /// none | tinylfu (two-region caches only)
    #[arg(long, default_value = "none")]
    filter: String,
    #[arg(long, default_value = "100")]
    integer_factor: String,
    /// Trace file; a Zipf trace is generated when omitted.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// plain | arc | csv | csv:<column>
    #[arg(long, default_value = "plain")]
    trace_format: String,
    #[arg(long, default_value_t = 1_000_000)]
    zipf_n: u64,
    #[arg(long, default_value_t = 0.99)]
    zipf_s: f64,
    #[arg(long, default_value_t = 1_000_000)]
    zipf_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Report format: csv | json
    #[arg(long, default_value = "csv")]
    format: String,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Main-region associativities at the base capacity (km * dm).
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
    /// Main-region capacities.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    integer_factors: Vec<String>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value = "lru")]
    policy: String,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    alphabet: u64,
    #[arg(long, default_value_t = 6)]
    max_len: usize,
    #[arg(long, default_value = "100")]
    integer_factor: String,
}

fn parse_policies(s: &str) -> Result<Vec<PolicyKind>> {
    s.split(['-', 'x', 'X', ','])
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<PolicyKind>().map_err(Into::into))
        .collect()
}

fn experiment(args: &RunArgs) -> Result<ExperimentConfig> {
    let engine: Engine = args.engine.parse()?;
    let filter: FilterKind = args.filter.parse()?;
    let policies = parse_policies(&args.policy)?;
    let cache = match policies.as_slice() {
        [policy] => {
            if filter != FilterKind::None || args.kw.is_some() || args.dw.is_some() {
                bail!("--filter, --kw and --dw need a window-main policy pair such as lru-lru");
            }
            CacheSpec::Single { policy: *policy, k: args.km, d: args.dm }
        }
        [w, m] => {
            let (Some(kw), Some(dw)) = (args.kw, args.dw) else {
                bail!("a two-region cache needs --kw and --dw");
            };
            CacheSpec::Multi {
                window: RegionSpec { policy: *w, k: kw, d: dw },
                main: RegionSpec { policy: *m, k: args.km, d: args.dm },
                filter,
            }
        }
        _ => bail!("--policy takes one policy or a window-main pair, got '{}'", args.policy),
    };
    let trace = match &args.trace {
        Some(path) => TraceSource::File {
            path: path.clone(),
            format: args.trace_format.parse::<TraceFormat>()?,
        },
        None => TraceSource::Zipf(ZipfSpec {
            n: args.zipf_n,
            s: args.zipf_s,
            length: args.zipf_len,
            seed: args.seed,
        }),
    };
    Ok(ExperimentConfig {
        engine,
        full: args.full,
        cache,
        integer_factor: args.integer_factor.parse()?,
        trace,
    })
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("setassoc: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = experiment(&args)?;
            let format: ReportFormat = args.format.parse()?;
            let report = run_experiment(&cfg)?;
            let mut out = output(&args.out)?;
            emit_report(&[report], format, &mut out)?;
            out.flush()?;
        }
        Command::Sweep(args) => {
            let cfg = experiment(&args.run)?;
            let format: ReportFormat = args.run.format.parse()?;
            let axes = SweepAxes {
                ks: args.ks,
                cache_sizes: args.sizes,
                integer_factors: args
                    .integer_factors
                    .iter()
                    .map(|s| s.parse::<IntegerFactor>())
                    .collect::<Result<_, _>>()?,
            };
            let reports = run_sweep(&cfg, &axes)?;
            let mut out = output(&args.run.out)?;
            emit_report(&reports, format, &mut out)?;
            out.flush()?;
        }
        Command::GenZipf(args) => {
            let spec = args.spec();
            let keys = generate_zipf(&spec)?;
            match &args.out {
                Some(path) => write_plain(path, &keys)?,
                None => {
                    let mut out = output(&None)?;
                    for k in &keys {
                        writeln!(out, "{k}")?;
                    }
                    out.flush()?;
                }
            }
            eprintln!("{} events, seed {}, generator {GENERATOR_ID}", keys.len(), spec.seed);
        }
        Command::Check(args) => {
            let policy: PolicyKind = args.policy.parse()?;
            let report = exhaustive_check(ExhaustiveConfig {
                policy,
                k: args.k,
                d: args.d,
                alphabet: args.alphabet,
                max_len: args.max_len,
                integer_factor: args.integer_factor.parse()?,
            })?;
            println!(
                "policy={} k={} d={} sequences={} divergent={} metric_ties={} unexplained={}",
                report.policy,
                report.k,
                report.d,
                report.sequences,
                report.divergent,
                report.metric_ties,
                report.unexplained
            );
            let must_be_exact = matches!(policy, PolicyKind::Fifo | PolicyKind::Lru);
            let bad = if must_be_exact {
                report.first_divergence.as_ref()
            } else {
                report.first_unexplained.as_ref()
            };
            if let Some(div) = bad {
                eprintln!("first offending sequence:\n{}", div.dump);
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
