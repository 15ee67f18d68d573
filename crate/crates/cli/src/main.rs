//! Command-line driver: loads the fixture files, runs one scenario or the
//! full half/normal/double parameter sweep, writes the CSV outputs, and
//! prints a summary grid.
//!
//! Exit codes: 0 success, 1 fixture/validation/simulation failure, 2 usage
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use rayon::prelude::*;

use gridsim_core::engine::RunConfig;
use gridsim_core::ingest::assemble_state;
use gridsim_core::metrics::{self, summarize, write_outputs, SummaryReport};
use gridsim_core::model::SiteId;
use gridsim_core::params::{EfficiencyHistogram, ParamSet, SweepConfig, SWEEP_FACTORS};
use gridsim_core::scenarios::ScenarioKind;
use gridsim_core::FixtureSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    Preplaced,
    Copy,
    Remote,
    /// Run all three scenarios.
    All,
}

impl ScenarioArg {
    fn kinds(self) -> Vec<ScenarioKind> {
        match self {
            ScenarioArg::Preplaced => vec![ScenarioKind::Preplaced],
            ScenarioArg::Copy => vec![ScenarioKind::Copy],
            ScenarioArg::Remote => vec![ScenarioKind::Remote],
            ScenarioArg::All => ScenarioKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

fn positive_f64(raw: &str) -> Result<f64, String> {
    let v: f64 = raw.parse().map_err(|_| format!("`{raw}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {raw}"))
    }
}

/// Trace-driven simulator of data placement strategies on a compute grid.
#[derive(Debug, Parser)]
#[command(name = "gridsim", version, about)]
struct Args {
    /// Sites fixture (site,cores,disk_tb,internal_gbps).
    #[arg(long)]
    sites: PathBuf,
    /// Links fixture (src,dst,bandwidth_gbps,latency_ms,quality).
    #[arg(long)]
    links: PathBuf,
    /// Replica catalog fixture (lfn,size_bytes,sites).
    #[arg(long)]
    catalog: PathBuf,
    /// Job trace fixture (job_id,site,cpu_seconds,walltime_seconds,lfns).
    #[arg(long)]
    trace: PathBuf,
    /// Efficiency histogram: 11 CPU-bin edges, then 10 rows of 100 counts.
    #[arg(long)]
    histogram: PathBuf,
    /// Data placement strategy to simulate.
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    /// Multiplier on the CPU-efficiency penalty table.
    #[arg(long, default_value = "1", value_parser = positive_f64)]
    cpu_hit_factor: f64,
    /// Multiplier on the max single-file transfer speed table.
    #[arg(long, default_value = "1", value_parser = positive_f64)]
    speed_factor: f64,
    /// Run the full half/normal/double grid of both factors.
    #[arg(long)]
    sweep: bool,
    /// Base RNG seed; per-run streams derive from it and the scenario.
    #[arg(long, default_value = "42")]
    seed: u64,
    /// Simulation time slice in seconds.
    #[arg(long, default_value = "100", value_parser = positive_f64)]
    slice_seconds: f64,
    /// Tier-1 site name (data hub).
    #[arg(long, default_value = "FNAL")]
    tier1: String,
    /// Output directory (per-cell subdirectories in multi-run mode).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Duplicate the trace, rotating Tier-2 duplicates to the next site.
    #[arg(long, value_enum, default_value = "on")]
    duplicate_trace: OnOff,
    /// Optional key=value overrides for the penalty/speed tables.
    #[arg(long)]
    params: Option<PathBuf>,
}

struct CellResult {
    scenario: ScenarioKind,
    cpu: f64,
    speed: f64,
    report: SummaryReport,
    summary_row: String,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run_command(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run_command(args: Args) -> Result<()> {
    let params = load_params(&args)?;
    let fixtures = FixtureSet {
        sites_path: args.sites.clone(),
        links_path: args.links.clone(),
        catalog_path: args.catalog.clone(),
        trace_path: args.trace.clone(),
    };

    let factors: Vec<(f64, f64)> = if args.sweep {
        SWEEP_FACTORS
            .iter()
            .flat_map(|&cpu| SWEEP_FACTORS.iter().map(move |&speed| (cpu, speed)))
            .collect()
    } else {
        vec![(args.cpu_hit_factor, args.speed_factor)]
    };
    let cells: Vec<(ScenarioKind, f64, f64)> = args
        .scenario
        .kinds()
        .into_iter()
        .flat_map(|s| factors.iter().map(move |&(c, v)| (s, c, v)))
        .collect();
    let multi = cells.len() > 1;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads(cells.len()))
        .build()
        .context("building worker pool")?;
    let results: Vec<Result<CellResult>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(scenario, cpu, speed)| {
                run_cell(&args, &fixtures, params.clone(), scenario, cpu, speed, multi)
            })
            .collect()
    });
    let mut done = Vec::new();
    for r in results {
        done.push(r?);
    }

    if multi {
        let mut combined = String::from(metrics::SUMMARY_HEADER);
        combined.push('\n');
        for cell in &done {
            combined.push_str(&cell.summary_row);
            combined.push('\n');
        }
        let path = args.out.join("sweep_summary.csv");
        std::fs::write(&path, combined)
            .with_context(|| format!("writing {}", path.display()))?;
    }

    print_summary(&args, &done);
    Ok(())
}

fn sweep_threads(cells: usize) -> usize {
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = std::env::var("GRIDSIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(hw);
    cap.min(cells.max(1))
}

fn load_params(args: &Args) -> Result<ParamSet> {
    let text = std::fs::read_to_string(&args.histogram)
        .with_context(|| format!("reading {}", args.histogram.display()))?;
    let histogram = EfficiencyHistogram::from_csv(&text)
        .with_context(|| format!("loading histogram {}", args.histogram.display()))?;
    let mut params = ParamSet::new(histogram);
    if let Some(path) = &args.params {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        params
            .apply_overrides(&text)
            .with_context(|| format!("applying overrides from {}", path.display()))?;
    }
    Ok(params)
}

fn run_cell(
    args: &Args,
    fixtures: &FixtureSet,
    params: ParamSet,
    scenario: ScenarioKind,
    cpu: f64,
    speed: f64,
    multi: bool,
) -> Result<CellResult> {
    let mut config = RunConfig::new(scenario);
    config.tier1 = SiteId::new(args.tier1.clone());
    config.slice_seconds = args.slice_seconds;
    config.duplicate_trace = args.duplicate_trace == OnOff::On;
    config.sweep = SweepConfig {
        cpu_hit_factor: cpu,
        speed_factor: speed,
        rng_seed: args.seed,
    };

    let mut state = assemble_state(fixtures, params, &config)
        .with_context(|| format!("assembling {} cpu={cpu} speed={speed}", scenario.name()))?;
    let log = state
        .run()
        .with_context(|| format!("running {} cpu={cpu} speed={speed}", scenario.name()))?;

    let dir = if multi {
        args.out.join(cell_dir_name(scenario, cpu, speed))
    } else {
        args.out.clone()
    };
    write_outputs(&log, &dir).with_context(|| format!("writing outputs to {}", dir.display()))?;

    Ok(CellResult {
        scenario,
        cpu,
        speed,
        report: summarize(&log.jobs),
        summary_row: metrics::summary_row(&log),
    })
}

fn cell_dir_name(scenario: ScenarioKind, cpu: f64, speed: f64) -> String {
    format!(
        "{}_cpu{}_speed{}",
        scenario.name(),
        metrics::fmt_f64(cpu),
        metrics::fmt_f64(speed)
    )
}

fn print_summary(args: &Args, cells: &[CellResult]) {
    if cells.len() == 1 {
        let c = &cells[0];
        println!(
            "{}: total wall {} s ({:.4}e9 s), mean efficiency {:.4}, {} done, {} failed",
            c.scenario.name(),
            metrics::fmt_f64(c.report.total_wall_seconds),
            c.report.total_wall_giga_seconds,
            c.report.mean_realized_efficiency,
            c.report.done_jobs,
            c.report.failed_jobs
        );
        return;
    }

    println!(
        "total wall clock of all jobs, 1e9 seconds (seed {})",
        args.seed
    );
    let cpu_factors = sorted_values(cells.iter().map(|c| c.cpu));
    let speed_factors = sorted_values(cells.iter().map(|c| c.speed));
    let scenarios: Vec<ScenarioKind> = ScenarioKind::ALL
        .into_iter()
        .filter(|s| cells.iter().any(|c| c.scenario == *s))
        .collect();

    let mut header = format!("{:>14}", "speed \\ cpu");
    for cpu in &cpu_factors {
        for s in &scenarios {
            header.push_str(&format!(
                "{:>10}",
                format!("{}@{}", &s.name()[..4.min(s.name().len())], metrics::fmt_f64(*cpu))
            ));
        }
    }
    println!("{header}");
    for speed in &speed_factors {
        let mut line = format!("{:>14}", metrics::fmt_f64(*speed));
        for cpu in &cpu_factors {
            for s in &scenarios {
                let cell = cells
                    .iter()
                    .find(|c| c.scenario == *s && c.cpu == *cpu && c.speed == *speed);
                match cell {
                    Some(c) => line.push_str(&format!("{:>10.3}", c.report.total_wall_giga_seconds)),
                    None => line.push_str(&format!("{:>10}", "-")),
                }
            }
        }
        println!("{line}");
    }
    let failed: u64 = cells.iter().map(|c| c.report.failed_jobs).sum();
    if failed > 0 {
        println!("{failed} failed jobs across all runs (see jobs.csv status column)");
    }
}

fn sorted_values(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}
