//! Per-slice and per-job observables, plus the CSV outputs a run leaves
//! behind: `jobs.csv`, `queues.csv`, `links.csv` and `summary.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::SiteId;
use crate::params::EFF_BINS;
use crate::scenarios::ScenarioKind;

/// Final accounting for one job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub job_id: u64,
    pub site: SiteId,
    pub cpu_seconds: f64,
    pub base_efficiency: f64,
    /// cpu_seconds / wall_clock for done jobs; 0 for failed ones.
    pub realized_efficiency: f64,
    /// Stage-in wait plus exact compute time (not slice-rounded).
    pub wall_clock: f64,
    pub stage_in_wait: f64,
    pub status: JobStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobStatus {
    Done,
    Failed,
}

impl JobStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            JobStatus::Done => "done",
            JobStatus::Failed => "failed",
        }
    }
}

/// Queue depths of one site at one slice boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueSample {
    pub clock: f64,
    pub site: SiteId,
    pub queued: u64,
    pub running: u64,
    pub done: u64,
}

/// Bytes moved over one directed link during one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSample {
    pub clock: f64,
    pub src: SiteId,
    pub dst: SiteId,
    pub bytes: f64,
}

/// Whole-run byte accounting for one directed link, kept for conservation
/// checks: `bytes` sums the per-slice samples, `attempt_bytes` sums what
/// each transfer attempt delivered (full size per finished attempt, the
/// partial remainder for attempts cancelled with their job).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkTotals {
    pub bytes: f64,
    pub attempt_bytes: f64,
    pub attempts: u64,
}

/// Identity of a run, echoed into the output files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub scenario: ScenarioKind,
    pub cpu_hit_factor: f64,
    pub speed_factor: f64,
    pub seed: u64,
    pub slice_seconds: f64,
}

/// Everything one run observed.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub meta: RunMeta,
    /// Recorded slice boundaries, starting with the initial sample at 0.
    pub clocks: Vec<f64>,
    pub queue_samples: Vec<QueueSample>,
    pub link_samples: Vec<LinkSample>,
    pub jobs: Vec<JobRecord>,
    pub link_totals: BTreeMap<(SiteId, SiteId), LinkTotals>,
    pub total_jobs: u64,
}

impl MetricsLog {
    pub fn new(meta: RunMeta, total_jobs: u64) -> Self {
        MetricsLog {
            meta,
            clocks: Vec::new(),
            queue_samples: Vec::new(),
            link_samples: Vec::new(),
            jobs: Vec::new(),
            link_totals: BTreeMap::new(),
            total_jobs,
        }
    }

    /// Number of recorded sample points (initial sample included).
    pub fn num_slices(&self) -> usize {
        self.clocks.len()
    }
}

/// Appends one slice worth of samples: a queue sample per site and a link
/// sample per link that moved bytes.
pub fn record_slice(
    log: &mut MetricsLog,
    clock: f64,
    site_states: &[(SiteId, u64, u64, u64)],
    link_bytes: &BTreeMap<(SiteId, SiteId), f64>,
) {
    log.clocks.push(clock);
    for (site, queued, running, done) in site_states {
        log.queue_samples.push(QueueSample {
            clock,
            site: site.clone(),
            queued: *queued,
            running: *running,
            done: *done,
        });
    }
    for ((src, dst), bytes) in link_bytes {
        if *bytes > 0.0 {
            log.link_samples.push(LinkSample {
                clock,
                src: src.clone(),
                dst: dst.clone(),
                bytes: *bytes,
            });
            log.link_totals.entry((src.clone(), dst.clone())).or_default().bytes += bytes;
        }
    }
}

/// Aggregates of one run. Failed jobs are counted but excluded from wall
/// clock and efficiency figures.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryReport {
    pub total_wall_seconds: f64,
    /// Same total in units of 1e9 seconds (the scale of the headline tables).
    pub total_wall_giga_seconds: f64,
    pub mean_realized_efficiency: f64,
    pub done_jobs: u64,
    pub failed_jobs: u64,
    pub per_site_wall: BTreeMap<SiteId, f64>,
    /// Realized-efficiency histogram over 100 bins of width 0.01.
    pub efficiency_histogram: Vec<u64>,
}

pub fn summarize(records: &[JobRecord]) -> SummaryReport {
    let mut total = 0.0;
    let mut eff_sum = 0.0;
    let mut done = 0u64;
    let mut failed = 0u64;
    let mut per_site: BTreeMap<SiteId, f64> = BTreeMap::new();
    let mut hist = vec![0u64; EFF_BINS];
    for rec in records {
        match rec.status {
            JobStatus::Failed => failed += 1,
            JobStatus::Done => {
                done += 1;
                total += rec.wall_clock;
                eff_sum += rec.realized_efficiency;
                *per_site.entry(rec.site.clone()).or_insert(0.0) += rec.wall_clock;
                let bin = ((rec.realized_efficiency * EFF_BINS as f64).floor() as usize)
                    .min(EFF_BINS - 1);
                hist[bin] += 1;
            }
        }
    }
    SummaryReport {
        total_wall_seconds: total,
        total_wall_giga_seconds: total / 1e9,
        mean_realized_efficiency: if done > 0 { eff_sum / done as f64 } else { 0.0 },
        done_jobs: done,
        failed_jobs: failed,
        per_site_wall: per_site,
        efficiency_histogram: hist,
    }
}

/// Formats a float for CSV output: integral values bare, everything else
/// rounded to 6 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        return "0".to_owned();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        return format!("{}", v as i64);
    }
    // Exponent from scientific formatting (exact, unlike log10 at bin edges).
    let sci = format!("{:e}", v.abs());
    let exp: i32 = sci
        .split('e')
        .nth(1)
        .and_then(|e| e.parse().ok())
        .unwrap_or(0);
    let scale = 10f64.powi(exp - 5);
    let rounded = (v / scale).round() * scale;
    if rounded.fract() == 0.0 && rounded.abs() < 9.0e15 {
        return format!("{}", rounded as i64);
    }
    let decimals = (5 - exp).max(0) as usize;
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

pub const JOBS_HEADER: &str =
    "job_id,site,scenario,cpu_s,base_eff,realized_eff,wall_s,stagein_s,status";
pub const QUEUES_HEADER: &str = "clock_s,site,queued,running,done";
pub const LINKS_HEADER: &str = "clock_s,src,dst,bytes";
pub const SUMMARY_HEADER: &str =
    "scenario,cpu_hit_factor,speed_factor,seed,total_wall_s,mean_eff,failed_jobs";

pub fn jobs_csv(log: &MetricsLog) -> String {
    let mut rows = log.jobs.clone();
    rows.sort_by_key(|r| r.job_id);
    let mut out = String::from(JOBS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.job_id,
            r.site,
            log.meta.scenario,
            fmt_f64(r.cpu_seconds),
            fmt_f64(r.base_efficiency),
            fmt_f64(r.realized_efficiency),
            fmt_f64(r.wall_clock),
            fmt_f64(r.stage_in_wait),
            r.status.as_str()
        );
    }
    out
}

pub fn queues_csv(log: &MetricsLog) -> String {
    let mut out = String::from(QUEUES_HEADER);
    out.push('\n');
    for s in &log.queue_samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(s.clock),
            s.site,
            s.queued,
            s.running,
            s.done
        );
    }
    out
}

pub fn links_csv(log: &MetricsLog) -> String {
    let mut out = String::from(LINKS_HEADER);
    out.push('\n');
    for s in &log.link_samples {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(s.clock),
            s.src,
            s.dst,
            fmt_f64(s.bytes)
        );
    }
    out
}

pub fn summary_csv(log: &MetricsLog) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    out.push_str(&summary_row(log));
    out.push('\n');
    out
}

/// One summary data row; sweep drivers concatenate these across cells.
pub fn summary_row(log: &MetricsLog) -> String {
    let report = summarize(&log.jobs);
    format!(
        "{},{},{},{},{},{},{}",
        log.meta.scenario,
        fmt_f64(log.meta.cpu_hit_factor),
        fmt_f64(log.meta.speed_factor),
        log.meta.seed,
        fmt_f64(report.total_wall_seconds),
        fmt_f64(report.mean_realized_efficiency),
        report.failed_jobs
    )
}

/// Writes the four CSV outputs into `directory`, creating it if needed.
pub fn write_outputs(log: &MetricsLog, directory: &Path) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: directory.display().to_string(),
        source,
    };
    std::fs::create_dir_all(directory).map_err(io_err)?;
    for (name, content) in [
        ("jobs.csv", jobs_csv(log)),
        ("queues.csv", queues_csv(log)),
        ("links.csv", links_csv(log)),
        ("summary.csv", summary_csv(log)),
    ] {
        let path = directory.join(name);
        std::fs::write(&path, content).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}
