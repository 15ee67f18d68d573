//! Fixture parsing and initial-state assembly.
//!
//! Four CSV files describe a run: sites, links, the replica catalog, and the
//! job trace. All numeric fields are decimal, `;` separates intra-field
//! lists, and both LF and CRLF line endings are accepted. The serializers
//! here invert the parsers so fixtures can be regenerated from memory.
//!
//! Unit conventions:
//! - site `disk_tb` is decimal terabytes (1 TB = 1e12 bytes),
//! - site `internal_gbps` is gigabits per second (1 Gb/s = 1.25e8 B/s),
//! - link `bandwidth_gbps` is decimal gigabytes per second (1e9 B/s), the
//!   unit in which the 1-10 GB/s clamp is expressed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::engine::{RunConfig, SimulationState};
use crate::error::{Error, Result};
use crate::model::{
    FileCatalog, FileRecord, Job, Link, Site, SiteId, Topology, BANDWIDTH_CEIL, BANDWIDTH_FLOOR,
};
use crate::params::ParamSet;
use crate::scenarios::ScenarioKind;

pub const SITES_HEADER: &str = "site,cores,disk_tb,internal_gbps";
pub const LINKS_HEADER: &str = "src,dst,bandwidth_gbps,latency_ms,quality";
pub const CATALOG_HEADER: &str = "lfn,size_bytes,sites";
pub const TRACE_HEADER: &str = "job_id,site,cpu_seconds,walltime_seconds,lfns";

/// Paths to the four fixture files of one simulation input set.
#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub sites_path: PathBuf,
    pub links_path: PathBuf,
    pub catalog_path: PathBuf,
    pub trace_path: PathBuf,
}

/// A parsed job trace: the jobs plus any per-LFN size hints carried inline
/// (an input written as `lfn:bytes` supplies the size used when the catalog
/// has no record for it).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub jobs: Vec<Job>,
    pub size_hints: BTreeMap<String, u64>,
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Iterates data rows of a CSV fixture: checks the header, strips CR, skips
/// blank lines, and yields (1-based line number, line).
fn data_rows<'a>(
    text: &'a str,
    expected_header: &str,
) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.trim_end_matches('\r').trim(),
        None => "",
    };
    if header != expected_header {
        return Err(Error::parse(
            1,
            format!("expected header `{expected_header}`, found `{header}`"),
        ));
    }
    Ok(lines.filter_map(|(idx, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            None
        } else {
            Some((idx + 1, line))
        }
    }))
}

fn split_fields(line: &str, n: usize, lineno: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != n {
        return Err(Error::parse(
            lineno,
            format!("expected {n} comma-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn num_field<T: std::str::FromStr>(raw: &str, what: &str, lineno: usize) -> Result<T> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| Error::parse(lineno, format!("invalid {what}: `{raw}`")))
}

/// Clamps a link bandwidth to the 1-10 GB/s band used for WAN links.
pub fn clamp_bandwidth(raw: f64) -> Result<f64> {
    if raw.is_nan() || raw <= 0.0 {
        return Err(Error::Invalid(format!(
            "bandwidth must be positive, got {raw}"
        )));
    }
    Ok(raw.clamp(BANDWIDTH_FLOOR, BANDWIDTH_CEIL))
}

/// Parses the sites fixture. Header: `site,cores,disk_tb,internal_gbps`.
pub fn parse_sites(text: &str) -> Result<Vec<Site>> {
    let mut sites = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (lineno, line) in data_rows(text, SITES_HEADER)? {
        let f = split_fields(line, 4, lineno)?;
        let name = f[0].trim();
        if name.is_empty() {
            return Err(Error::parse(lineno, "empty site name"));
        }
        if !seen.insert(name.to_owned()) {
            return Err(Error::parse(lineno, format!("duplicate site `{name}`")));
        }
        let cores: u32 = num_field(f[1], "core count", lineno)?;
        if cores < 1 {
            return Err(Error::parse(
                lineno,
                format!("site `{name}`: cores must be >= 1"),
            ));
        }
        let disk_tb: f64 = num_field(f[2], "disk_tb", lineno)?;
        let internal_gbps: f64 = num_field(f[3], "internal_gbps", lineno)?;
        if disk_tb < 0.0 || internal_gbps < 0.0 {
            return Err(Error::parse(
                lineno,
                format!("site `{name}`: disk and internal bandwidth must be >= 0"),
            ));
        }
        sites.push(Site {
            id: SiteId::new(name),
            cores,
            disk_capacity: (disk_tb * 1e12).round() as u64,
            internal_bandwidth: internal_gbps * 1e9 / 8.0,
        });
    }
    Ok(sites)
}

/// Parses the links fixture. Header: `src,dst,bandwidth_gbps,latency_ms,quality`.
/// Bandwidths are clamped on the way in.
pub fn parse_links(text: &str) -> Result<Vec<Link>> {
    let mut links = Vec::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    for (lineno, line) in data_rows(text, LINKS_HEADER)? {
        let f = split_fields(line, 5, lineno)?;
        let src = f[0].trim();
        let dst = f[1].trim();
        if src.is_empty() || dst.is_empty() {
            return Err(Error::parse(lineno, "empty site name in link"));
        }
        if src == dst {
            return Err(Error::parse(
                lineno,
                format!("self-link at `{src}` is not allowed"),
            ));
        }
        if !seen.insert((src.to_owned(), dst.to_owned())) {
            return Err(Error::parse(
                lineno,
                format!("duplicate link {src}->{dst}"),
            ));
        }
        let gbps: f64 = num_field(f[2], "bandwidth_gbps", lineno)?;
        let bandwidth = clamp_bandwidth(gbps * 1e9)
            .map_err(|e| Error::parse(lineno, format!("link {src}->{dst}: {e}")))?;
        let latency_ms: f64 = num_field(f[3], "latency_ms", lineno)?;
        if latency_ms < 0.0 {
            return Err(Error::parse(
                lineno,
                format!("link {src}->{dst}: latency must be >= 0"),
            ));
        }
        let quality: f64 = num_field(f[4], "quality", lineno)?;
        if !(quality > 0.0 && quality <= 1.0) {
            return Err(Error::parse(
                lineno,
                format!("link {src}->{dst}: quality must be in (0, 1], got {quality}"),
            ));
        }
        links.push(Link {
            src: SiteId::new(src),
            dst: SiteId::new(dst),
            bandwidth,
            latency_ms,
            quality,
        });
    }
    Ok(links)
}

/// Parses the replica catalog. Header: `lfn,size_bytes,sites` with a
/// `;`-separated site list. Site existence is checked at assembly.
pub fn parse_catalog(text: &str) -> Result<FileCatalog> {
    let mut catalog = FileCatalog::new();
    for (lineno, line) in data_rows(text, CATALOG_HEADER)? {
        let f = split_fields(line, 3, lineno)?;
        let lfn = f[0].trim();
        if lfn.is_empty() {
            return Err(Error::parse(lineno, "empty lfn"));
        }
        let size: u64 = num_field(f[1], "size_bytes", lineno)?;
        if size == 0 {
            return Err(Error::parse(
                lineno,
                format!("file `{lfn}`: size must be > 0"),
            ));
        }
        let locations: BTreeSet<SiteId> = f[2]
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(SiteId::new)
            .collect();
        if locations.is_empty() {
            return Err(Error::parse(
                lineno,
                format!("file `{lfn}`: must have at least one location"),
            ));
        }
        let inserted = catalog.insert_record(FileRecord {
            lfn: lfn.to_owned(),
            size,
            locations,
        });
        if !inserted {
            return Err(Error::parse(lineno, format!("duplicate lfn `{lfn}`")));
        }
    }
    Ok(catalog)
}

/// Parses the job trace. Header: `job_id,site,cpu_seconds,walltime_seconds,lfns`.
/// The lfns field is `;`-separated and may be empty; an entry `lfn:bytes`
/// carries a size hint for files missing from the catalog.
pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut trace = Trace::default();
    let mut seen_ids: BTreeSet<u64> = BTreeSet::new();
    for (lineno, line) in data_rows(text, TRACE_HEADER)? {
        let f = split_fields(line, 5, lineno)?;
        let id: u64 = num_field(f[0], "job_id", lineno)?;
        if !seen_ids.insert(id) {
            return Err(Error::parse(lineno, format!("duplicate job id {id}")));
        }
        let site = f[1].trim();
        if site.is_empty() {
            return Err(Error::parse(lineno, format!("job {id}: empty site")));
        }
        let cpu_seconds: f64 = num_field(f[2], "cpu_seconds", lineno)?;
        if cpu_seconds.is_nan() || cpu_seconds <= 0.0 {
            return Err(Error::parse(
                lineno,
                format!("job {id}: cpu_seconds must be > 0, got {cpu_seconds}"),
            ));
        }
        let original_walltime: f64 = num_field(f[3], "walltime_seconds", lineno)?;
        if original_walltime < 0.0 {
            return Err(Error::parse(
                lineno,
                format!("job {id}: walltime must be >= 0"),
            ));
        }
        let mut inputs = Vec::new();
        for entry in f[4].split(';').map(str::trim).filter(|s| !s.is_empty()) {
            // `lfn:bytes` attaches a size hint; a suffix that is not all
            // digits is part of the name.
            let lfn = match entry.rsplit_once(':') {
                Some((name, digits))
                    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) =>
                {
                    let size: u64 = num_field(digits, "size hint", lineno)?;
                    if size == 0 {
                        return Err(Error::parse(
                            lineno,
                            format!("size hint for `{name}` must be > 0"),
                        ));
                    }
                    trace.size_hints.insert(name.to_owned(), size);
                    name
                }
                _ => entry,
            };
            inputs.push(lfn.to_owned());
        }
        trace.jobs.push(Job {
            id,
            site: SiteId::new(site),
            cpu_seconds,
            inputs,
            read_fraction: 1.0,
            original_walltime,
        });
    }
    Ok(trace)
}

/// Returns the Tier-2 sites of a topology in sorted name order.
fn tier2_sites(topology: &Topology, tier1: &SiteId) -> Vec<SiteId> {
    topology
        .site_ids()
        .filter(|s| *s != tier1)
        .cloned()
        .collect()
}

/// Appends one duplicate per job: Tier-1 duplicates stay put, Tier-2
/// duplicates move to the cyclic successor of their site in sorted
/// Tier-2 name order. Duplicate ids are `original id + trace length`.
pub fn duplicate_trace(jobs: &[Job], topology: &Topology, tier1: &SiteId) -> Result<Vec<Job>> {
    let tier2 = tier2_sites(topology, tier1);
    if tier2.len() < 2 {
        return Err(Error::Invalid(format!(
            "trace duplication needs at least 2 Tier-2 sites, topology has {}",
            tier2.len()
        )));
    }
    let n = jobs.len() as u64;
    let ids: BTreeSet<u64> = jobs.iter().map(|j| j.id).collect();
    let mut out = jobs.to_vec();
    for job in jobs {
        let dup_id = job.id + n;
        if ids.contains(&dup_id) {
            return Err(Error::Invalid(format!(
                "duplicate job id collision: {} + {} already present; trace ids must be dense from 0",
                job.id, n
            )));
        }
        let site = if &job.site == tier1 {
            tier1.clone()
        } else {
            let pos = tier2
                .iter()
                .position(|s| s == &job.site)
                .expect("job site validated against topology");
            tier2[(pos + 1) % tier2.len()].clone()
        };
        let mut dup = job.clone();
        dup.id = dup_id;
        dup.site = site;
        out.push(dup);
    }
    Ok(out)
}

/// Guarantees every lfn referenced by the trace has a catalog record,
/// creating Tier-1 replicas for missing ones from the trace's size hints.
pub fn place_missing_at_tier1(
    catalog: &mut FileCatalog,
    trace: &Trace,
    tier1: &SiteId,
) -> Result<()> {
    let mut missing: Vec<&str> = Vec::new();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for job in &trace.jobs {
        for lfn in &job.inputs {
            if catalog.record(lfn).is_none() && seen.insert(lfn) {
                missing.push(lfn);
            }
        }
    }
    for lfn in missing {
        let Some(&size) = trace.size_hints.get(lfn) else {
            return Err(Error::Invalid(format!(
                "file `{lfn}` is referenced by the trace but absent from the catalog and has no size hint"
            )));
        };
        catalog.insert_record(FileRecord {
            lfn: lfn.to_owned(),
            size,
            locations: [tier1.clone()].into(),
        });
    }
    Ok(())
}

/// Parses and cross-validates all fixtures, applies the scenario's catalog
/// rewrite and the trace-duplication transform, and builds the initial
/// engine state. All cross-reference failures are aggregated into one
/// validation report.
pub fn assemble_state(
    fixtures: &FixtureSet,
    params: ParamSet,
    config: &RunConfig,
) -> Result<SimulationState> {
    let sites_text = read_file(&fixtures.sites_path)?;
    let links_text = read_file(&fixtures.links_path)?;
    let catalog_text = read_file(&fixtures.catalog_path)?;
    let trace_text = read_file(&fixtures.trace_path)?;
    assemble_from_strs(
        &sites_text,
        &links_text,
        &catalog_text,
        &trace_text,
        params,
        config,
    )
}

/// In-memory variant of [`assemble_state`].
pub fn assemble_from_strs(
    sites_text: &str,
    links_text: &str,
    catalog_text: &str,
    trace_text: &str,
    params: ParamSet,
    config: &RunConfig,
) -> Result<SimulationState> {
    let sites = parse_sites(sites_text).map_err(|e| prefix_err("sites", e))?;
    let links = parse_links(links_text).map_err(|e| prefix_err("links", e))?;
    let topology = Topology::new(sites, links);
    let mut violations = crate::model::validate_topology(&topology);

    let mut catalog = parse_catalog(catalog_text).map_err(|e| prefix_err("catalog", e))?;
    for rec in catalog.records() {
        for site in &rec.locations {
            if topology.site(site).is_none() {
                violations.push(format!(
                    "catalog: file `{}` placed at unknown site {site}",
                    rec.lfn
                ));
            }
        }
    }

    let trace = parse_trace(trace_text).map_err(|e| prefix_err("trace", e))?;
    for job in &trace.jobs {
        if topology.site(&job.site).is_none() {
            violations.push(format!("trace: job {} runs at unknown site {}", job.id, job.site));
        }
    }

    if topology.site(&config.tier1).is_none() {
        violations.push(format!("tier-1 site {} not in topology", config.tier1));
    }

    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }

    place_missing_at_tier1(&mut catalog, &trace, &config.tier1)?;

    let original_len = trace.jobs.len();
    let jobs = if config.duplicate_trace {
        duplicate_trace(&trace.jobs, &topology, &config.tier1)?
    } else {
        trace.jobs.clone()
    };

    match config.scenario {
        ScenarioKind::Preplaced => {
            // The duplicated half of the trace carries its data along: any
            // input replicated at the original site gains a replica at the
            // duplicate's site.
            if config.duplicate_trace {
                for i in 0..original_len {
                    let orig = &jobs[i];
                    let dup_site = jobs[original_len + i].site.clone();
                    if orig.site == dup_site {
                        continue;
                    }
                    for lfn in &orig.inputs {
                        let has_origin = catalog
                            .record(lfn)
                            .is_some_and(|r| r.locations.contains(&orig.site));
                        if has_origin {
                            catalog.add_replica(lfn, &dup_site);
                        }
                    }
                }
            }
        }
        ScenarioKind::Copy | ScenarioKind::Remote => {
            catalog.relocate_all_to(&config.tier1);
        }
    }

    for site in topology.sites() {
        let used = catalog.used_bytes(&site.id);
        if used > site.disk_capacity {
            violations.push(format!(
                "site {}: initial replicas use {used} bytes, capacity is {}",
                site.id, site.disk_capacity
            ));
        }
    }
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }

    Ok(SimulationState::new(topology, catalog, jobs, params, config))
}

fn prefix_err(file: &str, err: Error) -> Error {
    match err {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{file} fixture: {msg}"),
        },
        other => other,
    }
}

// --- serializers (inverse of the parsers; used by generators and tests) ---

pub fn sites_to_csv(sites: &[Site]) -> String {
    let mut out = String::from(SITES_HEADER);
    out.push('\n');
    for s in sites {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.id,
            s.cores,
            s.disk_capacity as f64 / 1e12,
            s.internal_bandwidth * 8.0 / 1e9
        ));
    }
    out
}

pub fn links_to_csv(links: &[Link]) -> String {
    let mut out = String::from(LINKS_HEADER);
    out.push('\n');
    for l in links {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            l.src,
            l.dst,
            l.bandwidth / 1e9,
            l.latency_ms,
            l.quality
        ));
    }
    out
}

pub fn catalog_to_csv(catalog: &FileCatalog) -> String {
    let mut out = String::from(CATALOG_HEADER);
    out.push('\n');
    for rec in catalog.records() {
        let sites: Vec<&str> = rec.locations.iter().map(|s| s.as_str()).collect();
        out.push_str(&format!("{},{},{}\n", rec.lfn, rec.size, sites.join(";")));
    }
    out
}

pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for job in &trace.jobs {
        let lfns: Vec<String> = job
            .inputs
            .iter()
            .map(|lfn| match trace.size_hints.get(lfn) {
                Some(size) => format!("{lfn}:{size}"),
                None => lfn.clone(),
            })
            .collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            job.id,
            job.site,
            job.cpu_seconds,
            job.original_walltime,
            lfns.join(";")
        ));
    }
    out
}
