//! Core domain types: sites, links, the file catalog, and jobs.
//!
//! Everything here is plain value data. The topology is immutable once
//! built; only the [`FileCatalog`] (replica locations, per-site usage)
//! mutates during a simulation run, and that mutation is confined to the
//! engine's single-threaded loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Bandwidth clamp lower bound: 1 GB/s (decimal).
pub const BANDWIDTH_FLOOR: f64 = 1e9;
/// Bandwidth clamp upper bound: 10 GB/s (decimal).
pub const BANDWIDTH_CEIL: f64 = 1e10;

/// Short site identifier, e.g. `FNAL` or `UCSD`. Compared case-sensitively.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteId(pub String);

impl SiteId {
    pub fn new(name: impl Into<String>) -> Self {
        SiteId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SiteId {
    fn from(s: &str) -> Self {
        SiteId(s.to_owned())
    }
}

/// A grid site: a batch system with `cores` slots plus a disk store.
///
/// `internal_bandwidth` is carried from the fixture but does not constrain
/// anything in the current model.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: SiteId,
    pub cores: u32,
    /// Disk capacity in bytes.
    pub disk_capacity: u64,
    /// Intra-site bandwidth in bytes/second (stored, unused).
    pub internal_bandwidth: f64,
}

/// A directed wide-area link between two sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub src: SiteId,
    pub dst: SiteId,
    /// Bytes per second, clamped to `[BANDWIDTH_FLOOR, BANDWIDTH_CEIL]` at ingest.
    pub bandwidth: f64,
    /// One-way latency in milliseconds.
    pub latency_ms: f64,
    /// Per-attempt probability that a completed transfer is accepted, in (0, 1].
    pub quality: f64,
}

/// Immutable site/link graph. Links are directed; intra-site access is
/// modeled as the absence of a link with an implicit latency of 0 ms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    sites: BTreeMap<SiteId, Site>,
    /// src -> dst -> link; nested so lookups need no owned key.
    links: BTreeMap<SiteId, BTreeMap<SiteId, Link>>,
}

impl Topology {
    pub fn new(sites: Vec<Site>, links: Vec<Link>) -> Self {
        let sites = sites.into_iter().map(|s| (s.id.clone(), s)).collect();
        let mut by_src: BTreeMap<SiteId, BTreeMap<SiteId, Link>> = BTreeMap::new();
        for l in links {
            by_src
                .entry(l.src.clone())
                .or_default()
                .insert(l.dst.clone(), l);
        }
        Topology {
            sites,
            links: by_src,
        }
    }

    pub fn site(&self, id: &SiteId) -> Option<&Site> {
        self.sites.get(id)
    }

    pub fn sites(&self) -> impl Iterator<Item = &Site> {
        self.sites.values()
    }

    pub fn site_ids(&self) -> impl Iterator<Item = &SiteId> {
        self.sites.keys()
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn link(&self, src: &SiteId, dst: &SiteId) -> Option<&Link> {
        self.links.get(src)?.get(dst)
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values().flat_map(|m| m.values())
    }

    /// Latency in ms from `src` to `dst`: 0 within a site, the link latency
    /// across sites, `None` if no link exists.
    pub fn latency_ms(&self, src: &SiteId, dst: &SiteId) -> Option<f64> {
        if src == dst {
            Some(0.0)
        } else {
            self.link(src, dst).map(|l| l.latency_ms)
        }
    }
}

/// One logical file: its size and the set of sites holding a replica.
#[derive(Debug, Clone, PartialEq)]
pub struct FileRecord {
    pub lfn: String,
    pub size: u64,
    pub locations: BTreeSet<SiteId>,
}

/// The catalog of all files and their replica placement, plus the derived
/// per-site disk usage.
///
/// Invariant: `used_bytes(s)` equals the sum of sizes of records holding a
/// replica at `s`. All mutation goes through [`add_replica`] /
/// [`remove_replica`] / [`insert_record`], which keep the usage map in sync.
///
/// [`add_replica`]: FileCatalog::add_replica
/// [`remove_replica`]: FileCatalog::remove_replica
/// [`insert_record`]: FileCatalog::insert_record
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileCatalog {
    records: BTreeMap<String, FileRecord>,
    used_bytes: BTreeMap<SiteId, u64>,
}

impl FileCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, lfn: &str) -> Option<&FileRecord> {
        self.records.get(lfn)
    }

    pub fn records(&self) -> impl Iterator<Item = &FileRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn used_bytes(&self, site: &SiteId) -> u64 {
        self.used_bytes.get(site).copied().unwrap_or(0)
    }

    /// Inserts a new record, accounting its replicas. Returns false if the
    /// lfn already exists (record unchanged).
    pub fn insert_record(&mut self, record: FileRecord) -> bool {
        if self.records.contains_key(&record.lfn) {
            return false;
        }
        for site in &record.locations {
            *self.used_bytes.entry(site.clone()).or_insert(0) += record.size;
        }
        self.records.insert(record.lfn.clone(), record);
        true
    }

    /// Adds a replica of `lfn` at `site`. Idempotent; returns true if the
    /// replica was newly added.
    pub fn add_replica(&mut self, lfn: &str, site: &SiteId) -> bool {
        let Some(rec) = self.records.get_mut(lfn) else {
            return false;
        };
        if rec.locations.insert(site.clone()) {
            *self.used_bytes.entry(site.clone()).or_insert(0) += rec.size;
            true
        } else {
            false
        }
    }

    /// Drops the replica of `lfn` at `site`. Refuses to remove the last
    /// replica (locations must stay non-empty); returns true on removal.
    pub fn remove_replica(&mut self, lfn: &str, site: &SiteId) -> bool {
        let Some(rec) = self.records.get_mut(lfn) else {
            return false;
        };
        if rec.locations.len() <= 1 || !rec.locations.contains(site) {
            return false;
        }
        rec.locations.remove(site);
        let used = self
            .used_bytes
            .get_mut(site)
            .expect("usage entry exists for any site holding replicas");
        *used -= rec.size;
        true
    }

    /// Rewrites every record's location set to exactly `{site}`; used by the
    /// copy and remote scenarios which start with all data at the Tier-1.
    pub fn relocate_all_to(&mut self, site: &SiteId) {
        self.used_bytes.clear();
        let mut total = 0u64;
        for rec in self.records.values_mut() {
            rec.locations.clear();
            rec.locations.insert(site.clone());
            total += rec.size;
        }
        if !self.records.is_empty() {
            self.used_bytes.insert(site.clone(), total);
        }
    }

    /// Full recount of per-site usage from the records; for validation and
    /// invariant tests.
    pub fn recount_used_bytes(&self) -> BTreeMap<SiteId, u64> {
        let mut out: BTreeMap<SiteId, u64> = BTreeMap::new();
        for rec in self.records.values() {
            for site in &rec.locations {
                *out.entry(site.clone()).or_insert(0) += rec.size;
            }
        }
        out
    }

    /// True if the incremental usage map matches a full recount.
    pub fn usage_consistent(&self) -> bool {
        let recount = self.recount_used_bytes();
        self.used_bytes
            .iter()
            .filter(|(_, &v)| v > 0)
            .map(|(k, v)| (k.clone(), *v))
            .collect::<BTreeMap<_, _>>()
            == recount
    }
}

/// A unit of work from the trace: pure CPU demand plus the files it reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: u64,
    pub site: SiteId,
    /// Seconds of pure CPU demand.
    pub cpu_seconds: f64,
    /// Ordered list of input LFNs; may be empty.
    pub inputs: Vec<String>,
    /// Fraction of each input read. Fixed at 1.0 in the current model.
    pub read_fraction: f64,
    /// Wall clock from the original trace; informational only.
    pub original_walltime: f64,
}

/// Lifecycle of a job inside the simulation. Transitions only forward:
/// Queued -> Running -> Done.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobState {
    Queued,
    Running,
    Done,
}

/// Checks every structural invariant of a topology and returns one message
/// per violation. Reports rather than failing so callers can aggregate.
pub fn validate_topology(topology: &Topology) -> Vec<String> {
    let mut violations = Vec::new();
    for site in topology.sites() {
        if site.id.as_str().is_empty() {
            violations.push("site with empty name".to_owned());
        }
        if site.cores < 1 {
            violations.push(format!("site {}: cores must be >= 1", site.id));
        }
        if site.internal_bandwidth < 0.0 {
            violations.push(format!("site {}: internal bandwidth must be >= 0", site.id));
        }
    }
    for link in topology.links() {
        let name = format!("link {}->{}", link.src, link.dst);
        if link.src == link.dst {
            violations.push(format!("{name}: self-links are not allowed"));
        }
        for end in [&link.src, &link.dst] {
            if topology.site(end).is_none() {
                violations.push(format!("{name}: unknown site {end}"));
            }
        }
        if !(BANDWIDTH_FLOOR..=BANDWIDTH_CEIL).contains(&link.bandwidth) {
            violations.push(format!(
                "{name}: bandwidth {} B/s outside clamp bounds [{BANDWIDTH_FLOOR}, {BANDWIDTH_CEIL}]",
                link.bandwidth
            ));
        }
        if link.latency_ms < 0.0 {
            violations.push(format!("{name}: latency must be >= 0"));
        }
        if !(link.quality > 0.0 && link.quality <= 1.0) {
            violations.push(format!(
                "{name}: quality {} outside (0, 1]",
                link.quality
            ));
        }
    }
    violations
}
