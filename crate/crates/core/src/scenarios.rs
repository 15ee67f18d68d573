//! The three data-placement strategies, exposed behind one planning
//! interface the engine consults when a job starts.
//!
//! - `preplaced`: the catalog keeps its fixture locations; off-site inputs
//!   are streamed from the nearest replica.
//! - `copy`: all data starts at the Tier-1; inputs are staged to the
//!   execution site and cached there as new replicas.
//! - `remote`: all data stays at the Tier-1 for the whole run; every
//!   off-site input is streamed and no replica is ever created.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::model::{FileCatalog, Job, SiteId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Preplaced,
    Copy,
    Remote,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::Preplaced,
        ScenarioKind::Copy,
        ScenarioKind::Remote,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Preplaced => "preplaced",
            ScenarioKind::Copy => "copy",
            ScenarioKind::Remote => "remote",
        }
    }

    /// Whether completed stage-ins leave a cached replica behind.
    pub fn caches_stage_ins(&self) -> bool {
        matches!(self, ScenarioKind::Copy)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "preplaced" => Ok(ScenarioKind::Preplaced),
            "copy" => Ok(ScenarioKind::Copy),
            "remote" => Ok(ScenarioKind::Remote),
            other => Err(Error::Invalid(format!(
                "unknown scenario `{other}` (expected preplaced, copy or remote)"
            ))),
        }
    }
}

/// How one input of a job is accessed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessDecision {
    /// A replica exists at the job's site.
    Local,
    /// Copy the file from `src` to the job's site before compute starts.
    StageIn(SiteId),
    /// Read the file from `src` over the WAN for the job's duration.
    Stream(SiteId),
}

/// Per-input access decisions for one job, parallel to `job.inputs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessPlan {
    pub decisions: Vec<AccessDecision>,
}

/// Why a plan could not be produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanError {
    UnknownFile(String),
    /// No replica of the file is reachable from the job's site.
    Unreachable(String),
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanError::UnknownFile(lfn) => write!(f, "no catalog record for `{lfn}`"),
            PlanError::Unreachable(lfn) => {
                write!(f, "no replica of `{lfn}` is reachable from the job's site")
            }
        }
    }
}

/// The replica of `lfn` with the lowest-latency link to `dst`, ties broken
/// by site name. `None` when no holder has a link to `dst`.
pub fn nearest_replica(
    topology: &Topology,
    catalog: &FileCatalog,
    lfn: &str,
    dst: &SiteId,
) -> Option<SiteId> {
    let rec = catalog.record(lfn)?;
    rec.locations
        .iter()
        .filter(|site| *site != dst)
        .filter_map(|site| {
            topology
                .latency_ms(site, dst)
                .map(|latency| (latency, site))
        })
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(b.1)))
        .map(|(_, site)| site.clone())
}

/// Builds the access plan for a job under the given scenario.
pub fn plan_access(
    kind: ScenarioKind,
    topology: &Topology,
    catalog: &FileCatalog,
    job: &Job,
) -> Result<AccessPlan, PlanError> {
    let mut decisions = Vec::with_capacity(job.inputs.len());
    for lfn in &job.inputs {
        let rec = catalog
            .record(lfn)
            .ok_or_else(|| PlanError::UnknownFile(lfn.clone()))?;
        if rec.locations.contains(&job.site) {
            decisions.push(AccessDecision::Local);
            continue;
        }
        let src = nearest_replica(topology, catalog, lfn, &job.site)
            .ok_or_else(|| PlanError::Unreachable(lfn.clone()))?;
        let decision = match kind {
            ScenarioKind::Preplaced | ScenarioKind::Remote => AccessDecision::Stream(src),
            ScenarioKind::Copy => {
                let capacity = topology
                    .site(&job.site)
                    .map(|s| s.disk_capacity)
                    .unwrap_or(0);
                // A file that could never fit even on an empty disk is
                // streamed instead of staged.
                if rec.size > capacity {
                    AccessDecision::Stream(src)
                } else {
                    AccessDecision::StageIn(src)
                }
            }
        };
        decisions.push(decision);
    }
    Ok(AccessPlan { decisions })
}

pub fn preplaced_policy(
    topology: &Topology,
    catalog: &FileCatalog,
    job: &Job,
) -> Result<AccessPlan, PlanError> {
    plan_access(ScenarioKind::Preplaced, topology, catalog, job)
}

pub fn copy_policy(
    topology: &Topology,
    catalog: &FileCatalog,
    job: &Job,
) -> Result<AccessPlan, PlanError> {
    plan_access(ScenarioKind::Copy, topology, catalog, job)
}

pub fn remote_policy(
    topology: &Topology,
    catalog: &FileCatalog,
    job: &Job,
) -> Result<AccessPlan, PlanError> {
    plan_access(ScenarioKind::Remote, topology, catalog, job)
}

/// Outcome of trying to cache a staged file at its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheInsert {
    /// A new replica was added (possibly after evictions).
    Inserted,
    /// Another job already cached the file here.
    AlreadyPresent,
    /// Even after evicting everything evictable the file cannot fit; the
    /// caller should fall back to streaming.
    NoSpace,
}

/// Tracks which replicas are cache inserts (as opposed to fixture
/// replicas, which are never evicted) together with their last-use time.
#[derive(Debug, Clone, Default)]
pub struct CacheTracker {
    /// (site, lfn) -> last-use slice index.
    entries: BTreeMap<(SiteId, String), u64>,
}

impl CacheTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_cached(&self, site: &SiteId, lfn: &str) -> bool {
        self.entries.contains_key(&(site.clone(), lfn.to_owned()))
    }

    /// Refreshes the recency stamp of a cached replica, if there is one.
    pub fn touch(&mut self, site: &SiteId, lfn: &str, now: u64) {
        if let Some(stamp) = self.entries.get_mut(&(site.clone(), lfn.to_owned())) {
            *stamp = now;
        }
    }

    /// Tries to add a cached replica of `lfn` at `site`, evicting
    /// least-recently-used unpinned cache entries until it fits. `pinned`
    /// names lfns that may not be evicted (inputs of running jobs).
    pub fn try_insert(
        &mut self,
        catalog: &mut FileCatalog,
        topology: &Topology,
        site: &SiteId,
        lfn: &str,
        now: u64,
        pinned: &dyn Fn(&str) -> bool,
    ) -> CacheInsert {
        let Some(rec) = catalog.record(lfn) else {
            return CacheInsert::NoSpace;
        };
        if rec.locations.contains(site) {
            self.touch(site, lfn, now);
            return CacheInsert::AlreadyPresent;
        }
        let size = rec.size;
        let capacity = topology.site(site).map(|s| s.disk_capacity).unwrap_or(0);

        while catalog.used_bytes(site) + size > capacity {
            let victim = self
                .entries
                .iter()
                .filter(|((s, l), _)| s == site && !pinned(l))
                .min_by(|a, b| a.1.cmp(b.1).then_with(|| a.0 .1.cmp(&b.0 .1)))
                .map(|(key, _)| key.clone());
            let Some(key) = victim else {
                return CacheInsert::NoSpace;
            };
            // Cached replicas always have a surviving origin elsewhere, so
            // removal cannot orphan the file.
            let removed = catalog.remove_replica(&key.1, site);
            debug_assert!(removed, "cache entry should be removable");
            self.entries.remove(&key);
        }

        catalog.add_replica(lfn, site);
        self.entries.insert((site.clone(), lfn.to_owned()), now);
        CacheInsert::Inserted
    }
}
