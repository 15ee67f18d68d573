//! The time-sliced simulation core.
//!
//! Each slice (default 100 s) the engine: starts queued jobs onto free
//! cores, divides link bandwidth among active transfers, advances transfers
//! (with quality-driven retries and replica fallback), advances running
//! jobs, and records metrics. Jobs hold their core from start to finish;
//! time spent waiting on stage-ins counts toward the job's wall clock.
//!
//! The loop is single-threaded and fully deterministic: two runs with the
//! same inputs and seed produce identical logs. Parallelism belongs one
//! level up, across independent runs.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{self, JobRecord, JobStatus, MetricsLog, RunMeta};
use crate::model::{FileCatalog, Job, SiteId, Topology};
use crate::params::{EfficiencyHistogram, ParamSet, PenaltyTable, SpeedTable, SweepConfig};
use crate::scenarios::{plan_access, AccessDecision, CacheInsert, CacheTracker, ScenarioKind};

/// Per-run configuration. The sweep seed is the user-facing base seed; the
/// engine derives its streams from it and the scenario name, so factor
/// changes never shift the random sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub tier1: SiteId,
    pub slice_seconds: f64,
    pub duplicate_trace: bool,
    /// Transfer attempts before giving up on a source (then replica fallback).
    pub max_attempts: u32,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn new(scenario: ScenarioKind) -> Self {
        RunConfig {
            scenario,
            tier1: SiteId::from("FNAL"),
            slice_seconds: 100.0,
            duplicate_trace: true,
            max_attempts: 3,
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferKind {
    /// Copy to the destination's disk; the owning job cannot compute until
    /// every stage-in has finished.
    StageIn,
    /// A remote read; paced by the job and never blocking it.
    Stream,
}

/// An in-flight file movement.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferTask {
    pub id: u64,
    pub lfn: String,
    pub size: f64,
    pub src: SiteId,
    pub dst: SiteId,
    pub kind: TransferKind,
    /// Owning job id.
    pub owner: u64,
    /// Index of the owner's segment this transfer feeds.
    pub segment: usize,
    pub bytes_done: f64,
    /// Failed attempts against the current source.
    pub attempts: u32,
    /// Sources already exhausted for this file (excluded by fallback).
    pub tried_sources: Vec<SiteId>,
    /// For streams: the job's consumption rate bound, bytes/second.
    pub consumption_cap: Option<f64>,
    /// Rate allocated for the current slice, bytes/second.
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferOutcome {
    InProgress,
    /// Reached full size and passed the link-quality draw.
    Completed,
    /// Reached full size but failed the draw; restarts from zero bytes.
    FailedAttempt,
    /// Failed its final permitted attempt.
    Exhausted,
}

/// Divides each directed link's bandwidth evenly among its active
/// transfers, bounded per transfer by the latency-dependent single-file
/// speed cap, and for streams additionally by the owning job's consumption
/// rate. Writes the resulting rate into every task.
pub fn allocate_bandwidth(topology: &Topology, speed: &SpeedTable, transfers: &mut [TransferTask]) {
    let mut counts: BTreeMap<(&SiteId, &SiteId), u32> = BTreeMap::new();
    for t in transfers.iter() {
        *counts.entry((&t.src, &t.dst)).or_insert(0) += 1;
    }
    let rates: Vec<f64> = transfers
        .iter()
        .map(|t| {
            let link = topology
                .link(&t.src, &t.dst)
                .expect("transfer uses a link validated at planning time");
            let n = counts[&(&t.src, &t.dst)] as f64;
            let rate = speed.max_speed_for(link.latency_ms).min(link.bandwidth / n);
            match t.consumption_cap {
                Some(cap) => rate.min(cap),
                None => rate,
            }
        })
        .collect();
    drop(counts);
    for (t, rate) in transfers.iter_mut().zip(rates) {
        t.rate = rate;
    }
}

/// Advances one transfer by one slice at its allocated rate. On reaching
/// full size the link-quality draw decides acceptance; a failure discards
/// the transferred bytes and restarts, and the final permitted failure
/// reports `Exhausted`. Returns the outcome and the bytes moved this slice.
pub fn advance_transfer(
    task: &mut TransferTask,
    slice_seconds: f64,
    quality: f64,
    max_attempts: u32,
    rng: &mut impl Rng,
) -> (TransferOutcome, f64) {
    let remaining = task.size - task.bytes_done;
    let step = task.rate * slice_seconds;
    let delta = if step >= remaining {
        task.bytes_done = task.size;
        remaining
    } else {
        task.bytes_done += step;
        step
    };
    if task.bytes_done < task.size {
        return (TransferOutcome::InProgress, delta);
    }
    if rng.gen::<f64>() < quality {
        (TransferOutcome::Completed, delta)
    } else {
        task.attempts += 1;
        task.bytes_done = 0.0;
        if task.attempts >= max_attempts {
            (TransferOutcome::Exhausted, delta)
        } else {
            (TransferOutcome::FailedAttempt, delta)
        }
    }
}

/// Picks a replacement source for an exhausted transfer: the replica with
/// the lowest latency to the destination among sites not yet tried, ties
/// broken by name. If the destination itself now holds a replica it is
/// returned directly (the transfer is moot).
pub fn fallback_replica(
    catalog: &FileCatalog,
    topology: &Topology,
    task: &TransferTask,
) -> Option<SiteId> {
    let rec = catalog.record(&task.lfn)?;
    if rec.locations.contains(&task.dst) {
        return Some(task.dst.clone());
    }
    rec.locations
        .iter()
        .filter(|s| !task.tried_sources.contains(s))
        .filter_map(|s| topology.latency_ms(s, &task.dst).map(|l| (l, s)))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(b.1)))
        .map(|(_, s)| s.clone())
}

#[derive(Debug, Clone, PartialEq)]
enum SegmentAccess {
    Local,
    Staged(SiteId),
    Stream(SiteId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StreamState {
    /// Local or staged segment: no stream will exist.
    NotNeeded,
    /// Stream segment whose task has not been spawned yet.
    Pending,
    Active,
    Delivered,
}

/// One input's share of a running job.
#[derive(Debug, Clone, PartialEq)]
struct Segment {
    lfn: Option<String>,
    cpu_share: f64,
    access: SegmentAccess,
    effective_efficiency: f64,
    wall_needed: f64,
    stream: StreamState,
}

/// A job occupying a core.
#[derive(Debug, Clone, PartialEq)]
struct RunningJob {
    job: Job,
    base_efficiency: f64,
    segments: Vec<Segment>,
    total_wall_needed: f64,
    pending_stage_ins: u32,
    /// Seconds on the core so far (slice granularity).
    wall_done: f64,
    /// Seconds spent blocked on stage-ins.
    stage_in_wait: f64,
}

impl RunningJob {
    fn compute_done(&self) -> f64 {
        self.wall_done - self.stage_in_wait
    }
}

enum StartOutcome {
    Started,
    FailedAtStart,
}

/// Full mutable state of one run plus its immutable inputs.
///
/// Construct via [`crate::ingest::assemble_state`] (or `new` for tests) and
/// consume with [`SimulationState::run`].
#[derive(Debug)]
pub struct SimulationState {
    topology: Topology,
    catalog: FileCatalog,
    scenario: ScenarioKind,
    penalty: PenaltyTable,
    speed: SpeedTable,
    histogram: EfficiencyHistogram,
    slice: f64,
    max_attempts: u32,
    site_order: Vec<SiteId>,
    queues: BTreeMap<SiteId, VecDeque<Job>>,
    free_cores: BTreeMap<SiteId, u32>,
    running: HashMap<u64, RunningJob>,
    /// Job start order; iteration always goes through this, never through
    /// the map, to keep the run deterministic.
    run_order: Vec<u64>,
    running_by_site: BTreeMap<SiteId, u64>,
    done_by_site: BTreeMap<SiteId, u64>,
    transfers: Vec<TransferTask>,
    next_task_id: u64,
    cache: CacheTracker,
    eff_rng: ChaCha8Rng,
    net_rng: ChaCha8Rng,
    slice_index: u64,
    total_jobs: u64,
    meta: RunMeta,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl SimulationState {
    pub fn new(
        topology: Topology,
        catalog: FileCatalog,
        jobs: Vec<Job>,
        params: ParamSet,
        config: &RunConfig,
    ) -> Self {
        assert!(config.slice_seconds > 0.0, "slice length must be positive");
        assert!(config.max_attempts >= 1, "at least one transfer attempt");

        // Cells of a sweep must share random streams across factor values,
        // so the streams derive from (base seed, scenario) only.
        let cell = splitmix64(config.sweep.rng_seed ^ fnv1a(config.scenario.name()));
        let eff_rng = ChaCha8Rng::seed_from_u64(splitmix64(cell.wrapping_add(1)));
        let net_rng = ChaCha8Rng::seed_from_u64(splitmix64(cell.wrapping_add(2)));

        let site_order: Vec<SiteId> = topology.site_ids().cloned().collect();
        let mut queues: BTreeMap<SiteId, VecDeque<Job>> = site_order
            .iter()
            .map(|s| (s.clone(), VecDeque::new()))
            .collect();
        let free_cores: BTreeMap<SiteId, u32> = topology
            .sites()
            .map(|s| (s.id.clone(), s.cores))
            .collect();
        let zeroes: BTreeMap<SiteId, u64> = site_order.iter().map(|s| (s.clone(), 0)).collect();

        let total_jobs = jobs.len() as u64;
        for job in jobs {
            queues
                .get_mut(&job.site)
                .expect("job sites validated at assembly")
                .push_back(job);
        }

        let meta = RunMeta {
            scenario: config.scenario,
            cpu_hit_factor: config.sweep.cpu_hit_factor,
            speed_factor: config.sweep.speed_factor,
            seed: config.sweep.rng_seed,
            slice_seconds: config.slice_seconds,
        };

        SimulationState {
            topology,
            catalog,
            scenario: config.scenario,
            penalty: params.penalty.with_scale(config.sweep.cpu_hit_factor),
            speed: params.speed.with_scale(config.sweep.speed_factor),
            histogram: params.histogram,
            slice: config.slice_seconds,
            max_attempts: config.max_attempts,
            site_order,
            queues,
            free_cores,
            running: HashMap::new(),
            run_order: Vec::new(),
            running_by_site: zeroes.clone(),
            done_by_site: zeroes,
            transfers: Vec::new(),
            next_task_id: 0,
            cache: CacheTracker::new(),
            eff_rng,
            net_rng,
            slice_index: 0,
            total_jobs,
            meta,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn catalog(&self) -> &FileCatalog {
        &self.catalog
    }

    pub fn clock(&self) -> f64 {
        self.slice_index as f64 * self.slice
    }

    fn queued_total(&self) -> u64 {
        self.queues.values().map(|q| q.len() as u64).sum()
    }

    /// Runs the simulation to completion and returns everything observed.
    pub fn run(&mut self) -> Result<MetricsLog> {
        let mut log = MetricsLog::new(self.meta.clone(), self.total_jobs);
        self.record_state(&mut log, 0.0, &BTreeMap::new());

        while self.queued_total() > 0 || !self.running.is_empty() {
            let started = self.start_phase(&mut log);
            // A slice can only change anything if a job is on a core or a
            // transfer is in flight; completions this slice free cores for
            // the next one.
            let live = started > 0 || !self.running.is_empty() || !self.transfers.is_empty();
            allocate_bandwidth(&self.topology, &self.speed, &mut self.transfers);
            let blocked: BTreeSet<u64> = self
                .run_order
                .iter()
                .filter(|id| {
                    self.running
                        .get(id)
                        .is_some_and(|rj| rj.pending_stage_ins > 0)
                })
                .copied()
                .collect();
            let slice_bytes = self.advance_transfers_phase(&mut log);
            self.advance_jobs_phase(&blocked, &mut log);

            let clock = (self.slice_index + 1) as f64 * self.slice;
            self.record_state(&mut log, clock, &slice_bytes);
            self.slice_index += 1;

            if !live && self.queued_total() > 0 {
                return Err(Error::Stalled {
                    clock,
                    detail: format!("{} queued jobs can never start", self.queued_total()),
                });
            }
        }
        debug_assert!(self.transfers.is_empty(), "transfers outlived all jobs");
        Ok(log)
    }

    fn start_phase(&mut self, log: &mut MetricsLog) -> u64 {
        let mut started = 0;
        for site in self.site_order.clone() {
            loop {
                if self.free_cores[&site] == 0 {
                    break;
                }
                let Some(job) = self.queues.get_mut(&site).and_then(|q| q.pop_front()) else {
                    break;
                };
                match self.start_job(job, log) {
                    StartOutcome::Started => started += 1,
                    StartOutcome::FailedAtStart => {}
                }
            }
        }
        started
    }

    /// Samples the job's base efficiency, plans data access for each input,
    /// splits CPU demand across inputs by size, creates stage-in transfers,
    /// and occupies a core. A job with an unreachable input fails here
    /// without occupying anything.
    fn start_job(&mut self, job: Job, log: &mut MetricsLog) -> StartOutcome {
        let base = self
            .histogram
            .sample_efficiency(job.cpu_seconds, &mut self.eff_rng);

        let plan = match plan_access(self.scenario, &self.topology, &self.catalog, &job) {
            Ok(plan) => plan,
            Err(_) => {
                *self.done_by_site.get_mut(&job.site).unwrap() += 1;
                log.jobs.push(JobRecord {
                    job_id: job.id,
                    site: job.site.clone(),
                    cpu_seconds: job.cpu_seconds,
                    base_efficiency: base,
                    realized_efficiency: 0.0,
                    wall_clock: 0.0,
                    stage_in_wait: 0.0,
                    status: JobStatus::Failed,
                });
                return StartOutcome::FailedAtStart;
            }
        };

        let mut segments = Vec::new();
        let mut pending_stage_ins = 0;
        if job.inputs.is_empty() {
            segments.push(Segment {
                lfn: None,
                cpu_share: job.cpu_seconds,
                access: SegmentAccess::Local,
                effective_efficiency: base,
                wall_needed: job.cpu_seconds / base,
                stream: StreamState::NotNeeded,
            });
        } else {
            let sizes: Vec<f64> = job
                .inputs
                .iter()
                .map(|lfn| self.catalog.record(lfn).expect("planned input exists").size as f64)
                .collect();
            let total_size: f64 = sizes.iter().sum();
            for (i, lfn) in job.inputs.iter().enumerate() {
                let cpu_share = job.cpu_seconds * sizes[i] / total_size;
                let (access, eff, stream) = match &plan.decisions[i] {
                    AccessDecision::Local => {
                        if self.scenario.caches_stage_ins() {
                            self.cache.touch(&job.site, lfn, self.slice_index);
                        }
                        (SegmentAccess::Local, base, StreamState::NotNeeded)
                    }
                    AccessDecision::StageIn(src) => {
                        pending_stage_ins += 1;
                        self.transfers.push(TransferTask {
                            id: self.next_task_id,
                            lfn: lfn.clone(),
                            size: sizes[i],
                            src: src.clone(),
                            dst: job.site.clone(),
                            kind: TransferKind::StageIn,
                            owner: job.id,
                            segment: i,
                            bytes_done: 0.0,
                            attempts: 0,
                            tried_sources: Vec::new(),
                            consumption_cap: None,
                            rate: 0.0,
                        });
                        self.next_task_id += 1;
                        (SegmentAccess::Staged(src.clone()), base, StreamState::NotNeeded)
                    }
                    AccessDecision::Stream(src) => {
                        let latency = self
                            .topology
                            .latency_ms(src, &job.site)
                            .expect("plan guarantees a link to the source");
                        let eff = base * (1.0 - self.penalty.penalty_for(latency));
                        (
                            SegmentAccess::Stream(src.clone()),
                            eff,
                            StreamState::Pending,
                        )
                    }
                };
                segments.push(Segment {
                    lfn: Some(lfn.clone()),
                    cpu_share,
                    access,
                    effective_efficiency: eff,
                    wall_needed: cpu_share / eff,
                    stream,
                });
            }
        }

        let total_wall_needed = segments.iter().map(|s| s.wall_needed).sum();
        let mut running_job = RunningJob {
            job,
            base_efficiency: base,
            segments,
            total_wall_needed,
            pending_stage_ins,
            wall_done: 0.0,
            stage_in_wait: 0.0,
        };
        if pending_stage_ins == 0 {
            self.spawn_due_streams(&mut running_job);
        }

        let site = running_job.job.site.clone();
        *self.free_cores.get_mut(&site).unwrap() -= 1;
        *self.running_by_site.get_mut(&site).unwrap() += 1;
        self.run_order.push(running_job.job.id);
        self.running.insert(running_job.job.id, running_job);
        StartOutcome::Started
    }

    /// Creates stream tasks for every pending stream segment the job has
    /// started reading (segment start offset at or below compute progress).
    fn spawn_due_streams(&mut self, rj: &mut RunningJob) {
        let compute_done = rj.compute_done();
        let mut offset = 0.0;
        for (i, seg) in rj.segments.iter_mut().enumerate() {
            let begun = offset <= compute_done;
            offset += seg.wall_needed;
            if !begun {
                break;
            }
            if seg.stream != StreamState::Pending {
                continue;
            }
            let SegmentAccess::Stream(src) = &seg.access else {
                continue;
            };
            let lfn = seg.lfn.clone().expect("stream segments carry an lfn");
            let size = self
                .catalog
                .record(&lfn)
                .expect("planned input exists")
                .size as f64;
            self.transfers.push(TransferTask {
                id: self.next_task_id,
                lfn,
                size,
                src: src.clone(),
                dst: rj.job.site.clone(),
                kind: TransferKind::Stream,
                owner: rj.job.id,
                segment: i,
                bytes_done: 0.0,
                attempts: 0,
                tried_sources: Vec::new(),
                consumption_cap: Some(size / seg.wall_needed),
                rate: 0.0,
            });
            self.next_task_id += 1;
            seg.stream = StreamState::Active;
        }
    }

    /// Advances every transfer one slice and services the consequences:
    /// stage-in completions (cache inserts in the copy scenario), retry
    /// resets, source fallback after exhaustion, and job failure when no
    /// replica is left. Returns the bytes each link moved this slice.
    // Indexing keeps the borrow of `self.transfers` narrow enough to call
    // `&mut self` handlers inside the loop.
    #[allow(clippy::needless_range_loop)]
    fn advance_transfers_phase(
        &mut self,
        log: &mut MetricsLog,
    ) -> BTreeMap<(SiteId, SiteId), f64> {
        // Nested so the per-transfer accumulation never clones site names.
        let mut by_src: BTreeMap<SiteId, BTreeMap<SiteId, f64>> = BTreeMap::new();
        let mut keep: Vec<bool> = vec![true; self.transfers.len()];
        let mut new_tasks: Vec<TransferTask> = Vec::new();
        let mut failed_jobs: Vec<u64> = Vec::new();

        for idx in 0..self.transfers.len() {
            let quality = {
                let t = &self.transfers[idx];
                self.topology
                    .link(&t.src, &t.dst)
                    .expect("transfer uses a validated link")
                    .quality
            };
            let slice = self.slice;
            let max_attempts = self.max_attempts;
            let (outcome, delta) = advance_transfer(
                &mut self.transfers[idx],
                slice,
                quality,
                max_attempts,
                &mut self.net_rng,
            );
            if delta > 0.0 {
                let t = &self.transfers[idx];
                match by_src.get_mut(&t.src).and_then(|m| m.get_mut(&t.dst)) {
                    Some(bytes) => *bytes += delta,
                    None => {
                        by_src
                            .entry(t.src.clone())
                            .or_default()
                            .insert(t.dst.clone(), delta);
                    }
                }
            }
            if outcome == TransferOutcome::InProgress {
                continue;
            }
            let (src, dst, size) = {
                let t = &self.transfers[idx];
                (t.src.clone(), t.dst.clone(), t.size)
            };
            match outcome {
                TransferOutcome::InProgress => unreachable!(),
                TransferOutcome::Completed => {
                    account_attempt(log, &src, &dst, size);
                    self.complete_transfer(idx);
                    keep[idx] = false;
                }
                TransferOutcome::FailedAttempt => {
                    account_attempt(log, &src, &dst, size);
                }
                TransferOutcome::Exhausted => {
                    account_attempt(log, &src, &dst, size);
                    keep[idx] = false;
                    self.transfers[idx].tried_sources.push(src.clone());
                    let choice =
                        fallback_replica(&self.catalog, &self.topology, &self.transfers[idx]);
                    match choice {
                        Some(new_src) if new_src == dst => {
                            // A replica appeared at the destination while we
                            // were retrying; the transfer is moot.
                            self.complete_transfer(idx);
                        }
                        Some(new_src) => {
                            let (lfn, kind, owner, segment, tried) = {
                                let t = &self.transfers[idx];
                                (
                                    t.lfn.clone(),
                                    t.kind,
                                    t.owner,
                                    t.segment,
                                    t.tried_sources.clone(),
                                )
                            };
                            // The penalty follows the new source for streams.
                            let consumption_cap = if kind == TransferKind::Stream {
                                Some(self.reprice_stream_segment(owner, segment, &new_src))
                            } else {
                                if let Some(rj) = self.running.get_mut(&owner) {
                                    rj.segments[segment].access =
                                        SegmentAccess::Staged(new_src.clone());
                                }
                                None
                            };
                            new_tasks.push(TransferTask {
                                id: self.next_task_id,
                                lfn,
                                size,
                                src: new_src,
                                dst: dst.clone(),
                                kind,
                                owner,
                                segment,
                                bytes_done: 0.0,
                                attempts: 0,
                                tried_sources: tried,
                                consumption_cap,
                                rate: 0.0,
                            });
                            self.next_task_id += 1;
                        }
                        None => {
                            failed_jobs.push(self.transfers[idx].owner);
                        }
                    }
                }
            }
        }

        let mut it = keep.iter();
        self.transfers.retain(|_| *it.next().unwrap());
        self.transfers.append(&mut new_tasks);

        for owner in failed_jobs {
            self.fail_running_job(owner, log);
        }
        by_src
            .into_iter()
            .flat_map(|(src, m)| {
                m.into_iter()
                    .map(move |(dst, bytes)| ((src.clone(), dst), bytes))
            })
            .collect()
    }

    /// Re-evaluates a stream segment against a new source: new penalty, new
    /// wall time, new consumption cap (returned).
    fn reprice_stream_segment(&mut self, owner: u64, segment: usize, new_src: &SiteId) -> f64 {
        let size = {
            let rj = self.running.get(&owner).expect("stream owner is running");
            let lfn = rj.segments[segment]
                .lfn
                .as_ref()
                .expect("stream segments carry an lfn");
            self.catalog.record(lfn).expect("input exists").size as f64
        };
        let rj = self
            .running
            .get_mut(&owner)
            .expect("stream owner is running");
        let latency = self
            .topology
            .latency_ms(new_src, &rj.job.site)
            .expect("fallback chose a reachable source");
        let penalty = self.penalty.penalty_for(latency);
        let base = rj.base_efficiency;
        let seg = &mut rj.segments[segment];
        seg.access = SegmentAccess::Stream(new_src.clone());
        seg.effective_efficiency = base * (1.0 - penalty);
        let new_wall = seg.cpu_share / seg.effective_efficiency;
        rj.total_wall_needed += new_wall - seg.wall_needed;
        rj.segments[segment].wall_needed = new_wall;
        size / new_wall
    }

    /// Applies the effects of a finished transfer: stage-ins unblock their
    /// job and (in the copy scenario) cache a replica at the destination,
    /// falling back to a stream if the cache cannot make room; streams mark
    /// their segment delivered.
    fn complete_transfer(&mut self, idx: usize) {
        let (lfn, dst, owner, segment, kind, src) = {
            let t = &self.transfers[idx];
            (
                t.lfn.clone(),
                t.dst.clone(),
                t.owner,
                t.segment,
                t.kind,
                t.src.clone(),
            )
        };
        match kind {
            TransferKind::StageIn => {
                if self.scenario.caches_stage_ins() {
                    // The pinned set is only consulted when eviction is
                    // actually needed; building it walks every running job.
                    let size = self.catalog.record(&lfn).map_or(0, |r| r.size);
                    let capacity = self
                        .topology
                        .site(&dst)
                        .map_or(0, |s| s.disk_capacity);
                    let pinned = if self.catalog.used_bytes(&dst) + size > capacity {
                        self.pinned_lfns(&dst)
                    } else {
                        BTreeSet::new()
                    };
                    let outcome = self.cache.try_insert(
                        &mut self.catalog,
                        &self.topology,
                        &dst,
                        &lfn,
                        self.slice_index,
                        &|l| pinned.contains(l),
                    );
                    if outcome == CacheInsert::NoSpace {
                        // No room even after eviction: read remotely instead.
                        self.reprice_stream_segment(owner, segment, &src);
                        if let Some(rj) = self.running.get_mut(&owner) {
                            rj.segments[segment].stream = StreamState::Pending;
                        }
                    }
                }
                if let Some(rj) = self.running.get_mut(&owner) {
                    rj.pending_stage_ins -= 1;
                }
            }
            TransferKind::Stream => {
                if let Some(rj) = self.running.get_mut(&owner) {
                    rj.segments[segment].stream = StreamState::Delivered;
                }
            }
        }
    }

    /// Inputs of running jobs at `site`; these may not be evicted.
    fn pinned_lfns(&self, site: &SiteId) -> BTreeSet<String> {
        let mut pinned = BTreeSet::new();
        for rj in self.running.values() {
            if &rj.job.site == site {
                pinned.extend(rj.job.inputs.iter().cloned());
            }
        }
        pinned
    }

    fn advance_jobs_phase(&mut self, blocked: &BTreeSet<u64>, log: &mut MetricsLog) {
        let ids = self.run_order.clone();
        let mut completed = Vec::new();
        let mut spawn_streams = Vec::new();
        for id in ids {
            let Some(rj) = self.running.get_mut(&id) else {
                continue;
            };
            rj.wall_done += self.slice;
            if blocked.contains(&id) {
                rj.stage_in_wait += self.slice;
                continue;
            }
            if rj
                .segments
                .iter()
                .any(|s| s.stream == StreamState::Pending)
            {
                spawn_streams.push(id);
            }
            if rj.compute_done() >= rj.total_wall_needed {
                completed.push(id);
            }
        }
        for id in spawn_streams {
            let mut rj = self.running.remove(&id).expect("collected above");
            self.spawn_due_streams(&mut rj);
            self.running.insert(id, rj);
        }
        for id in completed {
            self.finalize_job(id, log);
        }
        self.compact_run_order();
    }

    fn finalize_job(&mut self, id: u64, log: &mut MetricsLog) {
        let rj = self.running.remove(&id).expect("completed job is running");
        let site = rj.job.site.clone();
        *self.free_cores.get_mut(&site).unwrap() += 1;
        *self.running_by_site.get_mut(&site).unwrap() -= 1;
        *self.done_by_site.get_mut(&site).unwrap() += 1;

        // Streams that have not finished (job is done reading) are dropped;
        // their partial bytes stay in the conservation ledger.
        cancel_tasks_of(&mut self.transfers, id, log);

        if self.scenario.caches_stage_ins() {
            for lfn in &rj.job.inputs {
                self.cache.touch(&site, lfn, self.slice_index);
            }
        }

        let wall_clock = rj.stage_in_wait + rj.total_wall_needed;
        log.jobs.push(JobRecord {
            job_id: rj.job.id,
            site,
            cpu_seconds: rj.job.cpu_seconds,
            base_efficiency: rj.base_efficiency,
            realized_efficiency: rj.job.cpu_seconds / wall_clock,
            wall_clock,
            stage_in_wait: rj.stage_in_wait,
            status: JobStatus::Done,
        });
    }

    fn fail_running_job(&mut self, id: u64, log: &mut MetricsLog) {
        let Some(rj) = self.running.remove(&id) else {
            return;
        };
        let site = rj.job.site.clone();
        *self.free_cores.get_mut(&site).unwrap() += 1;
        *self.running_by_site.get_mut(&site).unwrap() -= 1;
        *self.done_by_site.get_mut(&site).unwrap() += 1;

        cancel_tasks_of(&mut self.transfers, id, log);

        log.jobs.push(JobRecord {
            job_id: rj.job.id,
            site,
            cpu_seconds: rj.job.cpu_seconds,
            base_efficiency: rj.base_efficiency,
            realized_efficiency: 0.0,
            wall_clock: rj.wall_done,
            stage_in_wait: rj.stage_in_wait,
            status: JobStatus::Failed,
        });
    }

    fn compact_run_order(&mut self) {
        if self.run_order.len() > 1024 && self.run_order.len() > 2 * self.running.len() {
            let running = &self.running;
            self.run_order.retain(|id| running.contains_key(id));
        }
    }

    fn record_state(
        &self,
        log: &mut MetricsLog,
        clock: f64,
        slice_bytes: &BTreeMap<(SiteId, SiteId), f64>,
    ) {
        let states: Vec<(SiteId, u64, u64, u64)> = self
            .site_order
            .iter()
            .map(|site| {
                let queued = self.queues[site].len() as u64;
                let running = self.running_by_site[site];
                let done = self.done_by_site[site];
                debug_assert!(
                    running <= self.topology.site(site).unwrap().cores as u64,
                    "running jobs exceed cores at {site}"
                );
                (site.clone(), queued, running, done)
            })
            .collect();
        debug_assert_eq!(
            states.iter().map(|(_, q, r, d)| q + r + d).sum::<u64>(),
            self.total_jobs,
            "job conservation violated"
        );
        metrics::record_slice(log, clock, &states, slice_bytes);
    }
}

fn account_attempt(log: &mut MetricsLog, src: &SiteId, dst: &SiteId, bytes: f64) {
    let totals = log
        .link_totals
        .entry((src.clone(), dst.clone()))
        .or_default();
    totals.attempt_bytes += bytes;
    totals.attempts += 1;
}

fn cancel_tasks_of(transfers: &mut Vec<TransferTask>, owner: u64, log: &mut MetricsLog) {
    transfers.retain(|t| {
        if t.owner != owner {
            return true;
        }
        if t.bytes_done > 0.0 {
            log.link_totals
                .entry((t.src.clone(), t.dst.clone()))
                .or_default()
                .attempt_bytes += t.bytes_done;
        }
        false
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{self, CATALOG_HEADER, LINKS_HEADER, SITES_HEADER, TRACE_HEADER};
    use crate::metrics::JobStatus;
    use crate::params::default_cpu_edges;

    /// All histogram mass in column 0: the 0.01 floor makes every sampled
    /// base efficiency exactly 0.01, which keeps hand oracles exact.
    fn pinned_histogram() -> EfficiencyHistogram {
        let mut row = vec![0.0; 100];
        row[0] = 1.0;
        EfficiencyHistogram::new(default_cpu_edges(), vec![row; 10]).unwrap()
    }

    fn params() -> ParamSet {
        ParamSet::new(pinned_histogram())
    }

    fn csv(header: &str, rows: &[&str]) -> String {
        let mut out = String::from(header);
        out.push('\n');
        for r in rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    fn build(
        sites: &[&str],
        links: &[&str],
        catalog: &[&str],
        trace: &[&str],
        config: &RunConfig,
    ) -> SimulationState {
        ingest::assemble_from_strs(
            &csv(SITES_HEADER, sites),
            &csv(LINKS_HEADER, links),
            &csv(CATALOG_HEADER, catalog),
            &csv(TRACE_HEADER, trace),
            params(),
            config,
        )
        .unwrap()
    }

    fn single_run_config(scenario: ScenarioKind) -> RunConfig {
        let mut config = RunConfig::new(scenario);
        config.duplicate_trace = false;
        config
    }

    fn stage_task(src: &str, dst: &str, size: f64) -> TransferTask {
        TransferTask {
            id: 0,
            lfn: "/f".into(),
            size,
            src: SiteId::from(src),
            dst: SiteId::from(dst),
            kind: TransferKind::StageIn,
            owner: 0,
            segment: 0,
            bytes_done: 0.0,
            attempts: 0,
            tried_sources: Vec::new(),
            consumption_cap: None,
            rate: 0.0,
        }
    }

    fn two_site_topology(latency: f64) -> Topology {
        let site = |name: &str| crate::model::Site {
            id: SiteId::from(name),
            cores: 4,
            disk_capacity: u64::MAX / 2,
            internal_bandwidth: 0.0,
        };
        Topology::new(
            vec![site("FNAL"), site("UCSD")],
            vec![crate::model::Link {
                src: SiteId::from("FNAL"),
                dst: SiteId::from("UCSD"),
                bandwidth: 1e9,
                latency_ms: latency,
                quality: 1.0,
            }],
        )
    }

    #[test]
    fn bandwidth_per_file_cap_binds_before_fair_share() {
        // 1 GB/s link at 100 ms: cap 50 MB/s, fair share 250 MB/s.
        let topo = two_site_topology(100.0);
        let mut transfers: Vec<TransferTask> =
            (0..4).map(|_| stage_task("FNAL", "UCSD", 5e9)).collect();
        allocate_bandwidth(&topo, &SpeedTable::default(), &mut transfers);
        for t in &transfers {
            assert_eq!(t.rate, 5e7);
        }
    }

    #[test]
    fn bandwidth_fair_share_binds_on_fast_links() {
        // Latency 0 has a 10 GB/s per-file cap; the 1 GB/s link splits.
        let topo = two_site_topology(0.0);
        let mut transfers: Vec<TransferTask> =
            (0..2).map(|_| stage_task("FNAL", "UCSD", 5e9)).collect();
        allocate_bandwidth(&topo, &SpeedTable::default(), &mut transfers);
        for t in &transfers {
            assert_eq!(t.rate, 5e8);
        }
    }

    #[test]
    fn bandwidth_stream_is_paced_by_its_job() {
        let topo = two_site_topology(0.0);
        let mut transfers = vec![stage_task("FNAL", "UCSD", 5e9)];
        transfers[0].kind = TransferKind::Stream;
        transfers[0].consumption_cap = Some(1e7);
        allocate_bandwidth(&topo, &SpeedTable::default(), &mut transfers);
        assert_eq!(transfers[0].rate, 1e7);
    }

    #[test]
    fn transfer_completes_in_one_slice_on_clean_link() {
        let mut task = stage_task("FNAL", "UCSD", 5e9);
        task.rate = 5e7;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (outcome, delta) = advance_transfer(&mut task, 100.0, 1.0, 3, &mut rng);
        assert_eq!(outcome, TransferOutcome::Completed);
        assert_eq!(delta, 5e9);
        assert_eq!(task.bytes_done, 5e9);
    }

    #[test]
    fn transfer_retry_follows_the_quality_draws() {
        // Oracle: replay the same rng; success exactly when draw < quality.
        let quality = 0.5;
        let seed = 11;
        let mut oracle = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..3).map(|_| oracle.gen()).collect();

        let mut task = stage_task("FNAL", "UCSD", 1e9);
        task.rate = 1e9 / 100.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut outcomes = Vec::new();
        for _ in 0..3 {
            let (outcome, delta) = advance_transfer(&mut task, 100.0, quality, 3, &mut rng);
            assert_eq!(delta, 1e9, "full file re-sent on every attempt");
            outcomes.push(outcome);
            if outcome == TransferOutcome::Completed {
                break;
            }
            assert_eq!(task.bytes_done, 0.0, "failed attempt resets progress");
        }
        for (i, outcome) in outcomes.iter().enumerate() {
            let expected = if draws[i] < quality {
                TransferOutcome::Completed
            } else if i + 1 >= 3 {
                TransferOutcome::Exhausted
            } else {
                TransferOutcome::FailedAttempt
            };
            assert_eq!(*outcome, expected, "attempt {i} draw {}", draws[i]);
        }
    }

    #[test]
    fn transfer_exhausts_after_three_failures() {
        let mut task = stage_task("FNAL", "UCSD", 1e9);
        task.rate = 1e7;
        // Quality low enough that a success draw is effectively impossible.
        let quality = 1e-300;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut last = TransferOutcome::InProgress;
        let mut slices = 0;
        while last == TransferOutcome::InProgress || last == TransferOutcome::FailedAttempt {
            let (outcome, _) = advance_transfer(&mut task, 100.0, quality, 3, &mut rng);
            last = outcome;
            slices += 1;
            assert!(slices < 10_000);
        }
        assert_eq!(last, TransferOutcome::Exhausted);
        assert_eq!(task.attempts, 3);
    }

    #[test]
    fn fallback_picks_lowest_latency_then_name() {
        let site = |name: &str| crate::model::Site {
            id: SiteId::from(name),
            cores: 1,
            disk_capacity: u64::MAX / 2,
            internal_bandwidth: 0.0,
        };
        let link = |src: &str, dst: &str, latency: f64| crate::model::Link {
            src: SiteId::from(src),
            dst: SiteId::from(dst),
            bandwidth: 5e9,
            latency_ms: latency,
            quality: 1.0,
        };
        let topo = Topology::new(
            vec![site("FNAL"), site("Nebraska"), site("Wisconsin")],
            vec![
                link("FNAL", "Wisconsin", 20.0),
                link("Nebraska", "Wisconsin", 40.0),
            ],
        );
        let mut catalog = FileCatalog::new();
        catalog.insert_record(crate::model::FileRecord {
            lfn: "/f".into(),
            size: 10,
            locations: [SiteId::from("FNAL"), SiteId::from("Nebraska")].into(),
        });
        let mut task = stage_task("X", "Wisconsin", 10.0);
        assert_eq!(
            fallback_replica(&catalog, &topo, &task),
            Some(SiteId::from("FNAL"))
        );
        task.tried_sources.push(SiteId::from("FNAL"));
        assert_eq!(
            fallback_replica(&catalog, &topo, &task),
            Some(SiteId::from("Nebraska"))
        );
        task.tried_sources.push(SiteId::from("Nebraska"));
        assert_eq!(fallback_replica(&catalog, &topo, &task), None);

        // Latency tie resolves to the lexicographically smaller name.
        let tie = Topology::new(
            vec![site("Alpha"), site("Beta"), site("Dst")],
            vec![link("Alpha", "Dst", 40.0), link("Beta", "Dst", 40.0)],
        );
        let mut cat = FileCatalog::new();
        cat.insert_record(crate::model::FileRecord {
            lfn: "/f".into(),
            size: 10,
            locations: [SiteId::from("Beta"), SiteId::from("Alpha")].into(),
        });
        let task = stage_task("X", "Dst", 10.0);
        assert_eq!(fallback_replica(&cat, &tie, &task), Some(SiteId::from("Alpha")));
    }

    #[test]
    fn zero_jobs_logs_only_the_initial_sample() {
        let mut sim = build(
            &["FNAL,4,10,10", "UCSD,4,10,10", "MIT,4,10,10"],
            &[],
            &[],
            &[],
            &single_run_config(ScenarioKind::Preplaced),
        );
        let log = sim.run().unwrap();
        assert_eq!(log.num_slices(), 1);
        assert_eq!(log.clocks, vec![0.0]);
        assert_eq!(log.queue_samples.len(), 3);
        assert!(log.link_samples.is_empty());
        assert!(log.jobs.is_empty());
    }

    #[test]
    fn inputless_job_completes_at_the_next_slice_boundary() {
        // base efficiency pinned to 0.01; cpu 12.5 s -> wall 1250 s, which
        // rounds up to the 13th slice (clock 1300) with the exact wall
        // recorded.
        let mut sim = build(
            &["FNAL,4,10,10", "UCSD,4,10,10"],
            &[],
            &[],
            &["0,UCSD,12.5,0,"],
            &single_run_config(ScenarioKind::Preplaced),
        );
        let log = sim.run().unwrap();
        let expected_wall = 12.5 / 0.01;
        assert_eq!(log.jobs.len(), 1);
        let rec = &log.jobs[0];
        assert_eq!(rec.status, JobStatus::Done);
        assert_eq!(rec.base_efficiency, 0.01);
        assert_eq!(rec.wall_clock, expected_wall);
        assert_eq!(rec.stage_in_wait, 0.0);
        assert_eq!(rec.realized_efficiency, 12.5 / expected_wall);
        assert_eq!(*log.clocks.last().unwrap(), 1300.0);
        assert!(log.link_samples.is_empty());
    }

    #[test]
    fn local_inputs_run_at_base_efficiency_with_no_transfers() {
        let mut sim = build(
            &["FNAL,4,10,10", "UCSD,4,10,10"],
            &["FNAL,UCSD,1,100,1.0"],
            &["/store/a,1000000000,UCSD"],
            &["0,UCSD,10,0,/store/a"],
            &single_run_config(ScenarioKind::Preplaced),
        );
        let log = sim.run().unwrap();
        let rec = &log.jobs[0];
        assert_eq!(rec.wall_clock, 10.0 / 0.01);
        assert!(log.link_samples.is_empty());
        assert!(log.link_totals.is_empty());
    }

    #[test]
    fn streamed_input_takes_the_latency_penalty() {
        // FNAL -> UCSD at 100 ms: 20% penalty; effective = 0.01 * 0.8.
        let mut sim = build(
            &["FNAL,4,10,10", "UCSD,4,10,10"],
            &["FNAL,UCSD,1,100,1.0"],
            &["/store/a,4000000000,FNAL"],
            &["0,UCSD,0.8,0,/store/a"],
            &single_run_config(ScenarioKind::Remote),
        );
        let log = sim.run().unwrap();
        let rec = &log.jobs[0];
        let eff = 0.01 * (1.0 - 0.2);
        assert_eq!(rec.wall_clock, 0.8 / eff);
        assert_eq!(rec.stage_in_wait, 0.0);
        // The stream moved the whole file over the link.
        let total: f64 = log
            .link_samples
            .iter()
            .map(|s| {
                assert_eq!(s.src.as_str(), "FNAL");
                assert_eq!(s.dst.as_str(), "UCSD");
                s.bytes
            })
            .sum();
        assert!((total - 4e9).abs() < 1.0, "stream delivered {total}");
    }

    #[test]
    fn cpu_is_shared_across_inputs_by_size() {
        // 1 GB local + 3 GB streamed, cpu 4000 s: shares 1000 s and 3000 s.
        let mut sim = build(
            &["FNAL,4,10,10", "UCSD,4,10,10"],
            &["FNAL,UCSD,1,100,1.0"],
            &[
                "/store/local,1000000000,UCSD",
                "/store/far,3000000000,FNAL",
            ],
            &["0,UCSD,4000,0,/store/local;/store/far"],
            &single_run_config(ScenarioKind::Preplaced),
        );
        let before = sim.catalog().clone();
        let log = sim.run().unwrap();
        let rec = &log.jobs[0];
        let expected = 1000.0 / 0.01 + 3000.0 / (0.01 * (1.0 - 0.2));
        assert_eq!(rec.wall_clock, expected);
        // Preplaced streams never create replicas.
        assert_eq!(sim.catalog(), &before);
    }

    #[test]
    fn stage_in_blocks_compute_and_adds_to_wall_clock() {
        // 15 GB at the 50 MB/s cap = 300 s of stage-in, then 1000 s compute.
        let mut sim = build(
            &["FNAL,4,100,10", "UCSD,4,100,10"],
            &["FNAL,UCSD,1,100,1.0"],
            &["/store/a,15000000000,FNAL"],
            &["0,UCSD,10,0,/store/a"],
            &single_run_config(ScenarioKind::Copy),
        );
        let log = sim.run().unwrap();
        let rec = &log.jobs[0];
        assert_eq!(rec.stage_in_wait, 300.0);
        assert_eq!(rec.wall_clock, 300.0 + 1000.0);
        assert_eq!(*log.clocks.last().unwrap(), 1300.0);
        // The staged copy is cached at the destination.
        assert!(sim
            .catalog()
            .record("/store/a")
            .unwrap()
            .locations
            .contains(&SiteId::from("UCSD")));
        let totals = &log.link_totals[&(SiteId::from("FNAL"), SiteId::from("UCSD"))];
        assert_eq!(totals.attempts, 1);
        assert_eq!(totals.bytes, 1.5e10);
        assert_eq!(totals.attempt_bytes, 1.5e10);
    }

    #[test]
    fn bad_link_forces_retries_that_resend_the_file() {
        // Quality 0.5 on the stage-in link; deterministic per seed. The
        // conservation ledger must show attempts * size on the link.
        let mut config = single_run_config(ScenarioKind::Copy);
        config.sweep.rng_seed = 3;
        let mut sim = build(
            &["FNAL,4,100,10", "UCSD,4,100,10"],
            &["FNAL,UCSD,1,100,0.5"],
            &["/store/a,5000000000,FNAL"],
            &["0,UCSD,10,0,/store/a"],
            &config,
        );
        let log = sim.run().unwrap();
        let rec = &log.jobs[0];
        assert_eq!(rec.status, JobStatus::Done);
        let totals = &log.link_totals[&(SiteId::from("FNAL"), SiteId::from("UCSD"))];
        assert!(totals.attempts >= 1);
        assert_eq!(totals.bytes, totals.attempts as f64 * 5e9);
        assert_eq!(totals.attempt_bytes, totals.bytes);
        // Each attempt spent a slice (100 s at 50 MB/s), all of it waited out.
        assert_eq!(rec.stage_in_wait, totals.attempts as f64 * 100.0);
    }

    #[test]
    fn exhausted_transfer_falls_back_to_the_next_replica() {
        // The copy rewrite puts all data at FNAL, so the only alternative
        // replica is a cache made during the run: one UCSD job caches the
        // file, then a Wisconsin job exhausts its bad FNAL link and falls
        // back to the UCSD copy.
        let mut sim = build(
            &["FNAL,4,100,10", "UCSD,4,100,10", "Wisconsin,4,100,10"],
            &[
                "FNAL,UCSD,1,40,1.0",
                "FNAL,Wisconsin,1,20,0.000000000000000000001",
                "UCSD,Wisconsin,1,70,1.0",
            ],
            &["/store/a,5000000000,FNAL"],
            &["0,UCSD,10,0,/store/a", "1,Wisconsin,10,0,/store/a"],
            &single_run_config(ScenarioKind::Copy),
        );
        let log = sim.run().unwrap();
        assert!(log.jobs.iter().all(|r| r.status == JobStatus::Done));
        // Three full (discarded) copies over the bad link, then one good
        // one from the cache.
        let bad = &log.link_totals[&(SiteId::from("FNAL"), SiteId::from("Wisconsin"))];
        assert_eq!(bad.attempts, 3);
        assert_eq!(bad.bytes, 3.0 * 5e9);
        let fallback = &log.link_totals[&(SiteId::from("UCSD"), SiteId::from("Wisconsin"))];
        assert_eq!(fallback.attempts, 1);
        assert_eq!(fallback.bytes, 5e9);
        // Both caches exist afterwards.
        let locations = &sim.catalog().record("/store/a").unwrap().locations;
        assert!(locations.contains(&SiteId::from("UCSD")));
        assert!(locations.contains(&SiteId::from("Wisconsin")));
    }

    #[test]
    fn job_fails_when_no_replica_is_left() {
        let mut sim = build(
            &["FNAL,4,100,10", "UCSD,4,100,10"],
            &["FNAL,UCSD,1,40,0.000000000000000000001"],
            &["/store/a,5000000000,FNAL"],
            &["0,UCSD,10,0,/store/a", "1,UCSD,10,0,"],
            &single_run_config(ScenarioKind::Copy),
        );
        let log = sim.run().unwrap();
        let failed: Vec<_> = log
            .jobs
            .iter()
            .filter(|r| r.status == JobStatus::Failed)
            .collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].job_id, 0);
        assert_eq!(failed[0].realized_efficiency, 0.0);
        // The healthy job still completed and counts as done.
        assert_eq!(
            log.jobs.iter().filter(|r| r.status == JobStatus::Done).count(),
            1
        );
        // Conservation holds at the last slice: everything is done.
        let last_clock = *log.clocks.last().unwrap();
        let (q, r, d) = log
            .queue_samples
            .iter()
            .filter(|s| s.clock == last_clock)
            .fold((0, 0, 0), |acc, s| {
                (acc.0 + s.queued, acc.1 + s.running, acc.2 + s.done)
            });
        assert_eq!((q, r, d), (0, 0, 2));
    }

    #[test]
    fn unreachable_input_fails_the_job_at_start() {
        // No link from FNAL to UCSD at all.
        let mut sim = build(
            &["FNAL,4,100,10", "UCSD,4,100,10"],
            &[],
            &["/store/a,5000000000,FNAL"],
            &["0,UCSD,10,0,/store/a"],
            &single_run_config(ScenarioKind::Remote),
        );
        let log = sim.run().unwrap();
        assert_eq!(log.jobs.len(), 1);
        assert_eq!(log.jobs[0].status, JobStatus::Failed);
        assert_eq!(log.jobs[0].wall_clock, 0.0);
    }

    #[test]
    fn queue_drains_in_fifo_order_within_core_limits() {
        // 1 core, three 100 s jobs (wall 10000 s each at eff 0.01).
        let mut sim = build(
            &["FNAL,4,10,10", "UCSD,1,10,10"],
            &[],
            &[],
            &["0,UCSD,1,0,", "1,UCSD,1,0,", "2,UCSD,1,0,"],
            &single_run_config(ScenarioKind::Preplaced),
        );
        let log = sim.run().unwrap();
        // Each job takes exactly one slice (wall 100 s); they serialize.
        assert_eq!(*log.clocks.last().unwrap(), 300.0);
        for s in log.queue_samples.iter().filter(|s| s.site.as_str() == "UCSD") {
            assert!(s.running <= 1, "core capacity exceeded: {s:?}");
        }
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let run = || {
            let mut config = single_run_config(ScenarioKind::Copy);
            config.sweep.rng_seed = 17;
            let mut sim = build(
                &["FNAL,4,100,10", "UCSD,2,100,10"],
                &["FNAL,UCSD,1,100,0.9"],
                &["/store/a,5000000000,FNAL", "/store/b,2000000000,FNAL"],
                &[
                    "0,UCSD,10,0,/store/a",
                    "1,UCSD,20,0,/store/b",
                    "2,FNAL,30,0,/store/a",
                ],
                &config,
            );
            sim.run().unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn remote_run_never_touches_the_catalog() {
        let mut sim = build(
            &["FNAL,4,100,10", "UCSD,2,100,10"],
            &["FNAL,UCSD,1,100,1.0"],
            &["/store/a,5000000000,FNAL", "/store/b,2000000000,FNAL"],
            &["0,UCSD,10,0,/store/a", "1,UCSD,20,0,/store/b"],
            &single_run_config(ScenarioKind::Remote),
        );
        let before = sim.catalog().clone();
        let log = sim.run().unwrap();
        assert_eq!(sim.catalog(), &before);
        assert!(log.jobs.iter().all(|r| r.status == JobStatus::Done));
    }

    #[test]
    fn stalled_configuration_is_impossible_by_construction() {
        // Start failures drain the queue instead of deadlocking: a job with
        // an unreachable input fails at start and the run terminates.
        let mut sim = build(
            &["FNAL,1,100,10", "UCSD,1,100,10"],
            &[],
            &["/store/a,1000,FNAL"],
            &["0,UCSD,10,0,/store/a"],
            &single_run_config(ScenarioKind::Remote),
        );
        let log = sim.run().unwrap();
        assert_eq!(log.jobs[0].status, JobStatus::Failed);
    }
}
