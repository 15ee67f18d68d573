//! Generates the bundled synthetic fixture set under `fixtures/`:
//! the nine-site US topology with its latency matrix, a ~2,000-file
//! replica catalog, a ~10,000-job trace, and the efficiency histogram.
//!
//! Deterministic: same seed, same files. Run from the workspace root:
//!
//! ```text
//! cargo run -p gridsim-core --example gen_fixtures -- fixtures
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use gridsim_core::ingest::{self, Trace};
use gridsim_core::model::{FileCatalog, FileRecord, Job, Link, Site, SiteId};
use gridsim_core::params::{default_cpu_edges, EfficiencyHistogram, CPU_BINS, EFF_BINS};

const SEED: u64 = 20150217;

/// name, cores, disk TB. Three large Tier-2s carry most of the compute.
const SITES: [(&str, u32, f64); 9] = [
    ("FNAL", 1200, 20000.0),
    ("Caltech", 2200, 2000.0),
    ("Florida", 2200, 2000.0),
    ("MIT", 150, 2000.0),
    ("Nebraska", 150, 2000.0),
    ("Purdue", 150, 2000.0),
    ("UCSD", 2200, 2000.0),
    ("Vanderbilt", 150, 2000.0),
    ("Wisconsin", 150, 2000.0),
];

/// Directed latency matrix, milliseconds, row = source, column = destination.
const LATENCY_ORDER: [&str; 9] = [
    "Purdue",
    "UCSD",
    "Nebraska",
    "Wisconsin",
    "Vanderbilt",
    "Caltech",
    "Florida",
    "MIT",
    "FNAL",
];
const LATENCY_MS: [[f64; 9]; 9] = [
    [0.0, 100.0, 100.0, 60.0, 40.0, 100.0, 40.0, 40.0, 70.0],
    [100.0, 0.0, 70.0, 100.0, 100.0, 20.0, 100.0, 100.0, 100.0],
    [70.0, 60.0, 0.0, 40.0, 70.0, 40.0, 70.0, 70.0, 40.0],
    [40.0, 70.0, 40.0, 0.0, 60.0, 100.0, 70.0, 40.0, 20.0],
    [40.0, 100.0, 70.0, 70.0, 0.0, 100.0, 40.0, 20.0, 60.0],
    [100.0, 20.0, 60.0, 100.0, 100.0, 0.0, 100.0, 100.0, 100.0],
    [40.0, 100.0, 70.0, 60.0, 40.0, 100.0, 0.0, 60.0, 70.0],
    [40.0, 100.0, 100.0, 70.0, 40.0, 100.0, 40.0, 0.0, 70.0],
    [40.0, 100.0, 40.0, 20.0, 70.0, 100.0, 70.0, 60.0, 0.0],
];

const NUM_FILES: usize = 2000;
const NUM_JOBS: usize = 10000;

fn main() {
    let out_dir: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "fixtures".to_owned())
        .into();
    std::fs::create_dir_all(&out_dir).expect("create output directory");

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let sites: Vec<Site> = SITES
        .iter()
        .map(|(name, cores, disk_tb)| Site {
            id: SiteId::from(*name),
            cores: *cores,
            disk_capacity: (*disk_tb * 1e12) as u64,
            internal_bandwidth: 100.0 * 1e9 / 8.0,
        })
        .collect();

    let links = make_links();

    // Home site per file, weighted by cores; sizes lognormal around ~2 GB.
    let site_weights: Vec<f64> = SITES.iter().map(|(_, cores, _)| *cores as f64).collect();
    let mut file_sizes = Vec::with_capacity(NUM_FILES);
    let mut file_home: Vec<usize> = Vec::with_capacity(NUM_FILES);
    let mut home_files: Vec<Vec<usize>> = vec![Vec::new(); SITES.len()];
    for f in 0..NUM_FILES {
        let size = lognormal(&mut rng, 2.1e9, 0.7).clamp(2e8, 9e9) as u64;
        let home = weighted_index(&mut rng, &site_weights);
        file_sizes.push(size);
        file_home.push(home);
        home_files[home].push(f);
    }

    // Jobs: site weighted by cores, CPU demand lognormal, inputs drawn
    // Zipf-style from the site's home files with a 15% chance of reaching
    // into the global pool (the source of Tier-2 to Tier-2 traffic in the
    // copy scenario).
    let mut jobs = Vec::with_capacity(NUM_JOBS);
    let mut draws: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); NUM_FILES];
    for id in 0..NUM_JOBS {
        let site_idx = weighted_index(&mut rng, &site_weights);
        let cpu = (lognormal(&mut rng, 1800.0, 0.9).clamp(120.0, 20000.0) * 10.0).round() / 10.0;
        let n_inputs = match rng.gen::<f64>() {
            x if x < 0.02 => 0,
            x if x < 0.77 => 1,
            _ => 2,
        };
        let mut inputs = Vec::with_capacity(n_inputs);
        let mut chosen = BTreeSet::new();
        for _ in 0..n_inputs {
            let f = if rng.gen::<f64>() < 0.15 || home_files[site_idx].is_empty() {
                zipf_pick(&mut rng, NUM_FILES)
            } else {
                let list = &home_files[site_idx];
                list[zipf_pick(&mut rng, list.len())]
            };
            if chosen.insert(f) {
                draws[f].insert(site_idx);
                inputs.push(format!("/store/data/{f:05}"));
            }
        }
        jobs.push(Job {
            id: id as u64,
            site: SiteId::from(SITES[site_idx].0),
            cpu_seconds: cpu,
            inputs,
            read_fraction: 1.0,
            original_walltime: (cpu / 0.85).round(),
        });
    }

    // Catalog: every file lives at its home site, at FNAL (custodial copy),
    // and at every site that drew it, so the preplaced scenario reads
    // everything locally.
    let mut catalog = FileCatalog::new();
    for f in 0..NUM_FILES {
        let mut locations: BTreeSet<SiteId> = BTreeSet::new();
        locations.insert(SiteId::from(SITES[file_home[f]].0));
        locations.insert(SiteId::from("FNAL"));
        for &s in &draws[f] {
            locations.insert(SiteId::from(SITES[s].0));
        }
        catalog.insert_record(FileRecord {
            lfn: format!("/store/data/{f:05}"),
            size: file_sizes[f],
            locations,
        });
    }

    let trace = Trace {
        jobs,
        size_hints: Default::default(),
    };

    write(&out_dir, "sites.csv", &ingest::sites_to_csv(&sites));
    write(&out_dir, "links.csv", &ingest::links_to_csv(&links));
    write(&out_dir, "catalog.csv", &ingest::catalog_to_csv(&catalog));
    write(&out_dir, "trace.csv", &ingest::trace_to_csv(&trace));
    write(&out_dir, "histogram.csv", &make_histogram().to_csv());

    let total_bytes: u64 = file_sizes.iter().sum();
    println!(
        "wrote {} sites, {} links, {} files ({:.1} TB), {} jobs to {}",
        sites.len(),
        links.len(),
        NUM_FILES,
        total_bytes as f64 / 1e12,
        NUM_JOBS,
        out_dir.display()
    );
}

fn make_links() -> Vec<Link> {
    let mut links = Vec::new();
    for (i, src) in LATENCY_ORDER.iter().enumerate() {
        for (j, dst) in LATENCY_ORDER.iter().enumerate() {
            if i == j {
                continue;
            }
            // Tier-1 links run at the clamp ceiling; Tier-2 pairs at 2 GB/s.
            let gbps = if *src == "FNAL" || *dst == "FNAL" {
                10.0
            } else {
                2.0
            };
            // Two imperfect Tier-2 paths exercise the retry machinery.
            let quality = match (*src, *dst) {
                ("UCSD", "Caltech") => 0.9,
                ("Nebraska", "Wisconsin") => 0.95,
                _ => 1.0,
            };
            links.push(Link {
                src: SiteId::from(*src),
                dst: SiteId::from(*dst),
                bandwidth: gbps * 1e9,
                latency_ms: LATENCY_MS[i][j],
                quality,
            });
        }
    }
    links
}

/// Efficiency distribution: longer jobs run cleaner. Row means climb from
/// 0.70 to 0.88 with a sigma of 0.06, discretized into integer counts.
fn make_histogram() -> EfficiencyHistogram {
    let mut weights = Vec::with_capacity(CPU_BINS);
    for row in 0..CPU_BINS {
        let mean = 0.70 + 0.18 * row as f64 / (CPU_BINS - 1) as f64;
        let sigma = 0.06;
        let mut counts = vec![0.0; EFF_BINS];
        for (col, w) in counts.iter_mut().enumerate() {
            let eff = (col as f64 + 0.5) / EFF_BINS as f64;
            if eff < 0.35 {
                continue;
            }
            let z = (eff - mean) / sigma;
            *w = (1000.0 * (-0.5 * z * z).exp()).round();
        }
        weights.push(counts);
    }
    EfficiencyHistogram::new(default_cpu_edges(), weights).expect("valid histogram")
}

fn lognormal(rng: &mut impl Rng, median: f64, sigma: f64) -> f64 {
    // Box-Muller from two uniforms.
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    median * (sigma * z).exp()
}

fn weighted_index(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        target -= w;
        if target <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Zipf-ish rank pick over `n` items with exponent 0.8.
fn zipf_pick(rng: &mut impl Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    // Inverse-CDF on the continuous approximation: ranks near 0 dominate.
    let u: f64 = rng.gen::<f64>().max(1e-12);
    let x = u.powf(1.0 / (1.0 - 0.8)) * n as f64;
    (x as usize).min(n - 1)
}

fn write(dir: &std::path::Path, name: &str, content: &str) {
    std::fs::write(dir.join(name), content).expect("write fixture file");
}
