//! Simulation parameter models: the latency -> CPU-efficiency penalty
//! table, the latency -> max single-file transfer speed table, and the
//! binned efficiency histogram sampled per job.
//!
//! Both tables are step functions of latency with built-in defaults;
//! individual rows can be overridden from a small `key=value` config file
//! (`penalty.1ms=0.05`, `speed.50ms=100MBps`). A multiplicative sweep
//! factor scales either table for the half/normal/double parameter grid.

use rand::Rng;

use crate::error::{Error, Result};

/// Scaled penalties are capped here so a doubled penalty can never reach 1
/// (which would mean an infinite wall clock).
pub const PENALTY_CAP: f64 = 0.95;

/// Number of efficiency columns (0.01-wide bins over [0, 1]).
pub const EFF_BINS: usize = 100;
/// Number of CPU-time bins.
pub const CPU_BINS: usize = 10;

/// CPU-efficiency penalty as a step function of link latency.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTable {
    /// (min latency ms, penalty fraction), strictly increasing in latency.
    rows: Vec<(f64, f64)>,
    /// Multiplicative sweep factor applied to every nonzero-latency lookup.
    pub scale: f64,
}

impl Default for PenaltyTable {
    fn default() -> Self {
        PenaltyTable {
            rows: vec![(0.0, 0.0), (1.0, 0.05), (50.0, 0.20)],
            scale: 1.0,
        }
    }
}

impl PenaltyTable {
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    /// Penalty fraction for a read over a link of the given latency.
    ///
    /// The base value comes from the highest row whose threshold is at or
    /// below `latency_ms`, scaled by the sweep factor and capped at
    /// [`PENALTY_CAP`]. Latency 0 (a local read) is exempt from scaling so
    /// sweeping the penalty never touches same-site access.
    pub fn penalty_for(&self, latency_ms: f64) -> f64 {
        let base = step_lookup(&self.rows, latency_ms);
        if latency_ms == 0.0 {
            base.min(PENALTY_CAP)
        } else {
            (base * self.scale).clamp(0.0, PENALTY_CAP)
        }
    }

    fn set_row(&mut self, latency_ms: f64, penalty: f64) -> Result<()> {
        if !(0.0..1.0).contains(&penalty) {
            return Err(Error::Invalid(format!(
                "penalty must be in [0, 1), got {penalty}"
            )));
        }
        upsert_row(&mut self.rows, latency_ms, penalty);
        Ok(())
    }
}

/// Maximum single-file transfer speed as a step function of link latency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedTable {
    /// (min latency ms, bytes/second), latencies increasing, speeds decreasing.
    rows: Vec<(f64, f64)>,
    pub scale: f64,
}

impl Default for SpeedTable {
    fn default() -> Self {
        SpeedTable {
            rows: vec![(0.0, 1e10), (1.0, 1e9), (50.0, 1e8), (100.0, 5e7)],
            scale: 1.0,
        }
    }
}

impl SpeedTable {
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    /// Per-file speed cap in bytes/second for a link of the given latency,
    /// scaled by the sweep factor.
    pub fn max_speed_for(&self, latency_ms: f64) -> f64 {
        step_lookup(&self.rows, latency_ms) * self.scale
    }

    fn set_row(&mut self, latency_ms: f64, speed: f64) -> Result<()> {
        if speed.is_nan() || speed <= 0.0 {
            return Err(Error::Invalid(format!(
                "max speed must be > 0, got {speed}"
            )));
        }
        upsert_row(&mut self.rows, latency_ms, speed);
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        for pair in self.rows.windows(2) {
            if pair[1].1 >= pair[0].1 {
                return Err(Error::Invalid(format!(
                    "speed table must be strictly decreasing: {} B/s at {} ms vs {} B/s at {} ms",
                    pair[0].1, pair[0].0, pair[1].1, pair[1].0
                )));
            }
        }
        Ok(())
    }
}

fn step_lookup(rows: &[(f64, f64)], latency_ms: f64) -> f64 {
    rows.iter()
        .take_while(|(min, _)| *min <= latency_ms)
        .last()
        .map(|(_, v)| *v)
        .unwrap_or(0.0)
}

fn upsert_row(rows: &mut Vec<(f64, f64)>, latency_ms: f64, value: f64) {
    match rows.binary_search_by(|(min, _)| min.partial_cmp(&latency_ms).unwrap()) {
        Ok(i) => rows[i].1 = value,
        Err(i) => rows.insert(i, (latency_ms, value)),
    }
}

/// The half/normal/double sweep point plus the base RNG seed of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub cpu_hit_factor: f64,
    pub speed_factor: f64,
    pub rng_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            cpu_hit_factor: 1.0,
            speed_factor: 1.0,
            rng_seed: 42,
        }
    }
}

/// The factor values of the standard 3x3 sweep grid.
pub const SWEEP_FACTORS: [f64; 3] = [0.5, 1.0, 2.0];

/// Job CPU-efficiency distribution: 10 CPU-time bins x 100 efficiency
/// columns of non-negative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyHistogram {
    /// 11 ascending edges; first is 0, last is +inf.
    edges: Vec<f64>,
    weights: Vec<Vec<f64>>,
    /// Per-row cumulative weights, precomputed for sampling.
    cumulative: Vec<Vec<f64>>,
}

impl EfficiencyHistogram {
    pub fn new(edges: Vec<f64>, weights: Vec<Vec<f64>>) -> Result<Self> {
        if edges.len() != CPU_BINS + 1 {
            return Err(Error::Invalid(format!(
                "expected {} bin edges, got {}",
                CPU_BINS + 1,
                edges.len()
            )));
        }
        if edges[0] != 0.0 {
            return Err(Error::Invalid("first CPU bin edge must be 0".into()));
        }
        if !(edges[CPU_BINS].is_infinite() && edges[CPU_BINS] > 0.0) {
            return Err(Error::Invalid("last CPU bin edge must be inf".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1] || w[0].is_nan()) {
            return Err(Error::Invalid("CPU bin edges must be strictly ascending".into()));
        }
        if weights.len() != CPU_BINS {
            return Err(Error::Invalid(format!(
                "expected {CPU_BINS} weight rows, got {}",
                weights.len()
            )));
        }
        let mut cumulative = Vec::with_capacity(CPU_BINS);
        for (i, row) in weights.iter().enumerate() {
            if row.len() != EFF_BINS {
                return Err(Error::Invalid(format!(
                    "row {i}: expected {EFF_BINS} columns, got {}",
                    row.len()
                )));
            }
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Invalid(format!("row {i}: negative or non-finite weight")));
            }
            let mut acc = 0.0;
            let cum: Vec<f64> = row
                .iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect();
            if acc <= 0.0 {
                return Err(Error::Invalid(format!("row {i}: weights sum to zero")));
            }
            cumulative.push(cum);
        }
        Ok(EfficiencyHistogram {
            edges,
            weights,
            cumulative,
        })
    }

    /// Loads the histogram CSV: one line of 11 edges, then 10 rows of 100
    /// counts.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(idx + 1, format!("invalid number `{v}`")))
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        if rows.len() != CPU_BINS + 1 {
            return Err(Error::Invalid(format!(
                "histogram must have 1 edge line + {CPU_BINS} weight rows, found {} lines",
                rows.len()
            )));
        }
        let edges = rows.remove(0);
        Self::new(edges, rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let edges: Vec<String> = self.edges.iter().map(|e| e.to_string()).collect();
        out.push_str(&edges.join(","));
        out.push('\n');
        for row in &self.weights {
            let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    fn cpu_bin(&self, cpu_seconds: f64) -> usize {
        debug_assert!(cpu_seconds > 0.0);
        match self
            .edges
            .iter()
            .rposition(|e| *e <= cpu_seconds)
        {
            Some(i) => i.min(CPU_BINS - 1),
            None => 0,
        }
    }

    /// Draws a base CPU efficiency for a job of the given CPU demand:
    /// choose the CPU-time row, pick an efficiency column with probability
    /// proportional to its weight, then draw uniformly inside the 0.01-wide
    /// column. The result is floored at 0.01 so it is always in (0, 1].
    pub fn sample_efficiency(&self, cpu_seconds: f64, rng: &mut impl Rng) -> f64 {
        let row = self.cpu_bin(cpu_seconds);
        let cum = &self.cumulative[row];
        let total = *cum.last().expect("validated non-empty");
        let target = rng.gen::<f64>() * total;
        let col = cum.partition_point(|c| *c <= target).min(EFF_BINS - 1);
        let within: f64 = rng.gen();
        let eff = (col as f64 + within) / EFF_BINS as f64;
        eff.max(0.01)
    }
}

/// Default CPU-time bin edges for generated fixtures: 0, nine log-spaced
/// values from 60 s to 1e5 s, then +inf.
pub fn default_cpu_edges() -> Vec<f64> {
    let mut edges = vec![0.0];
    let (lo, hi) = (60.0_f64, 1e5_f64);
    for k in 0..=8 {
        edges.push(lo * (hi / lo).powf(k as f64 / 8.0));
    }
    edges.push(f64::INFINITY);
    edges
}

/// The three parameter models a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub penalty: PenaltyTable,
    pub speed: SpeedTable,
    pub histogram: EfficiencyHistogram,
}

impl ParamSet {
    pub fn new(histogram: EfficiencyHistogram) -> Self {
        ParamSet {
            penalty: PenaltyTable::default(),
            speed: SpeedTable::default(),
            histogram,
        }
    }

    /// Applies `key=value` table overrides. Keys are `penalty.<N>ms` with a
    /// fraction value, or `speed.<N>ms` with a speed in MB/s (an optional
    /// `MBps` suffix is accepted). `#` starts a comment.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, format!("expected key=value, got `{line}`")))?;
            let (table, latency) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| Error::parse(lineno, format!("expected table.<N>ms key, got `{key}`")))?;
            let latency_ms: f64 = latency
                .strip_suffix("ms")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| {
                    Error::parse(lineno, format!("expected latency like `50ms`, got `{latency}`"))
                })?;
            if latency_ms < 0.0 {
                return Err(Error::parse(lineno, "latency must be >= 0"));
            }
            let value = value.trim();
            match table.trim() {
                "penalty" => {
                    let penalty: f64 = value
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("invalid fraction `{value}`")))?;
                    self.penalty
                        .set_row(latency_ms, penalty)
                        .map_err(|e| Error::parse(lineno, e.to_string()))?;
                }
                "speed" => {
                    let mbps: f64 = value
                        .trim_end_matches("MBps")
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("invalid speed `{value}`")))?;
                    self.speed
                        .set_row(latency_ms, mbps * 1e6)
                        .map_err(|e| Error::parse(lineno, e.to_string()))?;
                }
                other => {
                    return Err(Error::parse(
                        lineno,
                        format!("unknown table `{other}` (expected penalty or speed)"),
                    ));
                }
            }
        }
        self.speed.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn penalty_matches_builtin_rows() {
        let t = PenaltyTable::default();
        assert_eq!(t.penalty_for(0.0), 0.0);
        assert_eq!(t.penalty_for(1.0), 0.05);
        assert_eq!(t.penalty_for(5.0), 0.05);
        assert_eq!(t.penalty_for(49.9), 0.05);
        assert_eq!(t.penalty_for(50.0), 0.20);
        assert_eq!(t.penalty_for(1000.0), 0.20);
    }

    #[test]
    fn penalty_scaling_and_cap() {
        let t = PenaltyTable::default().with_scale(2.0);
        assert_eq!(t.penalty_for(70.0), 0.40);
        assert_eq!(t.penalty_for(0.0), 0.0);
        let extreme = PenaltyTable::default().with_scale(100.0);
        assert_eq!(extreme.penalty_for(50.0), PENALTY_CAP);
        assert_eq!(extreme.penalty_for(0.0), 0.0);
    }

    #[test]
    fn speed_matches_builtin_rows() {
        let t = SpeedTable::default();
        assert_eq!(t.max_speed_for(0.0), 1e10);
        assert_eq!(t.max_speed_for(1.0), 1e9);
        assert_eq!(t.max_speed_for(49.0), 1e9);
        assert_eq!(t.max_speed_for(50.0), 1e8);
        assert_eq!(t.max_speed_for(100.0), 5e7);
        assert_eq!(t.max_speed_for(250.0), 5e7);
    }

    #[test]
    fn speed_scaling() {
        let t = SpeedTable::default().with_scale(0.5);
        assert_eq!(t.max_speed_for(60.0), 5e7);
        let t = SpeedTable::default().with_scale(2.0);
        assert_eq!(t.max_speed_for(100.0), 1e8);
    }

    fn degenerate_hist(col: usize) -> EfficiencyHistogram {
        let mut row = vec![0.0; EFF_BINS];
        row[col] = 1.0;
        EfficiencyHistogram::new(default_cpu_edges(), vec![row; CPU_BINS]).unwrap()
    }

    #[test]
    fn degenerate_histogram_samples_inside_its_column() {
        let hist = degenerate_hist(80);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let eff = hist.sample_efficiency(3600.0, &mut rng);
            assert!((0.80..0.81).contains(&eff), "eff {eff} outside column");
        }
    }

    #[test]
    fn column_zero_draws_floor_at_one_percent() {
        let hist = degenerate_hist(0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert_eq!(hist.sample_efficiency(10.0, &mut rng), 0.01);
        }
    }

    #[test]
    fn equal_weight_columns_split_half_and_half() {
        // Binomial oracle: n draws at p=0.5; the observed count must lie
        // within 3 sigma = 3*sqrt(n*p*(1-p)) of n/2.
        let mut row = vec![0.0; EFF_BINS];
        row[30] = 2.5;
        row[70] = 2.5;
        let hist = EfficiencyHistogram::new(default_cpu_edges(), vec![row; CPU_BINS]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let lows = (0..n)
            .filter(|_| hist.sample_efficiency(500.0, &mut rng) < 0.5)
            .count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!(
            (lows - n as f64 / 2.0).abs() <= 3.0 * sigma,
            "low-column count {lows} outside 3 sigma of {}",
            n / 2
        );
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let hist = degenerate_hist(55);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32)
                .map(|_| hist.sample_efficiency(1000.0, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn chi_square_matches_row_distribution() {
        // Independent oracle: chi-square goodness of fit over the nonzero
        // columns at significance 0.001, critical value from statrs.
        use statrs::distribution::{ChiSquared, ContinuousCDF};

        let mut row = vec![0.0; EFF_BINS];
        let cols = [(20usize, 1.0), (40, 2.0), (60, 3.0), (80, 4.0)];
        for (c, w) in cols {
            row[c] = w;
        }
        let hist = EfficiencyHistogram::new(default_cpu_edges(), vec![row; CPU_BINS]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let n = 20_000usize;
        let mut observed = [0u64; EFF_BINS];
        for _ in 0..n {
            let eff = hist.sample_efficiency(2000.0, &mut rng);
            let col = ((eff * EFF_BINS as f64).floor() as usize).min(EFF_BINS - 1);
            observed[col] += 1;
        }
        let total_w: f64 = cols.iter().map(|(_, w)| w).sum();
        let chi2: f64 = cols
            .iter()
            .map(|(c, w)| {
                let expected = n as f64 * w / total_w;
                let diff = observed[*c] as f64 - expected;
                diff * diff / expected
            })
            .sum();
        let misplaced: u64 = (0..EFF_BINS)
            .filter(|c| !cols.iter().any(|(k, _)| k == c))
            .map(|c| observed[c])
            .sum();
        assert_eq!(misplaced, 0, "draws landed outside the weighted columns");
        let critical = ChiSquared::new((cols.len() - 1) as f64)
            .unwrap()
            .inverse_cdf(0.999);
        assert!(
            chi2 < critical,
            "chi-square {chi2:.2} exceeds critical {critical:.2}"
        );
    }

    #[test]
    fn histogram_dimension_errors() {
        let edges = default_cpu_edges();
        let row = vec![1.0; EFF_BINS];
        assert!(EfficiencyHistogram::new(edges.clone(), vec![row.clone(); 9]).is_err());
        let short_row = vec![1.0; 99];
        let mut rows = vec![row.clone(); 9];
        rows.push(short_row);
        assert!(EfficiencyHistogram::new(edges.clone(), rows).is_err());
        let mut neg = vec![row.clone(); CPU_BINS];
        neg[3][5] = -1.0;
        assert!(EfficiencyHistogram::new(edges.clone(), neg).is_err());
        let mut zero_row = vec![row; CPU_BINS];
        zero_row[7] = vec![0.0; EFF_BINS];
        assert!(EfficiencyHistogram::new(edges, zero_row).is_err());
    }

    #[test]
    fn histogram_csv_round_trip() {
        let hist = degenerate_hist(42);
        let text = hist.to_csv();
        let back = EfficiencyHistogram::from_csv(&text).unwrap();
        assert_eq!(hist, back);
    }

    #[test]
    fn histogram_csv_wrong_row_count() {
        let hist = degenerate_hist(42);
        let mut text = hist.to_csv();
        text = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(EfficiencyHistogram::from_csv(&text).is_err());
    }

    #[test]
    fn cpu_bins_pick_expected_rows() {
        // Distinguishable rows: row i has all mass in column 10*i.
        let edges = default_cpu_edges();
        let rows: Vec<Vec<f64>> = (0..CPU_BINS)
            .map(|i| {
                let mut r = vec![0.0; EFF_BINS];
                r[10 * i.max(1)] = 1.0;
                r
            })
            .collect();
        let hist = EfficiencyHistogram::new(edges.clone(), rows).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // cpu below the second edge lands in row 0.
        let eff = hist.sample_efficiency(edges[1] / 2.0, &mut rng);
        assert!((0.10..0.11).contains(&eff));
        // cpu above the last finite edge lands in the final row.
        let eff = hist.sample_efficiency(2e5, &mut rng);
        assert!((0.90..0.91).contains(&eff));
    }

    #[test]
    fn overrides_update_rows() {
        let hist = degenerate_hist(50);
        let mut params = ParamSet::new(hist);
        params
            .apply_overrides("penalty.1ms=0.10\nspeed.50ms=200MBps\npenalty.200ms=0.5\n# comment\n")
            .unwrap();
        assert_eq!(params.penalty.penalty_for(1.0), 0.10);
        assert_eq!(params.penalty.penalty_for(200.0), 0.5);
        assert_eq!(params.speed.max_speed_for(50.0), 2e8);

        assert!(params.apply_overrides("penalty.1ms=1.5").is_err());
        assert!(params.apply_overrides("speed.10ms=0").is_err());
        assert!(params.apply_overrides("wat.1ms=3").is_err());
        // A speed override breaking monotonicity is rejected.
        assert!(params.apply_overrides("speed.120ms=99999MBps").is_err());
    }
}
