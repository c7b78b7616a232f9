//! Parameter sweeps over scenarios and policies, per-run metrics and their
//! aggregation across seeds.

mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_observed, FlowMode, Observer, RunConfig, RunOutput, SlotTotals};
use crate::policies::{lemma_constants, LemmaMonitor, LemmaReport, PolicyConfig, PolicyRegistry, SublinearG};
use crate::scenario::{load_scenario, Scenario, ScenarioError};

pub use output::{format_float, read_csv, write_csv, write_manifest, write_summary_csv, write_trace_csv, Manifest, CSV_HEADER};

/// Slope above which a cell is declared unstable (queue per slot).
pub const INSTABILITY_SLOPE: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read sweep spec `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed sweep spec: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid sweep spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cell {cell} mixes averaging windows {a:?} and {b:?}")]
    MixedWindows { cell: String, a: (u64, u64), b: (u64, u64) },
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

fn default_horizon() -> u64 {
    100_000
}

fn default_warmup() -> f64 {
    0.5
}

fn default_seeds() -> u64 {
    3
}

fn default_seed_base() -> u64 {
    1
}

fn default_zero_f() -> Vec<f64> {
    vec![0.0]
}

fn default_zero_u() -> Vec<u32> {
    vec![0]
}

/// Grid description read from a sweep spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Built-in scenario name or path to a scenario file.
    pub scenario: String,
    pub policies: Vec<String>,
    /// Uniform per-client arrival rate.
    pub lambda: Vec<f64>,
    #[serde(alias = "V")]
    pub v: Vec<f64>,
    #[serde(default = "default_zero_u")]
    pub delta_r: Vec<u32>,
    #[serde(default = "default_zero_f")]
    pub eta_r: Vec<f64>,
    /// Commodity-only reconfiguration delay applied to every element.
    #[serde(default)]
    pub commodity_delay: Option<u32>,
    #[serde(default)]
    pub commodity_cost: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    /// Seeds `seed_base .. seed_base + seeds`.
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_seed_base")]
    pub seed_base: u64,
    #[serde(default)]
    pub g: SublinearG,
    #[serde(default)]
    pub mode: FlowMode,
    /// Window `T` of the reconfiguration-frequency monitor; off when unset.
    #[serde(default)]
    pub lemma_window: Option<u64>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let spec: SweepSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec file; a relative scenario path is resolved against the
    /// spec file's directory.
    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut spec = Self::from_toml_str(&text)?;
        if crate::scenario::builtin_scenario(&spec.scenario).is_none() {
            let candidate = path.parent().unwrap_or(Path::new(".")).join(&spec.scenario);
            if candidate.is_file() {
                spec.scenario = candidate.display().to_string();
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Invalid(m));
        if self.policies.is_empty() || self.lambda.is_empty() || self.v.is_empty() {
            return bad("policies, lambda and v must be non-empty".into());
        }
        if self.delta_r.is_empty() || self.eta_r.is_empty() {
            return bad("delta_r and eta_r must be non-empty".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction must lie in [0, 1), got {}", self.warmup_fraction));
        }
        if self.warmup_slots() >= self.horizon {
            return bad("warmup leaves no slots to average".into());
        }
        if self.seeds == 0 {
            return bad("at least one seed per cell is required".into());
        }
        if self.lambda.iter().chain(&self.eta_r).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("lambda and eta_r entries must be finite and non-negative".into());
        }
        let registry = PolicyRegistry::builtin();
        for p in &self.policies {
            if registry.names().all(|n| n != p) {
                return bad(format!("unknown policy `{p}`"));
            }
        }
        Ok(())
    }

    pub fn warmup_slots(&self) -> u64 {
        (self.horizon as f64 * self.warmup_fraction).floor() as u64
    }

    /// Every (cell, seed) in output order: policy, λ, V, δ_r, η_r, seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for policy in &self.policies {
            for &lambda in &self.lambda {
                for &v in &self.v {
                    for &delta_r in &self.delta_r {
                        for &eta_r in &self.eta_r {
                            for seed in self.seed_base..self.seed_base + self.seeds {
                                out.push(Cell {
                                    policy: policy.clone(),
                                    lambda: Some(lambda),
                                    v,
                                    delta_r: Some(delta_r),
                                    eta_r: Some(eta_r),
                                    commodity_delay: self.commodity_delay,
                                    commodity_cost: self.commodity_cost,
                                    horizon: self.horizon,
                                    warmup_fraction: self.warmup_fraction,
                                    seed,
                                    g: self.g,
                                    mode: self.mode,
                                    lemma_window: self.lemma_window,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One simulation run. `None` overrides keep the scenario's own values.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub policy: String,
    pub lambda: Option<f64>,
    pub v: f64,
    pub delta_r: Option<u32>,
    pub eta_r: Option<f64>,
    pub commodity_delay: Option<u32>,
    pub commodity_cost: Option<f64>,
    pub horizon: u64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub g: SublinearG,
    pub mode: FlowMode,
    pub lemma_window: Option<u64>,
}

impl Cell {
    pub fn new(policy: &str, v: f64, horizon: u64, seed: u64) -> Self {
        Self {
            policy: policy.to_string(),
            lambda: None,
            v,
            delta_r: None,
            eta_r: None,
            commodity_delay: None,
            commodity_cost: None,
            horizon,
            warmup_fraction: default_warmup(),
            seed,
            g: SublinearG::default(),
            mode: FlowMode::Actual,
            lemma_window: None,
        }
    }

    pub fn warmup_slots(&self) -> u64 {
        (self.horizon as f64 * self.warmup_fraction).floor() as u64
    }

    /// The scenario with this cell's overrides applied.
    pub fn configure(&self, base: &Scenario) -> Scenario {
        let mut s = base.clone();
        if let Some(l) = self.lambda {
            s.set_uniform_rate(l);
        }
        s.set_reconfig(self.delta_r, self.eta_r);
        s.set_commodity_reconfig(self.commodity_delay, self.commodity_cost);
        s
    }
}

/// Time averages of one run over its post-warmup window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_total_queue: f64,
    pub mean_cost: f64,
    pub reconfig_fraction: f64,
    pub delivered_rate: f64,
    pub instability_slope: f64,
}

impl Metrics {
    pub fn nan() -> Self {
        Self {
            mean_total_queue: f64::NAN,
            mean_cost: f64::NAN,
            reconfig_fraction: f64::NAN,
            delivered_rate: f64::NAN,
            instability_slope: f64::NAN,
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [
            self.mean_total_queue,
            self.mean_cost,
            self.reconfig_fraction,
            self.delivered_rate,
            self.instability_slope,
        ]
    }

    fn from_values(v: [f64; 5]) -> Self {
        Self {
            mean_total_queue: v[0],
            mean_cost: v[1],
            reconfig_fraction: v[2],
            delivered_rate: v[3],
            instability_slope: v[4],
        }
    }

    /// Averages slots `warmup..` of `series`.
    pub fn from_series(series: &[SlotTotals], warmup: u64, elements: usize) -> Self {
        let window = &series[(warmup as usize).min(series.len())..];
        if window.is_empty() {
            return Self::nan();
        }
        let n = window.len() as f64;
        let mean = |f: &dyn Fn(&SlotTotals) -> f64| window.iter().map(f).sum::<f64>() / n;
        let t_mean = mean(&|s| s.t as f64);
        let q_mean = mean(&|s| s.total_queue);
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for s in window {
            let dt = s.t as f64 - t_mean;
            sxy += dt * (s.total_queue - q_mean);
            sxx += dt * dt;
        }
        Self {
            mean_total_queue: q_mean,
            mean_cost: mean(&|s| s.cost.total()),
            reconfig_fraction: if elements == 0 {
                0.0
            } else {
                mean(&|s| s.reconfiguring as f64 / elements as f64)
            },
            delivered_rate: mean(&|s| s.delivered),
            instability_slope: if sxx > 0.0 { sxy / sxx } else { 0.0 },
        }
    }

    pub fn is_unstable(&self) -> bool {
        self.instability_slope > INSTABILITY_SLOPE
    }
}

/// Result of one (cell, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub policy: String,
    pub lambda: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub delta_r: f64,
    pub eta_r: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: Metrics,
    /// Averaging window `[start, end)` in slots.
    pub window: (u64, u64),
    pub runtime_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<LemmaSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MetricsRecord {
    pub fn cell_key(&self) -> CellKey {
        CellKey {
            policy: self.policy.clone(),
            lambda: self.lambda,
            v: self.v,
            delta_r: self.delta_r,
            eta_r: self.eta_r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    pub window: u64,
    pub window_violations: usize,
    pub exceed_slots: usize,
    pub gamma_violations: usize,
    pub gamma_max: f64,
    pub max_change: f64,
}

impl LemmaSummary {
    fn new(report: LemmaReport, window: u64, gamma_max: f64) -> Self {
        Self {
            window,
            window_violations: report.window_violations,
            exceed_slots: report.exceed_slots,
            gamma_violations: report.gamma_violations,
            gamma_max,
            max_change: report.max_change,
        }
    }
}

/// Common arrival rate of all clients, NaN when they differ.
fn uniform_rate(s: &Scenario) -> f64 {
    let mut rates = s.services.iter().flat_map(|svc| svc.clients.iter().map(|c| c.arrival.rate()));
    let Some(first) = rates.next() else { return 0.0 };
    if rates.all(|r| r == first) {
        first
    } else {
        f64::NAN
    }
}

/// Uniform reconfiguration overhead of the network, NaN when it varies.
fn uniform_overhead(s: &Scenario, f: impl Fn(&crate::model::ReconfigProfile) -> f64) -> f64 {
    let mut all = s
        .network
        .nodes()
        .iter()
        .map(|n| f(&n.reconfig))
        .chain(s.network.links().iter().map(|l| f(&l.reconfig)));
    let Some(first) = all.next() else { return 0.0 };
    if all.all(|x| x == first) {
        first
    } else {
        f64::NAN
    }
}

/// A finished run with its full per-slot series.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub record: MetricsRecord,
    pub output: RunOutput,
}

/// Runs a single cell against `base`, returning the full series.
pub fn execute_cell(base: &Scenario, cell: &Cell) -> Result<CellRun, String> {
    let started = Instant::now();
    let scenario = cell.configure(base);
    let coms = scenario.commodities().map_err(|e| e.to_string())?;
    let arrivals = scenario.arrival_specs(&coms);
    let config = PolicyConfig { v: cell.v, g: cell.g };
    let policy = PolicyRegistry::builtin()
        .create(&cell.policy, &config)
        .map_err(|e| e.to_string())?;
    let run_config = RunConfig {
        horizon: cell.horizon,
        seed: cell.seed,
        mode: cell.mode,
    };
    let (output, lemma) = match cell.lemma_window {
        Some(window) => {
            let a_max = arrivals.iter().map(|a| a.process.bound()).max().unwrap_or(0) as f64;
            let constants =
                lemma_constants(&scenario.network, &coms, &config.params(), window, a_max).map_err(|e| e.to_string())?;
            let gamma = constants.gamma_max;
            let mut monitor = LemmaMonitor::new(constants, &scenario.network, &coms);
            let mut observers: [&mut dyn Observer; 1] = [&mut monitor];
            let output = run_observed(&scenario.network, &coms, policy.as_ref(), &arrivals, run_config, &mut observers)
                .map_err(|e| e.to_string())?;
            (output, Some(LemmaSummary::new(monitor.report(), window, gamma)))
        }
        None => {
            let output = run_observed(&scenario.network, &coms, policy.as_ref(), &arrivals, run_config, &mut [])
                .map_err(|e| e.to_string())?;
            (output, None)
        }
    };
    let warmup = cell.warmup_slots();
    let metrics = Metrics::from_series(&output.series, warmup, output.elements);
    let record = MetricsRecord {
        policy: cell.policy.clone(),
        lambda: cell.lambda.unwrap_or_else(|| uniform_rate(&scenario)),
        v: cell.v,
        delta_r: cell.delta_r.map_or_else(|| uniform_overhead(&scenario, |r| r.delay as f64), |d| d as f64),
        eta_r: cell.eta_r.unwrap_or_else(|| uniform_overhead(&scenario, |r| r.cost)),
        seed: cell.seed,
        metrics,
        window: (warmup, cell.horizon),
        runtime_secs: started.elapsed().as_secs_f64(),
        lemma,
        error: None,
    };
    Ok(CellRun { record, output })
}

/// Runs a cell and folds any failure into the record.
pub fn run_cell(base: &Scenario, cell: &Cell) -> MetricsRecord {
    let started = Instant::now();
    match execute_cell(base, cell) {
        Ok(run) => run.record,
        Err(error) => MetricsRecord {
            policy: cell.policy.clone(),
            lambda: cell.lambda.unwrap_or(f64::NAN),
            v: cell.v,
            delta_r: cell.delta_r.map_or(f64::NAN, |d| d as f64),
            eta_r: cell.eta_r.unwrap_or(f64::NAN),
            seed: cell.seed,
            metrics: Metrics::nan(),
            window: (cell.warmup_slots(), cell.horizon),
            runtime_secs: started.elapsed().as_secs_f64(),
            lemma: None,
            error: Some(error),
        },
    }
}

/// Runs every cell of `spec`, in parallel on up to `jobs` threads (all
/// cores when `None`). Output order follows [`SweepSpec::cells`].
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<Vec<MetricsRecord>, ExperimentError> {
    spec.validate()?;
    let base = load_scenario(&spec.scenario)?;
    let cells = spec.cells();
    let work = || cells.par_iter().map(|c| run_cell(&base, c)).collect::<Vec<_>>();
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| ExperimentError::Pool(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Coordinates of a cell without the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub policy: String,
    pub lambda: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub delta_r: f64,
    pub eta_r: f64,
}

impl CellKey {
    fn same(&self, other: &CellKey) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.policy == other.policy
            && eq(self.lambda, other.lambda)
            && eq(self.v, other.v)
            && eq(self.delta_r, other.delta_r)
            && eq(self.eta_r, other.eta_r)
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} lambda={} V={} delta_r={} eta_r={}",
            self.policy, self.lambda, self.v, self.delta_r, self.eta_r
        )
    }
}

/// Mean and standard error across the seeds of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub key: CellKey,
    pub seeds: usize,
    pub window: (u64, u64),
    pub mean: Metrics,
    pub stderr: Metrics,
    /// Records that failed and were left out of the averages.
    pub failures: usize,
}

/// Groups records by cell in first-seen order.
pub fn summarize(records: &[MetricsRecord]) -> Result<Vec<Aggregate>, ExperimentError> {
    let mut groups: Vec<(CellKey, Vec<&MetricsRecord>)> = Vec::new();
    for r in records {
        let key = r.cell_key();
        match groups.iter_mut().find(|(k, _)| k.same(&key)) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut out = Vec::new();
    for (key, group) in groups {
        let window = group[0].window;
        if let Some(other) = group.iter().find(|r| r.window != window) {
            return Err(ExperimentError::MixedWindows {
                cell: key.to_string(),
                a: window,
                b: other.window,
            });
        }
        let ok: Vec<_> = group.iter().filter(|r| r.error.is_none()).collect();
        let n = ok.len();
        let mut mean = [f64::NAN; 5];
        let mut stderr = [f64::NAN; 5];
        if n > 0 {
            for i in 0..5 {
                let xs: Vec<f64> = ok.iter().map(|r| r.metrics.values()[i]).collect();
                let m = xs.iter().sum::<f64>() / n as f64;
                mean[i] = m;
                stderr[i] = if n > 1 {
                    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (var / n as f64).sqrt()
                } else {
                    0.0
                };
            }
        }
        out.push(Aggregate {
            key,
            seeds: n,
            window,
            mean: Metrics::from_values(mean),
            stderr: Metrics::from_values(stderr),
            failures: group.len() - n,
        });
    }
    Ok(out)
}

/// Writes `records.csv`, `summary.csv` and `manifest.json` into `dir`.
pub fn write_sweep_outputs(
    dir: &Path,
    spec: &SweepSpec,
    spec_text: &str,
    records: &[MetricsRecord],
) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    let records_path = dir.join("records.csv");
    let summary_path = dir.join("summary.csv");
    let manifest_path = dir.join("manifest.json");
    write_csv(records, &records_path)?;
    write_summary_csv(&summarize(records)?, &summary_path)?;
    write_manifest(&Manifest::new(spec, spec_text, records), &manifest_path)?;
    Ok(vec![records_path, summary_path, manifest_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::CostBreakdown;

    fn spec_text() -> &'static str {
        r#"
scenario = "line4"
policies = ["adcnc"]
lambda = [0.2]
V = [5.0]
horizon = 400
seeds = 1
"#
    }

    #[test]
    fn spec_defaults_and_validation() {
        let s = SweepSpec::from_toml_str(spec_text()).unwrap();
        assert_eq!((s.delta_r.clone(), s.eta_r.clone()), (vec![0], vec![0.0]));
        assert_eq!(s.warmup_slots(), 200);
        assert_eq!(s.cells().len(), 1);
        let bad = spec_text().replace("seeds = 1", "seeds = 0");
        assert!(SweepSpec::from_toml_str(&bad).is_err());
        let bad = spec_text().replace("adcnc", "bmp");
        assert!(SweepSpec::from_toml_str(&bad).is_err());
        let bad = format!("{}\nwarmup_fraction = 1.0\n", spec_text());
        assert!(SweepSpec::from_toml_str(&bad).is_err());
    }

    #[test]
    fn fig2_grid_cardinality() {
        let text = r#"
scenario = "abilene"
policies = ["dcnc", "adcnc"]
lambda = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
V = [5.0]
delta_r = [0, 1, 5, 20]
seeds = 1
"#;
        assert_eq!(SweepSpec::from_toml_str(text).unwrap().cells().len(), 72);
    }

    #[test]
    fn one_cell_reruns_identically() {
        let s = SweepSpec::from_toml_str(spec_text()).unwrap();
        let a = run_sweep(&s, Some(1)).unwrap();
        let b = run_sweep(&s, Some(2)).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].metrics, b[0].metrics);
        assert!(a[0].error.is_none());
    }

    #[test]
    fn slope_and_window() {
        let series: Vec<SlotTotals> = (0..10)
            .map(|t| SlotTotals {
                t,
                total_queue: if t < 5 { 100.0 } else { 2.0 * t as f64 },
                cost: CostBreakdown {
                    flow: 1.0,
                    allocation: 0.0,
                    reconfiguration: 0.0,
                },
                reconfiguring: 1,
                reconfig_events: 0,
                delivered: 0.5,
                arrived: 0.0,
            })
            .collect();
        let m = Metrics::from_series(&series, 5, 4);
        assert!((m.instability_slope - 2.0).abs() < 1e-12);
        assert_eq!(m.mean_total_queue, 14.0);
        assert_eq!(m.reconfig_fraction, 0.25);
        assert_eq!(m.delivered_rate, 0.5);
        assert_eq!(m.mean_cost, 1.0);
        assert!(m.is_unstable());
    }

    fn record(seed: u64, q: f64) -> MetricsRecord {
        MetricsRecord {
            policy: "adcnc".into(),
            lambda: 0.2,
            v: 5.0,
            delta_r: 0.0,
            eta_r: 0.0,
            seed,
            metrics: Metrics {
                mean_total_queue: q,
                ..Metrics::default()
            },
            window: (50, 100),
            runtime_secs: 0.0,
            lemma: None,
            error: None,
        }
    }

    #[test]
    fn summarize_cases() {
        let one = summarize(&[record(1, 3.0)]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].mean, record(1, 3.0).metrics);
        let two = summarize(&[record(1, 3.0), record(2, 3.0)]).unwrap();
        assert_eq!(two[0].stderr.mean_total_queue, 0.0);
        let spread = summarize(&[record(1, 1.0), record(2, 3.0)]).unwrap();
        assert!((spread[0].stderr.mean_total_queue - 1.0).abs() < 1e-12);
        let mut other = record(2, 3.0);
        other.window = (10, 100);
        assert!(matches!(
            summarize(&[record(1, 3.0), other]),
            Err(ExperimentError::MixedWindows { .. })
        ));
    }

    #[test]
    fn failures_are_embedded() {
        let base = crate::scenario::line_scenario(3, 0.2);
        let mut cell = Cell::new("adcnc", -1.0, 10, 1);
        cell.lambda = Some(0.2);
        let r = run_cell(&base, &cell);
        assert!(r.error.is_some());
        assert!(r.metrics.mean_cost.is_nan());
    }
}
