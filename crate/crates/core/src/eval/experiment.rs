//! Experiment configuration, load sweeps, throughput traces and utilization reports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_std, utilization_report, UtilizationRow};
use super::runner::{run_episode, EpisodeRecord};
use crate::baselines::{priority_shares, Controller, DqnAgent, GreedyController, PolicyController, StaticController};
use crate::env::{ResourcePool, Scenario, SlicingEnv};
use crate::error::{Error, Result};
use crate::ppo::{check_dims, Trainer};
use crate::traffic::{cached_cdr_trace, synth_trace, MappingConfig, Pattern, TrafficTrace, MAX_LOAD};

/// The five compared methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hmppo,
    StandardPpo,
    Dqn,
    Greedy,
    Static,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Hmppo,
        Method::StandardPpo,
        Method::Dqn,
        Method::Greedy,
        Method::Static,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hmppo => "hmppo",
            Method::StandardPpo => "standard_ppo",
            Method::Dqn => "dqn",
            Method::Greedy => "greedy",
            Method::Static => "static",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Method::Hmppo | Method::StandardPpo | Method::Dqn)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Where evaluation traffic comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficSource {
    Synthetic {
        pattern: Pattern,
    },
    /// A CDR file, rescaled so its mean multiplier equals the requested load.
    Cdr {
        path: PathBuf,
        #[serde(default)]
        mapping: Option<MappingConfig>,
        #[serde(default = "default_cache_dir")]
        cache_dir: PathBuf,
    },
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from(".trace-cache")
}

impl Default for TrafficSource {
    fn default() -> Self {
        TrafficSource::Synthetic {
            pattern: Pattern::Diurnal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scenario TOML; the built-in desk scenario when absent.
    pub scenario: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub traffic: TrafficSource,
    pub loads: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Overrides the scenario's episode length.
    pub horizon: Option<usize>,
    pub out_dir: PathBuf,
    /// Checkpoint per learned method; defaults to `<out_dir>/<method>.ckpt`.
    pub checkpoints: BTreeMap<Method, PathBuf>,
    /// Static-slicing shares; proportional to priority when absent.
    pub static_shares: Option<Vec<f64>>,
    /// Load of the shared trace used by `trace` and `report-utilization`.
    pub trace_load: f64,
    /// Steps `[start, end)` boosted in the throughput trace.
    pub high_load_window: (usize, usize),
    pub high_load_factor: f64,
    /// Rows of the utilization report.
    pub utilization_buckets: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            methods: Method::ALL.to_vec(),
            traffic: TrafficSource::default(),
            loads: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            seeds: vec![0, 1, 2, 3, 4],
            horizon: None,
            out_dir: PathBuf::from("results"),
            checkpoints: BTreeMap::new(),
            static_shares: None,
            trace_load: 0.6,
            high_load_window: (120, 160),
            high_load_factor: 1.5,
            utilization_buckets: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if let Some(l) = self
            .loads
            .iter()
            .chain([&self.trace_load])
            .find(|l| !(0.0..=MAX_LOAD).contains(*l))
        {
            return bad(format!("load level {l} outside [0, {MAX_LOAD}]"));
        }
        if self.horizon == Some(0) {
            return bad("horizon must be >= 1".into());
        }
        if !(self.high_load_factor >= 0.0) || self.high_load_window.0 > self.high_load_window.1 {
            return bad("high-load window must satisfy start <= end with a non-negative factor".into());
        }
        if self.utilization_buckets == 0 {
            return bad("utilization_buckets must be >= 1".into());
        }
        Ok(())
    }

    /// The scenario with the horizon override applied.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut sc = match &self.scenario {
            Some(p) => Scenario::load(p)?,
            None => Scenario::desk(),
        };
        if let Some(h) = self.horizon {
            sc.env.horizon = h;
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn checkpoint_path(&self, method: Method) -> PathBuf {
        self.checkpoints
            .get(&method)
            .cloned()
            .unwrap_or_else(|| self.out_dir.join(format!("{}.ckpt", method.name())))
    }

    /// Loads sorted ascending with duplicates removed.
    pub fn sorted_loads(&self) -> Vec<f64> {
        let mut l = self.loads.clone();
        l.sort_by(f64::total_cmp);
        l.dedup();
        l
    }

    /// Traffic for `(load, seed)`. Synthetic shapes depend on the seed only,
    /// so loads differ by scale alone.
    pub fn trace(&self, scenario: &Scenario, load: f64, seed: u64) -> Result<TrafficTrace> {
        let horizon = scenario.env.horizon;
        let s = scenario.num_slices();
        match &self.traffic {
            TrafficSource::Synthetic { pattern } => synth_trace(load, *pattern, horizon, trace_seed(seed), s),
            TrafficSource::Cdr {
                path,
                mapping,
                cache_dir,
            } => {
                let classes: Vec<_> = scenario.slices.iter().map(|t| t.service_class).collect();
                let mapping = mapping.clone().unwrap_or_else(|| MappingConfig::default_for(&classes));
                let base = cached_cdr_trace(path, &mapping, horizon, scenario.env.dt, cache_dir)?;
                Ok(rescale(&base, load))
            }
        }
    }
}

/// Seed of the synthetic traffic shape for evaluation seed `seed`.
pub fn trace_seed(seed: u64) -> u64 {
    seed.wrapping_add(100)
}

/// Rescales a trace so its mean multiplier equals `load`.
pub fn rescale(trace: &TrafficTrace, load: f64) -> TrafficTrace {
    let mean = trace.mean();
    let f = if mean > 0.0 { load / mean } else { 0.0 };
    TrafficTrace::from_multipliers(
        trace
            .multipliers
            .iter()
            .map(|row| row.iter().map(|m| m * f).collect())
            .collect(),
    )
}

/// Builds the controller for `method`, or `None` (with a warning) when its
/// checkpoint is missing.
pub fn load_controller(
    method: Method,
    cfg: &ExperimentConfig,
    scenario: &Scenario,
) -> Result<Option<Box<dyn Controller>>> {
    let census = scenario.census();
    match method {
        Method::Greedy => Ok(Some(Box::new(GreedyController))),
        Method::Static => {
            let shares = cfg
                .static_shares
                .clone()
                .unwrap_or_else(|| priority_shares(&census.specs));
            Ok(Some(Box::new(StaticController::new(shares, census.num_slices())?)))
        }
        learned => {
            let path = cfg.checkpoint_path(learned);
            if !path.exists() {
                warn!("skipping {learned}: no checkpoint at {}", path.display());
                return Ok(None);
            }
            let c: Box<dyn Controller> = if learned == Method::Dqn {
                let agent = DqnAgent::load(&path)?;
                check_dims(&agent.layout, scenario)?;
                Box::new(agent.controller())
            } else {
                let t = Trainer::load_for(&path, scenario)?;
                Box::new(PolicyController::new(t.model, learned.name()))
            };
            Ok(Some(c))
        }
    }
}

/// Mean and sample standard deviation across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub load: f64,
    pub satisfaction: MeanStd,
    pub per_seed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub method: Method,
    pub points: Vec<SweepPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub curves: Vec<SweepCurve>,
}

impl SweepResult {
    pub fn curve(&self, method: Method) -> Option<&SweepCurve> {
        self.curves.iter().find(|c| c.method == method)
    }
}

/// Satisfaction of `controller` at every load and seed.
pub fn sweep_controller(
    controller: &mut dyn Controller,
    method: Method,
    cfg: &ExperimentConfig,
    scenario: &Scenario,
) -> Result<SweepCurve> {
    let mut points = Vec::new();
    for load in cfg.sorted_loads() {
        let mut per_seed = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let trace = cfg.trace(scenario, load, seed)?;
            let mut env = SlicingEnv::new(scenario, trace, seed);
            per_seed.push(run_episode(controller, &mut env)?.satisfaction);
        }
        points.push(SweepPoint {
            load,
            satisfaction: MeanStd::of(&per_seed),
            per_seed,
        });
    }
    Ok(SweepCurve { method, points })
}

/// Runs every available method over the load sweep. Errors when no method
/// could be loaded.
pub fn load_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let mut curves = Vec::new();
    for &method in &cfg.methods {
        let Some(mut c) = load_controller(method, cfg, &scenario)? else {
            continue;
        };
        curves.push(sweep_controller(c.as_mut(), method, cfg, &scenario)?);
    }
    if curves.is_empty() {
        return Err(Error::NotFound(
            "no method could be evaluated; train or point to checkpoints first".into(),
        ));
    }
    Ok(SweepResult {
        scenario: scenario.name.clone(),
        seeds: cfg.seeds.clone(),
        curves,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSeries {
    pub method: Method,
    /// Served bits per second at each step.
    pub throughput: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputResult {
    pub high_load_window: (usize, usize),
    /// Normalised offered load per step.
    pub load: Vec<f64>,
    pub series: Vec<ThroughputSeries>,
}

/// The shared trace of the throughput experiment: the first seed's traffic
/// at `trace_load`, boosted inside the high-load window.
pub fn shared_trace(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<TrafficTrace> {
    let base = cfg.trace(scenario, cfg.trace_load, cfg.seeds[0])?;
    let (a, b) = cfg.high_load_window;
    Ok(base.boosted(a, b, cfg.high_load_factor))
}

/// Per-step throughput of one controller on `trace`, optionally on a replaced pool.
pub fn throughput_series(
    controller: &mut dyn Controller,
    scenario: &Scenario,
    trace: TrafficTrace,
    seed: u64,
    pool: Option<ResourcePool>,
) -> Result<EpisodeRecord> {
    let mut env = SlicingEnv::new(scenario, trace, seed);
    if let Some(p) = pool {
        env.set_pool(p)?;
    }
    run_episode(controller, &mut env)
}

pub fn throughput_trace(cfg: &ExperimentConfig) -> Result<ThroughputResult> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let trace = shared_trace(cfg, &scenario)?;
    let mut series = Vec::new();
    for &method in &cfg.methods {
        let Some(mut c) = load_controller(method, cfg, &scenario)? else {
            continue;
        };
        let rec = throughput_series(c.as_mut(), &scenario, trace.clone(), cfg.seeds[0], None)?;
        series.push(ThroughputSeries {
            method,
            throughput: rec.throughput,
        });
    }
    if series.is_empty() {
        return Err(Error::NotFound(
            "no method could be evaluated; train or point to checkpoints first".into(),
        ));
    }
    Ok(ThroughputResult {
        high_load_window: cfg.high_load_window,
        load: trace.load.clone(),
        series,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationTable {
    pub method: Method,
    pub rows: Vec<UtilizationRow>,
}

/// Splits `n` steps into `buckets` contiguous, nearly equal ranges.
pub fn bucket_ranges(n: usize, buckets: usize) -> Vec<(usize, usize)> {
    let b = buckets.min(n).max(1);
    (0..b).map(|i| (i * n / b, (i + 1) * n / b)).collect()
}

/// Per-bucket resource utilization of every available method on the shared trace.
pub fn utilization_tables(cfg: &ExperimentConfig) -> Result<Vec<UtilizationTable>> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let trace = shared_trace(cfg, &scenario)?;
    let mut out = Vec::new();
    for &method in &cfg.methods {
        let Some(mut c) = load_controller(method, cfg, &scenario)? else {
            continue;
        };
        let rec = throughput_series(c.as_mut(), &scenario, trace.clone(), cfg.seeds[0], None)?;
        let buckets: Vec<_> = bucket_ranges(rec.used.len(), cfg.utilization_buckets)
            .into_iter()
            .map(|(a, b)| rec.used[a..b].to_vec())
            .collect();
        out.push(UtilizationTable {
            method,
            rows: utilization_report(&buckets, &scenario.pool)?,
        });
    }
    if out.is_empty() {
        return Err(Error::NotFound(
            "no method could be evaluated; train or point to checkpoints first".into(),
        ));
    }
    Ok(out)
}

/// Plain-text rendering with rows labelled `T1..Tn`.
pub fn format_utilization(tables: &[UtilizationTable]) -> String {
    let mut s = String::new();
    for t in tables {
        s += &format!(
            "# {}\n{:<6}{:>10}{:>12}{:>10}{:>10}\n",
            t.method, "bucket", "radio%", "bandwidth%", "compute%", "overall%"
        );
        for (i, r) in t.rows.iter().enumerate() {
            s += &format!(
                "{:<6}{:>10.2}{:>12.2}{:>10.2}{:>10.2}\n",
                format!("T{}", i + 1),
                r.radio,
                r.bandwidth,
                r.compute,
                r.overall
            );
        }
        s.push('\n');
    }
    s
}

/// One evaluated method at one load: per-step series and across-seed aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub load: f64,
    pub seeds: Vec<u64>,
    pub episodes: Vec<EpisodeRecord>,
    pub satisfaction: MeanStd,
    /// Mean per-step throughput, bits/s.
    pub throughput: MeanStd,
    /// Mean utilization per domain, percent.
    pub utilization: [MeanStd; 3],
}

pub fn evaluate_method(cfg: &ExperimentConfig, method: Method, load: f64) -> Result<RunResult> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let mut c = load_controller(method, cfg, &scenario)?.ok_or_else(|| {
        Error::NotFound(format!(
            "no checkpoint for {method} at {}",
            cfg.checkpoint_path(method).display()
        ))
    })?;
    let caps = scenario.pool.capacities();
    let mut episodes = Vec::new();
    for &seed in &cfg.seeds {
        let trace = cfg.trace(&scenario, load, seed)?;
        let mut env = SlicingEnv::new(&scenario, trace, seed);
        episodes.push(run_episode(c.as_mut(), &mut env)?);
    }
    let sat: Vec<f64> = episodes.iter().map(|e| e.satisfaction).collect();
    let thr: Vec<f64> = episodes
        .iter()
        .map(|e| e.throughput.iter().sum::<f64>() / e.throughput.len() as f64)
        .collect();
    let util = [0, 1, 2].map(|k| {
        let per: Vec<f64> = episodes
            .iter()
            .map(|e| 100.0 * e.used.iter().map(|u| u[k]).sum::<f64>() / e.used.len() as f64 / caps[k])
            .collect();
        MeanStd::of(&per)
    });
    Ok(RunResult {
        method,
        load,
        seeds: cfg.seeds.clone(),
        episodes,
        satisfaction: MeanStd::of(&sat),
        throughput: MeanStd::of(&thr),
        utilization: util,
    })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
