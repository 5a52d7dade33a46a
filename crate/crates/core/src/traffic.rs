//! Traffic sources: Milan-style CDR grid activity and synthetic load patterns.
//!
//! CDR files are tab-separated rows of
//! `square_id, timestamp_ms, country_code, sms_in, sms_out, call_in, call_out, internet`
//! aggregated in 10-minute bins (optionally gzip-compressed). Activity is mapped
//! onto slices, normalised by its maximum and held over control steps to form a
//! multiplier on each user's base arrival rate.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::ServiceClass;
use crate::error::{Error, Result};

/// Width of one CDR aggregation bin.
pub const BIN_MS: i64 = 10 * 60 * 1000;
/// Bins per day.
pub const BINS_PER_DAY: usize = 144;
/// Upper end of the normalised load axis.
pub const MAX_LOAD: f64 = 1.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdrRecord {
    pub square_id: u32,
    /// Epoch milliseconds, a multiple of [`BIN_MS`].
    pub timestamp: i64,
    pub country_code: u32,
    pub sms_in: f64,
    pub sms_out: f64,
    pub call_in: f64,
    pub call_out: f64,
    pub internet: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdrColumn {
    SmsIn,
    SmsOut,
    CallIn,
    CallOut,
    Internet,
}

impl CdrRecord {
    pub fn column(&self, c: CdrColumn) -> f64 {
        match c {
            CdrColumn::SmsIn => self.sms_in,
            CdrColumn::SmsOut => self.sms_out,
            CdrColumn::CallIn => self.call_in,
            CdrColumn::CallOut => self.call_out,
            CdrColumn::Internet => self.internet,
        }
    }
}

fn open_text(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(GzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn parse_row(path: &Path, line_no: usize, line: &str) -> Result<CdrRecord> {
    let err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        msg,
    };
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if fields.len() < 2 || fields.len() > 8 {
        return Err(err(format!(
            "expected 2 to 8 tab-separated fields, found {}",
            fields.len()
        )));
    }
    let square_id = fields[0]
        .parse::<u32>()
        .map_err(|e| err(format!("bad square_id {:?}: {e}", fields[0])))?;
    let timestamp = fields[1]
        .parse::<i64>()
        .map_err(|e| err(format!("bad timestamp {:?}: {e}", fields[1])))?;
    if timestamp.rem_euclid(BIN_MS) != 0 {
        return Err(err(format!("timestamp {timestamp} is not aligned to a 10-minute bin")));
    }
    let field = |i: usize| fields.get(i).copied().unwrap_or("");
    let country_code = match field(2) {
        "" => 0,
        s => s
            .parse::<u32>()
            .map_err(|e| err(format!("bad country code {s:?}: {e}")))?,
    };
    let mut activity = [0.0f64; 5];
    for (k, slot) in activity.iter_mut().enumerate() {
        let s = field(3 + k);
        if s.is_empty() {
            continue;
        }
        let v = s
            .parse::<f64>()
            .map_err(|e| err(format!("bad activity value {s:?}: {e}")))?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(err(format!("activity must be a finite non-negative number, got {s}")));
        }
        *slot = v;
    }
    Ok(CdrRecord {
        square_id,
        timestamp,
        country_code,
        sms_in: activity[0],
        sms_out: activity[1],
        call_in: activity[2],
        call_out: activity[3],
        internet: activity[4],
    })
}

/// Reads CDR rows, keeping cells in `cell_filter` (all when `None`) and
/// timestamps in the half-open range `time_range`.
pub fn load_cdr(
    path: impl AsRef<Path>,
    cell_filter: Option<&[u32]>,
    time_range: Option<(i64, i64)>,
) -> Result<Vec<CdrRecord>> {
    let path = path.as_ref();
    let reader = open_text(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let rec = parse_row(path, i + 1, &line)?;
        if let Some(cells) = cell_filter {
            if !cells.contains(&rec.square_id) {
                continue;
            }
        }
        if let Some((lo, hi)) = time_range {
            if rec.timestamp < lo || rec.timestamp >= hi {
                continue;
            }
        }
        out.push(rec);
    }
    out.sort_by_key(|r| (r.timestamp, r.square_id));
    Ok(out)
}

/// Writes records back in the tab-separated layout read by [`load_cdr`].
pub fn write_cdr(path: impl AsRef<Path>, records: &[CdrRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.square_id, r.timestamp, r.country_code, r.sms_in, r.sms_out, r.call_in, r.call_out, r.internet
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Which CDR columns feed each slice, and how fast trace time runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    /// One column set per slice, in scenario slice order.
    pub slice_columns: Vec<Vec<CdrColumn>>,
    /// Trace seconds per simulated second; 600 makes a 1 s control step advance one bin.
    pub time_scale: f64,
}

impl MappingConfig {
    /// Internet feeds eMBB, calls feed URLLC, SMS feeds mMTC.
    pub fn default_for(classes: &[ServiceClass]) -> Self {
        let slice_columns = classes
            .iter()
            .map(|c| match c {
                ServiceClass::Embb => vec![CdrColumn::Internet],
                ServiceClass::Urllc => vec![CdrColumn::CallIn, CdrColumn::CallOut],
                ServiceClass::Mmtc => vec![CdrColumn::SmsIn, CdrColumn::SmsOut],
            })
            .collect();
        Self {
            slice_columns,
            time_scale: 600.0,
        }
    }
}

/// Mapped activity per 10-minute bin and slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivitySeries {
    pub start_ms: i64,
    /// `bins[b][s]`.
    pub bins: Vec<Vec<f64>>,
}

impl ActivitySeries {
    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }
}

/// Sums mapped activity into contiguous bins from the first to the last timestamp.
pub fn aggregate_bins(records: &[CdrRecord], mapping: &MappingConfig) -> Result<ActivitySeries> {
    let first = records
        .iter()
        .map(|r| r.timestamp)
        .min()
        .ok_or_else(|| Error::InvalidInput("no CDR records to aggregate".into()))?;
    let last = records.iter().map(|r| r.timestamp).max().unwrap_or(first);
    let n_bins = ((last - first) / BIN_MS) as usize + 1;
    let n_slices = mapping.slice_columns.len();
    let mut bins = vec![vec![0.0; n_slices]; n_bins];
    for r in records {
        let b = ((r.timestamp - first) / BIN_MS) as usize;
        for (s, cols) in mapping.slice_columns.iter().enumerate() {
            bins[b][s] += cols.iter().map(|c| r.column(*c)).sum::<f64>();
        }
    }
    Ok(ActivitySeries { start_ms: first, bins })
}

/// Per-step, per-slice arrival multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficTrace {
    /// `multipliers[t][s]`, all `>= 0`.
    pub multipliers: Vec<Vec<f64>>,
    /// Normalised load per step (mean multiplier, capped at [`MAX_LOAD`]).
    pub load: Vec<f64>,
}

impl TrafficTrace {
    pub fn from_multipliers(multipliers: Vec<Vec<f64>>) -> Self {
        let load = multipliers
            .iter()
            .map(|row| {
                let m = if row.is_empty() {
                    0.0
                } else {
                    row.iter().sum::<f64>() / row.len() as f64
                };
                m.clamp(0.0, MAX_LOAD)
            })
            .collect();
        Self { multipliers, load }
    }

    pub fn constant(level: f64, horizon: usize, num_slices: usize) -> Self {
        Self::from_multipliers(vec![vec![level; num_slices]; horizon])
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    pub fn num_slices(&self) -> usize {
        self.multipliers.first().map_or(0, Vec::len)
    }

    /// Multiplier at `step` (cyclic) for `slice`.
    pub fn multiplier(&self, step: usize, slice: usize) -> f64 {
        if self.multipliers.is_empty() {
            return 0.0;
        }
        let row = &self.multipliers[step % self.multipliers.len()];
        row.get(slice).copied().unwrap_or(0.0)
    }

    /// Mean multiplier over all steps and slices.
    pub fn mean(&self) -> f64 {
        let n: usize = self.multipliers.iter().map(Vec::len).sum();
        if n == 0 {
            return 0.0;
        }
        self.multipliers.iter().flatten().sum::<f64>() / n as f64
    }

    /// Multiplies every slice's multiplier by `factor` on steps `[start, end)`.
    pub fn boosted(&self, start: usize, end: usize, factor: f64) -> Self {
        let mut m = self.multipliers.clone();
        for row in m.iter_mut().take(end).skip(start) {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
        Self::from_multipliers(m)
    }
}

/// Normalises mapped activity by each slice's maximum and holds each bin over
/// the control steps it covers. Wraps cyclically past the end of the data.
pub fn cdr_to_trace(records: &[CdrRecord], mapping: &MappingConfig, horizon: usize, dt: f64) -> Result<TrafficTrace> {
    if records.is_empty() {
        return Err(Error::InvalidInput("cdr_to_trace needs at least one record".into()));
    }
    if !(dt > 0.0) || !(mapping.time_scale > 0.0) {
        return Err(Error::InvalidConfig("dt and time_scale must be positive".into()));
    }
    let series = aggregate_bins(records, mapping)?;
    Ok(series_to_trace(&series, horizon, dt, mapping.time_scale))
}

pub fn series_to_trace(series: &ActivitySeries, horizon: usize, dt: f64, time_scale: f64) -> TrafficTrace {
    let n_slices = series.bins.first().map_or(0, Vec::len);
    let maxima: Vec<f64> = (0..n_slices)
        .map(|s| series.bins.iter().map(|b| b[s]).fold(0.0, f64::max))
        .collect();
    let bin_seconds = (BIN_MS / 1000) as f64;
    let n_bins = series.num_bins();
    let mut wrapped = false;
    let multipliers = (0..horizon)
        .map(|k| {
            let t = k as f64 * dt * time_scale;
            let mut b = (t / bin_seconds + 1e-9).floor() as usize;
            if b >= n_bins {
                wrapped = true;
                b %= n_bins;
            }
            (0..n_slices)
                .map(|s| {
                    if maxima[s] > 0.0 {
                        series.bins[b][s] / maxima[s]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    if wrapped {
        warn!("traffic horizon of {horizon} steps exceeds the {n_bins} available CDR bins; wrapping cyclically");
    }
    TrafficTrace::from_multipliers(multipliers)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Constant,
    Diurnal,
    Bursty,
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" => Ok(Pattern::Constant),
            "diurnal" => Ok(Pattern::Diurnal),
            "bursty" => Ok(Pattern::Bursty),
            other => Err(Error::InvalidConfig(format!("unknown traffic pattern {other:?}"))),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Constant => "constant",
            Pattern::Diurnal => "diurnal",
            Pattern::Bursty => "bursty",
        })
    }
}

/// Steps per synthetic day (one 10-minute bin per step).
pub const DIURNAL_PERIOD: usize = BINS_PER_DAY;

/// Seeded synthetic trace whose per-slice mean multiplier equals `load_level`.
pub fn synth_trace(
    load_level: f64,
    pattern: Pattern,
    horizon: usize,
    seed: u64,
    num_slices: usize,
) -> Result<TrafficTrace> {
    if !(0.0..=MAX_LOAD).contains(&load_level) {
        return Err(Error::InvalidConfig(format!(
            "load level {load_level} outside [0, {MAX_LOAD}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(num_slices);
    for _ in 0..num_slices {
        let shape: Vec<f64> = match pattern {
            Pattern::Constant => vec![1.0; horizon],
            Pattern::Diurnal => {
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let start = rng.gen_range(0..DIURNAL_PERIOD);
                (0..horizon)
                    .map(|t| {
                        let x = std::f64::consts::TAU * (t + start) as f64 / DIURNAL_PERIOD as f64;
                        let noise: f64 = rng.sample(StandardNormal);
                        (1.0 + 0.5 * (x + phase * 0.25).sin() + 0.05 * noise).max(0.0)
                    })
                    .collect()
            }
            Pattern::Bursty => {
                let mut burst = false;
                (0..horizon)
                    .map(|_| {
                        burst = if burst {
                            rng.gen::<f64>() > 0.3
                        } else {
                            rng.gen::<f64>() < 0.08
                        };
                        let noise: f64 = rng.sample(StandardNormal);
                        let level = if burst { 2.0 } else { 1.0 };
                        (level + 0.1 * noise).max(0.0)
                    })
                    .collect()
            }
        };
        let mean = shape.iter().sum::<f64>() / horizon.max(1) as f64;
        let scale = if mean > 0.0 { load_level / mean } else { 0.0 };
        columns.push(shape.into_iter().map(|v| v * scale).collect());
    }
    let multipliers = (0..horizon).map(|t| columns.iter().map(|c| c[t]).collect()).collect();
    Ok(TrafficTrace::from_multipliers(multipliers))
}

/// Content hash of a trace's inputs, used as a cache key.
pub fn trace_cache_key(input: &[u8], mapping: &MappingConfig, horizon: usize, dt: f64) -> String {
    let mut h = Sha256::new();
    h.update(input);
    h.update(serde_json::to_vec(mapping).expect("mapping serialises"));
    h.update(horizon.to_le_bytes());
    h.update(dt.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads a CDR-derived trace from `cache_dir` when present, otherwise builds and stores it.
pub fn cached_cdr_trace(
    path: impl AsRef<Path>,
    mapping: &MappingConfig,
    horizon: usize,
    dt: f64,
    cache_dir: impl AsRef<Path>,
) -> Result<TrafficTrace> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let key = trace_cache_key(&bytes, mapping, horizon, dt);
    let cache_dir = cache_dir.as_ref();
    let cached: PathBuf = cache_dir.join(format!("trace-{key}.json"));
    if let Ok(text) = std::fs::read_to_string(&cached) {
        if let Ok(trace) = serde_json::from_str::<TrafficTrace>(&text) {
            return Ok(trace);
        }
    }
    let records = load_cdr(path, None, None)?;
    let trace = cdr_to_trace(&records, mapping, horizon, dt)?;
    std::fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    std::fs::write(&cached, serde_json::to_vec(&trace)?).map_err(|e| Error::io(&cached, e))?;
    Ok(trace)
}
