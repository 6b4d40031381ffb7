//! Benchmark profile ingestion: characteristic tables, power-performance
//! tables, multi-rail current traces and device descriptions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigDoc, ConfigError, Section};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate benchmark `{0}`")]
    DuplicateBenchmark(String),
    #[error("row {row}, column `{column}`: {message}")]
    RangeViolation {
        row: usize,
        column: String,
        message: String,
    },
    #[error("sample {row}: time {time} does not increase")]
    NonMonotonicTime { row: usize, time: f64 },
    #[error("rail `{0}` has no configured voltage")]
    UnknownRail(String),
    #[error("row {row}: negative current {value} A on rail `{rail}`")]
    NegativeCurrent { row: usize, rail: String, value: f64 },
    #[error("trace needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("window [{t0}, {t1}] is empty or outside the trace span")]
    EmptyWindow { t0: f64, t1: f64 },
    #[error("window has zero duration")]
    ZeroDuration,
    #[error("zero energy in window; instructions per joule undefined")]
    ZeroEnergy,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Non-fatal findings collected while ingesting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IngestWarning {
    NegativeCurrentClamped { rail: String, row: usize, value: f64 },
    Consistency {
        device: String,
        benchmark: String,
        field: String,
        supplied: f64,
        derived: f64,
    },
}

// ---------------------------------------------------------------------------
// Characteristics

/// Microarchitecture-independent profile of one benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicVector {
    pub benchmark_id: String,
    pub registers_per_thread: u64,
    pub shared_mem_per_block: u64,
    pub branch_efficiency: f64,
    pub thread_batch_efficiency: f64,
    pub kernel_count: u64,
    pub thread_count: u64,
    pub dynamic_instructions: u64,
    pub local_mem_inst: u64,
    pub global_mem_inst: u64,
    pub shared_mem_inst: u64,
    pub branch_inst: u64,
    pub divergent_branches: u64,
    pub atomic_inst: u64,
    pub d2h_bytes: u64,
    pub h2d_bytes: u64,
    pub offchip_efficiency: f64,
}

pub const CHARACTERISTIC_COLUMNS: [&str; 17] = [
    "benchmark",
    "regs_per_thread",
    "shared_mem_per_block",
    "branch_eff_pct",
    "tbatch_eff_pct",
    "kernel_count",
    "thread_count",
    "dyn_inst",
    "local_inst",
    "global_inst",
    "shared_inst",
    "branch_inst",
    "div_branches",
    "atomic_inst",
    "d2h_bytes",
    "h2d_bytes",
    "offchip_eff_pct",
];

impl CharacteristicVector {
    /// Numeric features in canonical column order (benchmark id excluded).
    pub fn features(&self) -> [f64; 16] {
        [
            self.registers_per_thread as f64,
            self.shared_mem_per_block as f64,
            self.branch_efficiency,
            self.thread_batch_efficiency,
            self.kernel_count as f64,
            self.thread_count as f64,
            self.dynamic_instructions as f64,
            self.local_mem_inst as f64,
            self.global_mem_inst as f64,
            self.shared_mem_inst as f64,
            self.branch_inst as f64,
            self.divergent_branches as f64,
            self.atomic_inst as f64,
            self.d2h_bytes as f64,
            self.h2d_bytes as f64,
            self.offchip_efficiency,
        ]
    }

    pub fn feature_names() -> Vec<String> {
        CHARACTERISTIC_COLUMNS[1..].iter().map(|s| s.to_string()).collect()
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.benchmark_id.clone(),
            self.registers_per_thread.to_string(),
            self.shared_mem_per_block.to_string(),
            self.branch_efficiency.to_string(),
            self.thread_batch_efficiency.to_string(),
            self.kernel_count.to_string(),
            self.thread_count.to_string(),
            self.dynamic_instructions.to_string(),
            self.local_mem_inst.to_string(),
            self.global_mem_inst.to_string(),
            self.shared_mem_inst.to_string(),
            self.branch_inst.to_string(),
            self.divergent_branches.to_string(),
            self.atomic_inst.to_string(),
            self.d2h_bytes.to_string(),
            self.h2d_bytes.to_string(),
            self.offchip_efficiency.to_string(),
        ]
    }
}

/// Column lookup for one CSV record, carrying the row number for errors.
struct Row<'a> {
    row: usize,
    record: &'a csv::StringRecord,
    index: &'a BTreeMap<String, usize>,
}

impl Row<'_> {
    fn raw(&self, column: &str) -> &str {
        self.record.get(self.index[column]).unwrap_or("").trim()
    }

    fn violation(&self, column: &str, message: impl Into<String>) -> IngestError {
        IngestError::RangeViolation {
            row: self.row,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn count(&self, column: &str) -> Result<u64, IngestError> {
        let raw = self.raw(column);
        raw.parse::<u64>().map_err(|_| {
            self.violation(column, format!("`{raw}` is not a non-negative integer"))
        })
    }

    fn opt_count(&self, column: &str) -> Result<Option<u64>, IngestError> {
        if self.raw(column).is_empty() {
            Ok(None)
        } else {
            self.count(column).map(Some)
        }
    }

    fn real(&self, column: &str) -> Result<f64, IngestError> {
        self.opt_real(column)?
            .ok_or_else(|| self.violation(column, "value required"))
    }

    fn opt_real(&self, column: &str) -> Result<Option<f64>, IngestError> {
        let raw = self.raw(column);
        if raw.is_empty() {
            return Ok(None);
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(self.violation(column, format!("`{raw}` is not a finite number"))),
        }
    }

    fn percent(&self, column: &str) -> Result<f64, IngestError> {
        let v = self.real(column)?;
        if !(0.0..=100.0).contains(&v) {
            return Err(self.violation(column, format!("{v} outside [0, 100]")));
        }
        Ok(v)
    }
}

fn column_index(
    headers: &csv::StringRecord,
    expected: &[&str],
) -> Result<BTreeMap<String, usize>, IngestError> {
    let mut index = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if !expected.contains(&h) {
            return Err(IngestError::UnknownColumn(h.to_string()));
        }
        index.insert(h.to_string(), i);
    }
    if let Some(missing) = expected.iter().find(|c| !index.contains_key(**c)) {
        return Err(IngestError::MissingColumn(missing.to_string()));
    }
    Ok(index)
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader)
}

pub fn parse_characteristics(path: &Path) -> Result<Vec<CharacteristicVector>, IngestError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_characteristics(file)
}

pub fn read_characteristics<R: Read>(reader: R) -> Result<Vec<CharacteristicVector>, IngestError> {
    let mut rdr = csv_reader(reader);
    let index = column_index(rdr.headers()?, &CHARACTERISTIC_COLUMNS)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = Row {
            row: i + 1,
            record: &record,
            index: &index,
        };
        let id = row.raw("benchmark").to_string();
        if id.is_empty() {
            return Err(row.violation("benchmark", "empty benchmark id"));
        }
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateBenchmark(id));
        }
        let v = CharacteristicVector {
            benchmark_id: id,
            registers_per_thread: row.count("regs_per_thread")?,
            shared_mem_per_block: row.count("shared_mem_per_block")?,
            branch_efficiency: row.percent("branch_eff_pct")?,
            thread_batch_efficiency: row.percent("tbatch_eff_pct")?,
            kernel_count: row.count("kernel_count")?,
            thread_count: row.count("thread_count")?,
            dynamic_instructions: row.count("dyn_inst")?,
            local_mem_inst: row.count("local_inst")?,
            global_mem_inst: row.count("global_inst")?,
            shared_mem_inst: row.count("shared_inst")?,
            branch_inst: row.count("branch_inst")?,
            divergent_branches: row.count("div_branches")?,
            atomic_inst: row.count("atomic_inst")?,
            d2h_bytes: row.count("d2h_bytes")?,
            h2d_bytes: row.count("h2d_bytes")?,
            offchip_efficiency: row.percent("offchip_eff_pct")?,
        };
        if v.divergent_branches > v.branch_inst {
            return Err(row.violation(
                "div_branches",
                format!(
                    "{} divergent branches exceed {} branch instructions",
                    v.divergent_branches, v.branch_inst
                ),
            ));
        }
        out.push(v);
    }
    Ok(out)
}

/// Canonical CSV form: fixed column order, integers verbatim, reals in
/// shortest round-trip notation.
pub fn write_characteristics<W: Write>(
    rows: &[CharacteristicVector],
    writer: W,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CHARACTERISTIC_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Power-performance

/// Power-performance metrics of one benchmark on one device.
///
/// `ipw` is instructions per joule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPerfVector {
    pub benchmark_id: String,
    pub device_id: String,
    pub avg_power: f64,
    pub peak_power: f64,
    pub total_energy: f64,
    pub ipw: f64,
    pub edp: f64,
    pub ipc: Option<f64>,
    pub ips: f64,
    pub duration: f64,
    pub comm_overhead: Option<u64>,
    pub max_temp: Option<f64>,
}

impl PowerPerfVector {
    pub fn with_ids(mut self, benchmark: &str, device: &str) -> Self {
        self.benchmark_id = benchmark.to_string();
        self.device_id = device.to_string();
        self
    }

    pub fn instructions(&self) -> f64 {
        self.ipw * self.total_energy
    }

    /// Feature row used by the power-track statistics. `max_temp` is
    /// deliberately absent.
    pub fn features(&self) -> Vec<Option<f64>> {
        vec![
            Some(self.avg_power),
            Some(self.peak_power),
            Some(self.total_energy),
            Some(self.ipw),
            Some(self.edp),
            self.ipc,
            Some(self.ips),
            Some(self.duration),
            self.comm_overhead.map(|c| c as f64),
        ]
    }

    pub fn feature_names() -> Vec<String> {
        [
            "avg_power_w",
            "peak_power_w",
            "energy_j",
            "ipw",
            "edp_js",
            "ipc",
            "ips",
            "duration_s",
            "comm_ops",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}

pub const POWERPERF_COLUMNS: [&str; 12] = [
    "device",
    "benchmark",
    "avg_power_w",
    "peak_power_w",
    "energy_j",
    "ipw",
    "edp_js",
    "ipc",
    "ips",
    "duration_s",
    "comm_ops",
    "max_temp_c",
];

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PowerPerfTable {
    pub rows: Vec<PowerPerfVector>,
    pub warnings: Vec<IngestWarning>,
}

impl PowerPerfTable {
    pub fn device_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.device_id) {
                out.push(r.device_id.clone());
            }
        }
        out
    }

    pub fn for_device<'a>(&'a self, device: &'a str) -> impl Iterator<Item = &'a PowerPerfVector> + 'a {
        self.rows.iter().filter(move |r| r.device_id == device)
    }
}

const CONSISTENCY_TOL: f64 = 0.01;

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn parse_powerperf(path: &Path) -> Result<PowerPerfTable, IngestError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_powerperf(file)
}

/// Reads a power-performance table, deriving blank `duration_s`, `edp_js`,
/// `ipw` and `ips` from the other columns where possible and cross-checking
/// supplied values against their derivations (1% tolerance).
pub fn read_powerperf<R: Read>(reader: R) -> Result<PowerPerfTable, IngestError> {
    let mut rdr = csv_reader(reader);
    let index = column_index(rdr.headers()?, &POWERPERF_COLUMNS)?;
    let mut seen = BTreeSet::new();
    let mut table = PowerPerfTable::default();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = Row {
            row: i + 1,
            record: &record,
            index: &index,
        };
        let device = row.raw("device").to_string();
        let bench = row.raw("benchmark").to_string();
        if device.is_empty() || bench.is_empty() {
            return Err(row.violation("benchmark", "device and benchmark ids required"));
        }
        if !seen.insert((device.clone(), bench.clone())) {
            return Err(IngestError::DuplicateBenchmark(format!("{device}/{bench}")));
        }
        let avg = row.real("avg_power_w")?;
        let peak = row.real("peak_power_w")?;
        let energy = row.real("energy_j")?;
        if avg < 0.0 {
            return Err(row.violation("avg_power_w", "negative power"));
        }
        if avg > peak {
            return Err(row.violation(
                "peak_power_w",
                format!("peak {peak} W below average {avg} W"),
            ));
        }
        if energy <= 0.0 {
            return Err(row.violation("energy_j", "energy must be positive"));
        }
        let ipw_in = row.opt_real("ipw")?;
        let edp_in = row.opt_real("edp_js")?;
        let ips_in = row.opt_real("ips")?;
        let dur_in = row.opt_real("duration_s")?;
        let ipc = row.opt_real("ipc")?;
        let comm = row.opt_count("comm_ops")?;
        let temp = row.opt_real("max_temp_c")?;

        let duration = match (dur_in, edp_in) {
            (Some(d), _) => d,
            (None, Some(edp)) => edp / energy,
            (None, None) if avg > 0.0 => energy / avg,
            _ => return Err(row.violation("duration_s", "cannot derive duration")),
        };
        if duration <= 0.0 {
            return Err(row.violation("duration_s", "duration must be positive"));
        }
        let edp = edp_in.unwrap_or(energy * duration);
        let ipw = match (ipw_in, ips_in) {
            (Some(v), _) => v,
            (None, Some(ips)) => ips * duration / energy,
            (None, None) => return Err(row.violation("ipw", "neither ipw nor ips supplied")),
        };
        let ips = ips_in.unwrap_or(ipw * energy / duration);

        let mut check = |field: &str, supplied: f64, derived: f64| {
            if rel_gap(supplied, derived) > CONSISTENCY_TOL {
                warn!(
                    "{device}/{bench}: {field} = {supplied} disagrees with derived {derived}"
                );
                table.warnings.push(IngestWarning::Consistency {
                    device: device.clone(),
                    benchmark: bench.clone(),
                    field: field.to_string(),
                    supplied,
                    derived,
                });
            }
        };
        if dur_in.is_some() {
            check("energy_j", energy, avg * duration);
            if let Some(e) = edp_in {
                check("edp_js", e, energy * duration);
            }
        }
        if let (Some(w), Some(s)) = (ipw_in, ips_in) {
            check("ips", s, w * energy / duration);
        }

        table.rows.push(PowerPerfVector {
            benchmark_id: bench,
            device_id: device,
            avg_power: avg,
            peak_power: peak,
            total_energy: energy,
            ipw,
            edp,
            ipc,
            ips,
            duration,
            comm_overhead: comm,
            max_temp: temp,
        });
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Power traces

/// Nominal rail voltages keyed by rail name.
pub type RailConfig = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeCurrentPolicy {
    #[default]
    Clamp,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rail {
    pub name: String,
    pub volts: f64,
    pub currents: Vec<f64>,
}

/// Sampled device power, either measured per rail or synthesized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub sample_times: Vec<f64>,
    pub rails: Vec<Rail>,
    pub derived_power: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub trace: PowerTrace,
    pub warnings: Vec<IngestWarning>,
}

impl PowerTrace {
    /// Builds a trace from rails, validating shape and time order.
    pub fn from_rails(sample_times: Vec<f64>, rails: Vec<Rail>) -> Result<Self, IngestError> {
        if sample_times.len() < 2 {
            return Err(IngestError::TooFewSamples(sample_times.len()));
        }
        for (i, w) in sample_times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(IngestError::NonMonotonicTime {
                    row: i + 2,
                    time: w[1],
                });
            }
        }
        let n = sample_times.len();
        let mut derived_power = vec![0.0; n];
        for rail in &rails {
            if rail.currents.len() != n {
                return Err(IngestError::RangeViolation {
                    row: rail.currents.len().min(n),
                    column: rail.name.clone(),
                    message: "rail series length differs from time series".into(),
                });
            }
            for (p, i) in derived_power.iter_mut().zip(&rail.currents) {
                *p += rail.volts * i;
            }
        }
        Ok(PowerTrace {
            sample_times,
            rails,
            derived_power,
        })
    }

    /// Wraps an already-computed power series as a single 1 V virtual rail.
    pub fn from_power(sample_times: Vec<f64>, power: Vec<f64>) -> Result<Self, IngestError> {
        Self::from_rails(
            sample_times,
            vec![Rail {
                name: "synthetic".into(),
                volts: 1.0,
                currents: power,
            }],
        )
    }

    pub fn start(&self) -> f64 {
        self.sample_times[0]
    }

    pub fn end(&self) -> f64 {
        *self.sample_times.last().unwrap()
    }

    /// Linearly interpolated power at `t` (must lie inside the span).
    pub fn power_at(&self, t: f64) -> f64 {
        let ts = &self.sample_times;
        let idx = ts.partition_point(|&s| s <= t);
        if idx == 0 {
            return self.derived_power[0];
        }
        if idx >= ts.len() {
            return *self.derived_power.last().unwrap();
        }
        let (a, b) = (idx - 1, idx);
        if ts[a] == t {
            return self.derived_power[a];
        }
        let f = (t - ts[a]) / (ts[b] - ts[a]);
        self.derived_power[a] + f * (self.derived_power[b] - self.derived_power[a])
    }

    /// Vertices of the piecewise-linear power curve restricted to `[t0, t1]`.
    fn window_points(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        let mut pts = vec![(t0, self.power_at(t0))];
        for (&t, &p) in self.sample_times.iter().zip(&self.derived_power) {
            if t > t0 && t < t1 {
                pts.push((t, p));
            }
        }
        pts.push((t1, self.power_at(t1)));
        pts
    }

    /// Trapezoidal energy over `[t0, t1]`.
    pub fn energy(&self, t0: f64, t1: f64) -> Result<f64, IngestError> {
        self.check_window(t0, t1)?;
        Ok(self
            .window_points(t0, t1)
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum())
    }

    fn check_window(&self, t0: f64, t1: f64) -> Result<(), IngestError> {
        if t1 == t0 {
            return Err(IngestError::ZeroDuration);
        }
        if !(t1 > t0) || t0 < self.start() || t1 > self.end() {
            return Err(IngestError::EmptyWindow { t0, t1 });
        }
        Ok(())
    }
}

/// Parses `time_s,i_<rail>_a,...` into a power trace.
pub fn parse_power_trace(
    path: &Path,
    rails: &RailConfig,
    policy: NegativeCurrentPolicy,
) -> Result<ParsedTrace, IngestError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_power_trace(file, rails, policy)
}

pub fn read_power_trace<R: Read>(
    reader: R,
    rails: &RailConfig,
    policy: NegativeCurrentPolicy,
) -> Result<ParsedTrace, IngestError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut time_col = None;
    let mut rail_cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if h == "time_s" {
            time_col = Some(i);
            continue;
        }
        let name = h
            .strip_prefix("i_")
            .and_then(|r| r.strip_suffix("_a"))
            .filter(|r| !r.is_empty())
            .ok_or_else(|| IngestError::UnknownColumn(h.to_string()))?;
        let volts = *rails
            .get(name)
            .ok_or_else(|| IngestError::UnknownRail(name.to_string()))?;
        rail_cols.push((i, Rail {
            name: name.to_string(),
            volts,
            currents: Vec::new(),
        }));
    }
    let time_col = time_col.ok_or_else(|| IngestError::MissingColumn("time_s".into()))?;
    if rail_cols.is_empty() {
        return Err(IngestError::MissingColumn("i_<rail>_a".into()));
    }

    let mut warnings = Vec::new();
    let mut times = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let num = |col: usize, name: &str| -> Result<f64, IngestError> {
            let raw = record.get(col).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| IngestError::RangeViolation {
                    row,
                    column: name.to_string(),
                    message: format!("`{raw}` is not a finite number"),
                })
        };
        times.push(num(time_col, "time_s")?);
        for (col, rail) in rail_cols.iter_mut() {
            let mut amps = num(*col, &rail.name)?;
            if amps < 0.0 {
                match policy {
                    NegativeCurrentPolicy::Reject => {
                        return Err(IngestError::NegativeCurrent {
                            row,
                            rail: rail.name.clone(),
                            value: amps,
                        })
                    }
                    NegativeCurrentPolicy::Clamp => {
                        warn!("row {row}: clamping {amps} A on rail {} to 0", rail.name);
                        warnings.push(IngestWarning::NegativeCurrentClamped {
                            rail: rail.name.clone(),
                            row,
                            value: amps,
                        });
                        amps = 0.0;
                    }
                }
            }
            rail.currents.push(amps);
        }
    }
    let trace = PowerTrace::from_rails(times, rail_cols.into_iter().map(|(_, r)| r).collect())?;
    Ok(ParsedTrace { trace, warnings })
}

/// Hardware counters attached to a measured window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunCounters {
    pub instructions: u64,
    pub cycles: u64,
    pub comm_overhead: u64,
}

/// Reduces a trace window to power-performance metrics. Identifiers are left
/// blank; attach them with [`PowerPerfVector::with_ids`].
pub fn trace_to_powerperf(
    trace: &PowerTrace,
    counters: &RunCounters,
    window: (f64, f64),
) -> Result<PowerPerfVector, IngestError> {
    let (t0, t1) = window;
    trace.check_window(t0, t1)?;
    let duration = t1 - t0;
    let energy = trace.energy(t0, t1)?;
    if energy <= 0.0 {
        return Err(IngestError::ZeroEnergy);
    }
    let peak = trace
        .window_points(t0, t1)
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let instructions = counters.instructions as f64;
    Ok(PowerPerfVector {
        benchmark_id: String::new(),
        device_id: String::new(),
        avg_power: energy / duration,
        peak_power: peak,
        total_energy: energy,
        ipw: instructions / energy,
        edp: energy * duration,
        ipc: (counters.cycles > 0).then(|| instructions / counters.cycles as f64),
        ips: instructions / duration,
        duration,
        comm_overhead: Some(counters.comm_overhead),
        max_temp: None,
    })
}

// ---------------------------------------------------------------------------
// Devices and kernels

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueModel {
    /// One hardware launch queue shared by all streams.
    Single,
    /// Independent hardware queues per stream.
    Multi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub device_id: String,
    pub queue_model: QueueModel,
    pub hw_queue_count: u32,
    pub copy_engines: u32,
    pub sm_count: u32,
    pub regs_per_sm: u64,
    pub shared_mem_per_sm: u64,
    pub max_threads_per_sm: u64,
    pub max_blocks_per_sm: u64,
    pub idle_power: f64,
    pub tdp: f64,
    pub h2d_bandwidth: f64,
    pub d2h_bandwidth: f64,
}

const DEVICE_KEYS: [&str; 13] = [
    "device_id",
    "queue_model",
    "hw_queue_count",
    "copy_engines",
    "sm_count",
    "regs_per_sm",
    "shared_mem_per_sm",
    "max_threads_per_sm",
    "max_blocks_per_sm",
    "idle_power",
    "tdp",
    "h2d_bandwidth",
    "d2h_bandwidth",
];

impl DeviceModel {
    pub fn from_section(s: &Section) -> Result<Self, ConfigError> {
        s.check_keys(&DEVICE_KEYS)?;
        let queue_model = match s.require("queue_model")? {
            "single" => QueueModel::Single,
            "multi" => QueueModel::Multi,
            _ => return Err(s.bad_value("queue_model", "expected `single` or `multi`")),
        };
        let default_queues = match queue_model {
            QueueModel::Single => 1,
            QueueModel::Multi => 32,
        };
        let d = DeviceModel {
            device_id: s.require("device_id")?.to_string(),
            queue_model,
            hw_queue_count: s.parse_or("hw_queue_count", default_queues)?,
            copy_engines: s.parse_req("copy_engines")?,
            sm_count: s.parse_req("sm_count")?,
            regs_per_sm: s.parse_req("regs_per_sm")?,
            shared_mem_per_sm: s.parse_req("shared_mem_per_sm")?,
            max_threads_per_sm: s.parse_req("max_threads_per_sm")?,
            max_blocks_per_sm: s.parse_req("max_blocks_per_sm")?,
            idle_power: s.parse_req("idle_power")?,
            tdp: s.parse_req("tdp")?,
            h2d_bandwidth: s.parse_req("h2d_bandwidth")?,
            d2h_bandwidth: s.parse_req("d2h_bandwidth")?,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(format!("device {}: {m}", self.device_id)));
        if self.device_id.is_empty() {
            return bad("empty device_id".into());
        }
        if !(self.idle_power >= 0.0 && self.idle_power < self.tdp) {
            return bad(format!("idle_power {} must be below tdp {}", self.idle_power, self.tdp));
        }
        if !matches!(self.copy_engines, 1 | 2) {
            return bad(format!("copy_engines must be 1 or 2, got {}", self.copy_engines));
        }
        if self.queue_model == QueueModel::Single && self.hw_queue_count != 1 {
            return bad("single queue model requires hw_queue_count = 1".into());
        }
        let counts = [
            self.hw_queue_count as u64,
            self.sm_count as u64,
            self.regs_per_sm,
            self.shared_mem_per_sm,
            self.max_threads_per_sm,
            self.max_blocks_per_sm,
        ];
        if counts.contains(&0) {
            return bad("all counts must be >= 1".into());
        }
        if !(self.h2d_bandwidth > 0.0 && self.d2h_bandwidth > 0.0) {
            return bad("bandwidths must be positive".into());
        }
        Ok(())
    }
}

pub fn parse_device(path: &Path) -> Result<DeviceModel, IngestError> {
    let doc = ConfigDoc::load(path)?;
    Ok(DeviceModel::from_section(doc.require("device")?)?)
}

/// Launch shape and cost model of one kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kernel_id: String,
    pub grid_blocks: u64,
    pub threads_per_block: u64,
    pub regs_per_thread: u64,
    pub shared_mem_per_block: u64,
    /// Seconds one block stays resident.
    pub block_duration: f64,
    /// Device-wide watts with the whole grid resident.
    pub dynamic_power: f64,
    pub instructions: u64,
}

const KERNEL_KEYS: [&str; 7] = [
    "grid_blocks",
    "threads_per_block",
    "regs_per_thread",
    "shared_mem_per_block",
    "block_duration",
    "dynamic_power",
    "instructions",
];

impl KernelSpec {
    pub fn from_section(id: &str, s: &Section) -> Result<Self, ConfigError> {
        s.check_keys(&KERNEL_KEYS)?;
        let k = KernelSpec {
            kernel_id: id.to_string(),
            grid_blocks: s.parse_req("grid_blocks")?,
            threads_per_block: s.parse_req("threads_per_block")?,
            regs_per_thread: s.parse_or("regs_per_thread", 0)?,
            shared_mem_per_block: s.parse_or("shared_mem_per_block", 0)?,
            block_duration: s.parse_req("block_duration")?,
            dynamic_power: s.parse_or("dynamic_power", 0.0)?,
            instructions: s.parse_or("instructions", 0)?,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(format!("kernel {}: {m}", self.kernel_id)));
        if self.grid_blocks < 1 {
            return bad("grid_blocks must be >= 1");
        }
        if self.threads_per_block < 1 {
            return bad("threads_per_block must be >= 1");
        }
        if !(self.block_duration > 0.0 && self.block_duration.is_finite()) {
            return bad("block_duration must be positive");
        }
        if !(self.dynamic_power >= 0.0 && self.dynamic_power.is_finite()) {
            return bad("dynamic_power must be non-negative");
        }
        Ok(())
    }
}
