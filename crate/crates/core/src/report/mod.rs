//! Pipeline orchestration and report emission.
//!
//! Stages: ingest → characterize → ensemble → pair → simulate → report. Each
//! stage writes a JSON artifact into the output directory and later stages
//! can resume from those artifacts.

pub mod config;
pub mod svg;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{PairgenConfig, RunConfig, Scenario, TraceInput};
pub use svg::{emit_dendrogram, emit_scatter, render_dendrogram, render_scatter, PlotError};

use crate::config::ConfigError;
use crate::ensemble::{build_database, ensemble_stages, ConsensusResult, EnsembleError, EnsembleInputs, EnsembleStages, WorkloadDatabase};
use crate::ingest::{
    parse_characteristics, parse_device, parse_power_trace, parse_powerperf, trace_to_powerperf, CharacteristicVector,
    DeviceModel, IngestError, IngestWarning, PowerPerfVector, RunCounters,
};
use crate::metrics::{concurrency_report, metrics_csv, ConcurrencyReport};
use crate::pairgen::{generate_sets, MultiKernelSpec, PairgenError, PairgenParams, Strategy};
use crate::statkit::{
    cut_dendrogram, hcluster, kmeans, pca, standardize, ColumnStats, Dendrogram, FeatureMatrix, KMeansResult,
    PartitionLabeling, PcaResult, StatsError,
};
use crate::streamsim::{build_stream_programs, sequential_baseline, simulate, SimResult};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{0}")]
    Validation(String),
    #[error("{track}: {source}")]
    Stats {
        track: String,
        #[source]
        source: StatsError,
    },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Pairgen(#[from] PairgenError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ReportError {
    /// 1 for invalid input or configuration, 2 for failures inside the pipeline.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Config(_) | ReportError::Ingest(_) | ReportError::Validation(_) => 1,
            _ => 2,
        }
    }
}

/// A failure attached to the bundle instead of aborting the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub spec_id: Option<String>,
    pub device_id: Option<String>,
    pub message: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ReportError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// ingest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutput {
    pub characteristics: Vec<CharacteristicVector>,
    pub powerperf: Vec<PowerPerfVector>,
    pub warnings: Vec<IngestWarning>,
    pub devices: Vec<DeviceModel>,
}

impl IngestOutput {
    pub fn benchmark_ids(&self) -> Vec<String> {
        self.characteristics.iter().map(|c| c.benchmark_id.clone()).collect()
    }

    /// Devices with power-performance rows, in first-appearance order.
    pub fn power_devices(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.powerperf
            .iter()
            .filter(|r| seen.insert(r.device_id.clone()))
            .map(|r| r.device_id.clone())
            .collect()
    }
}

pub fn run_ingest(cfg: &RunConfig) -> Result<IngestOutput, ReportError> {
    let characteristics = parse_characteristics(&cfg.resolve(&cfg.characteristics))?;
    if characteristics.len() < 2 {
        return Err(ReportError::Validation(format!(
            "need at least 2 benchmarks, got {}",
            characteristics.len()
        )));
    }
    let (mut powerperf, mut warnings) = match &cfg.powerperf {
        Some(p) => {
            let t = parse_powerperf(&cfg.resolve(p))?;
            (t.rows, t.warnings)
        }
        None => (Vec::new(), Vec::new()),
    };
    for t in &cfg.traces {
        let parsed = parse_power_trace(&cfg.resolve(&t.file), &cfg.rails, cfg.negative_current)?;
        warnings.extend(parsed.warnings);
        let counters = RunCounters {
            instructions: t.instructions,
            cycles: t.cycles,
            comm_overhead: t.comm_ops,
        };
        let row = trace_to_powerperf(&parsed.trace, &counters, (t.t0, t.t1))?.with_ids(&t.benchmark, &t.device);
        info!("trace {}: {:.3} J over {:.3} s", t.name, row.total_energy, row.duration);
        powerperf.push(row);
    }
    let mut seen = BTreeSet::new();
    for r in &powerperf {
        if !seen.insert((r.device_id.clone(), r.benchmark_id.clone())) {
            return Err(ReportError::Validation(format!(
                "duplicate power-performance row for {} on {}",
                r.benchmark_id, r.device_id
            )));
        }
    }
    let devices = cfg
        .devices
        .iter()
        .map(|d| parse_device(&cfg.resolve(d)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IngestOutput {
        characteristics,
        powerperf,
        warnings,
        devices,
    })
}

// ---------------------------------------------------------------------------
// characterize

/// Standardization, PCA and both clusterings for one feature track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackAnalysis {
    pub track: String,
    pub device_id: Option<String>,
    pub column_stats: Vec<ColumnStats>,
    pub dropped_columns: Vec<String>,
    pub pca: PcaResult,
    pub kmeans: KMeansResult,
    pub dendrogram: Dendrogram,
    pub hierarchical: PartitionLabeling,
}

impl TrackAnalysis {
    pub fn name(&self) -> String {
        match &self.device_id {
            Some(d) => format!("{}_{}", self.track, d),
            None => self.track.clone(),
        }
    }
}

/// PCA retaining up to `n_pc` components, then k-means and average-linkage
/// clustering in the retained score space.
pub fn analyze_track(
    track: &str,
    device_id: Option<&str>,
    raw: &FeatureMatrix,
    n_pc: usize,
    k: usize,
    seed: u64,
) -> Result<TrackAnalysis, StatsError> {
    let std = standardize(raw)?;
    let pc = match pca(&std, n_pc) {
        Err(StatsError::RankDeficient { rank, .. }) if rank > 0 => {
            warn!("{track}: rank {rank} < {n_pc} requested components, keeping {rank}");
            pca(&std, rank)?
        }
        r => r?,
    };
    let scores = FeatureMatrix::new(
        pc.row_ids.clone(),
        (1..=pc.n_components()).map(|i| format!("PC{i}")).collect(),
        pc.scores.clone(),
    )?;
    let km = kmeans(&scores, k, seed)?;
    let dendrogram = hcluster(&scores)?;
    let hierarchical = cut_dendrogram(&dendrogram, k)?;
    Ok(TrackAnalysis {
        track: track.to_string(),
        device_id: device_id.map(str::to_string),
        column_stats: std.column_stats,
        dropped_columns: std.dropped_columns,
        pca: pc,
        kmeans: km,
        dendrogram,
        hierarchical,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizeOutput {
    pub k: usize,
    pub characteristics: TrackAnalysis,
    pub power: Vec<TrackAnalysis>,
}

fn characteristic_matrix(rows: &[CharacteristicVector]) -> Result<FeatureMatrix, StatsError> {
    FeatureMatrix::new(
        rows.iter().map(|r| r.benchmark_id.clone()).collect(),
        CharacteristicVector::feature_names(),
        rows.iter().map(|r| r.features().to_vec()).collect(),
    )
}

/// Power-track matrix for one device, rows in `ids` order. Metrics missing
/// for any benchmark are left out.
pub fn power_matrix(ingest: &IngestOutput, device: &str, ids: &[String]) -> Result<FeatureMatrix, ReportError> {
    let rows: Vec<&PowerPerfVector> = ids
        .iter()
        .map(|id| {
            ingest
                .powerperf
                .iter()
                .find(|r| r.device_id == device && &r.benchmark_id == id)
                .ok_or_else(|| ReportError::Validation(format!("no power-performance row for {id} on {device}")))
        })
        .collect::<Result<_, _>>()?;
    let names = PowerPerfVector::feature_names();
    let feats: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.features()).collect();
    let keep: Vec<usize> = (0..names.len()).filter(|&c| feats.iter().all(|f| f[c].is_some())).collect();
    let dropped: Vec<String> = (0..names.len())
        .filter(|c| !keep.contains(c))
        .map(|c| names[c].clone())
        .collect();
    for d in &dropped {
        warn!("{device}: `{d}` missing for some benchmarks, left out of the power track");
    }
    let mut m = FeatureMatrix::new(
        ids.to_vec(),
        keep.iter().map(|&c| names[c].clone()).collect(),
        feats.iter().map(|f| keep.iter().map(|&c| f[c].unwrap()).collect()).collect(),
    )
    .map_err(|source| ReportError::Stats {
        track: format!("power_{device}"),
        source,
    })?;
    m.dropped_columns = dropped;
    Ok(m)
}

pub fn run_characterize(cfg: &RunConfig, ingest: &IngestOutput) -> Result<CharacterizeOutput, ReportError> {
    let ids = ingest.benchmark_ids();
    let k = cfg.k.unwrap_or(ids.len().div_ceil(2));
    let stats = |track: String| move |source| ReportError::Stats { track, source };
    let raw = characteristic_matrix(&ingest.characteristics).map_err(stats("characteristics".into()))?;
    let characteristics =
        analyze_track("characteristics", None, &raw, cfg.n_pc_char, k, cfg.seed).map_err(stats("characteristics".into()))?;
    let devices = ingest.power_devices();
    if devices.is_empty() {
        return Err(ReportError::Validation("no power-performance data".into()));
    }
    let power = devices
        .iter()
        .map(|d| {
            let m = power_matrix(ingest, d, &ids)?;
            analyze_track("power", Some(d), &m, cfg.n_pc_power, k, cfg.seed).map_err(stats(format!("power_{d}")))
        })
        .collect::<Result<_, _>>()?;
    Ok(CharacterizeOutput {
        k,
        characteristics,
        power,
    })
}

// ---------------------------------------------------------------------------
// ensemble

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOutput {
    pub stages: EnsembleStages,
    pub database: WorkloadDatabase,
}

impl EnsembleOutput {
    pub fn consensus(&self) -> &ConsensusResult {
        &self.stages.final_consensus
    }
}

pub fn run_ensemble(cfg: &RunConfig, ch: &CharacterizeOutput) -> Result<EnsembleOutput, ReportError> {
    let inputs = EnsembleInputs {
        char_km: ch.characteristics.kmeans.labeling.clone(),
        char_hc: ch.characteristics.hierarchical.clone(),
        power_km: ch.power.iter().map(|t| t.kmeans.labeling.clone()).collect(),
        power_hc: ch.power.iter().map(|t| t.hierarchical.clone()).collect(),
    };
    let stages = ensemble_stages(&inputs, cfg.w_char, cfg.w_power, ch.k)?;
    let database = build_database(&stages.final_consensus, &ch.characteristics.pca, cfg.affinity)?;
    info!("consensus quality {:.4}", stages.final_consensus.quality);
    Ok(EnsembleOutput { stages, database })
}

// ---------------------------------------------------------------------------
// pair

pub fn run_pair(cfg: &RunConfig, db: &WorkloadDatabase) -> Result<Vec<MultiKernelSpec>, ReportError> {
    let params = PairgenParams {
        contending_quantile: cfg.pairgen.contending_quantile,
        launch_policy: cfg.pairgen.launch_policy.clone(),
        slice_size: cfg.pairgen.slice_bytes,
    };
    let mut specs = Vec::new();
    for &strategy in &cfg.pairgen.strategies {
        for &size in &cfg.pairgen.sizes {
            let curated = (strategy == Strategy::Coappearance).then_some(cfg.coappearance.as_slice());
            let mut sets = generate_sets(db, strategy, size, curated, &params)?;
            if cfg.pairgen.max_sets > 0 {
                sets.truncate(cfg.pairgen.max_sets);
            }
            specs.extend(sets);
        }
    }
    Ok(specs)
}

// ---------------------------------------------------------------------------
// simulate

/// Outcome of one workload set on one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub spec_id: String,
    pub strategy: Strategy,
    pub device_id: String,
    pub concurrent: Option<SimResult>,
    pub sequential: Option<SimResult>,
    pub report: Option<ConcurrencyReport>,
    pub error: Option<StageError>,
}

fn simulate_one(spec: &MultiKernelSpec, device: &DeviceModel, scenario: &Scenario) -> Result<SimulationRecord, String> {
    let programs = build_stream_programs(spec, &scenario.kernels, &scenario.templates).map_err(|e| e.to_string())?;
    let conc = simulate(device, &programs, &scenario.sim).map_err(|e| e.to_string())?;
    let seq = sequential_baseline(device, &programs, &scenario.sim).map_err(|e| e.to_string())?;
    let members = programs
        .iter()
        .map(|p| simulate(device, std::slice::from_ref(p), &scenario.sim))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let report = concurrency_report(spec, &members, &seq, &conc).map_err(|e| e.to_string())?;
    Ok(SimulationRecord {
        spec_id: spec.id.clone(),
        strategy: spec.strategy,
        device_id: device.device_id.clone(),
        concurrent: Some(conc),
        sequential: Some(seq),
        report: Some(report),
        error: None,
    })
}

fn failed(spec: &MultiKernelSpec, device_id: &str, message: String) -> SimulationRecord {
    SimulationRecord {
        spec_id: spec.id.clone(),
        strategy: spec.strategy,
        device_id: device_id.to_string(),
        concurrent: None,
        sequential: None,
        report: None,
        error: Some(StageError {
            stage: "simulate".into(),
            spec_id: Some(spec.id.clone()),
            device_id: (!device_id.is_empty()).then(|| device_id.to_string()),
            message,
        }),
    }
}

/// Every spec on every device; failures are recorded per record.
pub fn run_simulate(
    cfg: &RunConfig,
    devices: &[DeviceModel],
    specs: &[MultiKernelSpec],
) -> Result<Vec<SimulationRecord>, ReportError> {
    let scenario = match &cfg.scenario {
        Some(p) => Some(Scenario::load(&cfg.resolve(p))?),
        None => None,
    };
    let (Some(scenario), false) = (scenario, devices.is_empty()) else {
        return Ok(specs
            .iter()
            .map(|s| failed(s, "", "no scenario or device models configured".into()))
            .collect());
    };
    let jobs: Vec<(&MultiKernelSpec, &DeviceModel)> =
        specs.iter().flat_map(|s| devices.iter().map(move |d| (s, d))).collect();
    Ok(jobs
        .par_iter()
        .map(|(spec, device)| {
            simulate_one(spec, device, &scenario).unwrap_or_else(|m| {
                warn!("{} on {}: {m}", spec.id, device.device_id);
                failed(spec, &device.device_id, m)
            })
        })
        .collect())
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub track: String,
    pub device_id: Option<String>,
    pub rank: usize,
    pub explained_ratio: Vec<f64>,
    pub cumulative_ratio: f64,
    pub dropped_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub track: String,
    pub device_id: Option<String>,
    pub technique: String,
    pub labeling: PartitionLabeling,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Per-device suite means over all simulated sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteAggregate {
    pub runs: usize,
    pub concurrency: Option<f64>,
    pub ipo_avg: Option<f64>,
    pub ieo_pct: Option<f64>,
    pub ieo_rate: Option<f64>,
    pub edp_delta: Option<f64>,
    pub energy_efficiency: Option<f64>,
    pub ipw_conc: Option<f64>,
    pub ipw_seq: Option<f64>,
}

pub fn aggregate(reports: &[ConcurrencyReport]) -> BTreeMap<String, SuiteAggregate> {
    let devices: BTreeSet<&str> = reports.iter().map(|r| r.device_id.as_str()).collect();
    devices
        .into_iter()
        .map(|d| {
            let rs: Vec<&ConcurrencyReport> = reports.iter().filter(|r| r.device_id == d).collect();
            let agg = SuiteAggregate {
                runs: rs.len(),
                concurrency: mean(rs.iter().map(|r| r.concurrency)),
                ipo_avg: mean(rs.iter().map(|r| r.ipo_avg)),
                ieo_pct: mean(rs.iter().map(|r| r.ieo_pct)),
                ieo_rate: mean(rs.iter().filter_map(|r| r.ieo_rate)),
                edp_delta: mean(rs.iter().map(|r| r.edp_delta)),
                energy_efficiency: mean(rs.iter().map(|r| r.energy_efficiency)),
                ipw_conc: mean(rs.iter().map(|r| r.ipw_conc)),
                ipw_seq: mean(rs.iter().map(|r| r.ipw_seq)),
            };
            (d.to_string(), agg)
        })
        .collect()
}

/// Everything a run produced, serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub benchmarks: Vec<String>,
    pub ingest_warnings: Vec<IngestWarning>,
    pub pca: Vec<PcaSummary>,
    pub partitions: Vec<PartitionRecord>,
    pub consensus: ConsensusResult,
    pub database: WorkloadDatabase,
    pub specs: Vec<MultiKernelSpec>,
    pub simulations: Vec<SimulationRecord>,
    pub reports: Vec<ConcurrencyReport>,
    pub aggregates: BTreeMap<String, SuiteAggregate>,
    pub errors: Vec<StageError>,
    pub annotations: BTreeMap<String, String>,
}

/// Outputs of every stage, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub ingest: IngestOutput,
    pub characterize: CharacterizeOutput,
    pub ensemble: EnsembleOutput,
    pub specs: Vec<MultiKernelSpec>,
    pub simulations: Vec<SimulationRecord>,
}

impl PipelineState {
    pub fn compute(cfg: &RunConfig) -> Result<Self, ReportError> {
        let ingest = run_ingest(cfg)?;
        let characterize = run_characterize(cfg, &ingest)?;
        let ensemble = run_ensemble(cfg, &characterize)?;
        let specs = run_pair(cfg, &ensemble.database)?;
        let simulations = run_simulate(cfg, &ingest.devices, &specs)?;
        Ok(PipelineState {
            ingest,
            characterize,
            ensemble,
            specs,
            simulations,
        })
    }

    fn tracks(&self) -> impl Iterator<Item = &TrackAnalysis> {
        std::iter::once(&self.characterize.characteristics).chain(&self.characterize.power)
    }

    pub fn bundle(&self, cfg: &RunConfig) -> ReportBundle {
        let pca = self
            .tracks()
            .map(|t| PcaSummary {
                track: t.track.clone(),
                device_id: t.device_id.clone(),
                rank: t.pca.rank,
                explained_ratio: t.pca.explained_ratio[..t.pca.n_components()].to_vec(),
                cumulative_ratio: t.pca.cumulative_ratio(),
                dropped_columns: t.dropped_columns.clone(),
            })
            .collect();
        let partitions = self
            .tracks()
            .flat_map(|t| {
                [("kmeans", &t.kmeans.labeling), ("hierarchical", &t.hierarchical)].map(|(tech, l)| PartitionRecord {
                    track: t.track.clone(),
                    device_id: t.device_id.clone(),
                    technique: tech.into(),
                    labeling: l.clone(),
                })
            })
            .collect();
        let reports: Vec<ConcurrencyReport> = self.simulations.iter().filter_map(|s| s.report.clone()).collect();
        ReportBundle {
            tool: "kernelweave".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            benchmarks: self.ingest.benchmark_ids(),
            ingest_warnings: self.ingest.warnings.clone(),
            pca,
            partitions,
            consensus: self.ensemble.consensus().clone(),
            database: self.ensemble.database.clone(),
            specs: self.specs.clone(),
            aggregates: aggregate(&reports),
            reports,
            errors: self.simulations.iter().filter_map(|s| s.error.clone()).collect(),
            simulations: self.simulations.clone(),
            annotations: cfg.annotations.clone(),
        }
    }
}

/// Runs every stage in memory and assembles the report bundle.
pub fn run_pipeline(cfg: &RunConfig) -> Result<ReportBundle, ReportError> {
    Ok(PipelineState::compute(cfg)?.bundle(cfg))
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_') { c } else { '_' })
        .collect()
}

fn create_dir(path: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

/// Writes `report.json`, `metrics.csv`, timeline CSVs and SVG plots.
pub fn write_report(cfg: &RunConfig, state: &PipelineState, out: &Path) -> Result<ReportBundle, ReportError> {
    let mut bundle = state.bundle(cfg);
    let plots = out.join("plots");
    let timelines = out.join("timelines");
    create_dir(&plots)?;
    create_dir(&timelines)?;

    let consensus = &state.ensemble.consensus().labeling;
    for t in state.tracks() {
        let name = file_safe(&t.name());
        let scatter = plots.join(format!("pca_{name}.svg"));
        if let Err(e) = emit_scatter(&t.pca, consensus, &scatter) {
            warn!("{name}: {e}");
            bundle.errors.push(StageError {
                stage: "report".into(),
                spec_id: None,
                device_id: t.device_id.clone(),
                message: format!("scatter for {name}: {e}"),
            });
        }
        emit_dendrogram(&t.dendrogram, &plots.join(format!("dendrogram_{name}.svg")))?;
    }

    for s in &state.simulations {
        for (tag, run) in [("conc", &s.concurrent), ("seq", &s.sequential)] {
            if let Some(r) = run {
                let file = format!(
                    "{}_{}_{}_{tag}.csv",
                    s.strategy.as_str(),
                    file_safe(&s.spec_id),
                    file_safe(&s.device_id)
                );
                let path = timelines.join(file);
                std::fs::write(&path, r.timeline.to_csv()).map_err(io_err(&path))?;
            }
        }
    }

    let csv_path = out.join("metrics.csv");
    std::fs::write(&csv_path, metrics_csv(&bundle.reports)?).map_err(io_err(&csv_path))?;
    write_json(&out.join("report.json"), &bundle)?;
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// resumable stages

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Characterize,
    Ensemble,
    Pair,
    Simulate,
    Report,
}

impl Stage {
    fn artifact(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest.json",
            Stage::Characterize => "characterize.json",
            Stage::Ensemble => "ensemble.json",
            Stage::Pair => "pairs.json",
            Stage::Simulate => "simulations.json",
            Stage::Report => "report.json",
        }
    }
}

struct Runner {
    out: PathBuf,
    target: Stage,
    fresh_all: bool,
}

impl Runner {
    /// Reuses an upstream artifact when present; the target stage (and every
    /// stage under `all`) is always recomputed.
    fn stage<T: Serialize + DeserializeOwned>(
        &self,
        stage: Stage,
        compute: impl FnOnce() -> Result<T, ReportError>,
    ) -> Result<T, ReportError> {
        let path = self.out.join(stage.artifact());
        if !self.fresh_all && stage < self.target && path.is_file() {
            info!("reusing {}", path.display());
            return read_json(&path);
        }
        let value = compute()?;
        write_json(&path, &value)?;
        Ok(value)
    }
}

/// Runs stages up to `target`, resuming from upstream artifacts in `out`.
/// `None` runs the whole pipeline from scratch.
pub fn run_stage(cfg: &RunConfig, target: Option<Stage>, out: &Path) -> Result<(), ReportError> {
    create_dir(out)?;
    let r = Runner {
        out: out.to_path_buf(),
        target: target.unwrap_or(Stage::Report),
        fresh_all: target.is_none(),
    };
    let ingest: IngestOutput = r.stage(Stage::Ingest, || run_ingest(cfg))?;
    if r.target == Stage::Ingest {
        return Ok(());
    }
    let characterize = r.stage(Stage::Characterize, || run_characterize(cfg, &ingest))?;
    if r.target == Stage::Characterize {
        return Ok(());
    }
    let ensemble: EnsembleOutput = r.stage(Stage::Ensemble, || run_ensemble(cfg, &characterize))?;
    write_json(&out.join("workload_db.json"), &ensemble.database)?;
    if r.target == Stage::Ensemble {
        return Ok(());
    }
    let specs = r.stage(Stage::Pair, || run_pair(cfg, &ensemble.database))?;
    if r.target == Stage::Pair {
        return Ok(());
    }
    let simulations = r.stage(Stage::Simulate, || run_simulate(cfg, &ingest.devices, &specs))?;
    if r.target == Stage::Simulate {
        return Ok(());
    }
    let state = PipelineState {
        ingest,
        characterize,
        ensemble,
        specs,
        simulations,
    };
    write_report(cfg, &state, out)?;
    Ok(())
}
