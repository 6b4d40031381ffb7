//! Run configuration and simulation scenario files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{split_list, ConfigDoc, ConfigError, Section};
use crate::ensemble::DatabaseParams;
use crate::ingest::{KernelSpec, NegativeCurrentPolicy, RailConfig};
use crate::pairgen::{LaunchPolicy, Strategy};
use crate::streamsim::{HostTemplate, SimParams, TemplateOp};

/// A measured trace window turned into one power-performance row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceInput {
    pub name: String,
    pub file: String,
    pub device: String,
    pub benchmark: String,
    pub instructions: u64,
    pub cycles: u64,
    pub comm_ops: u64,
    pub t0: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairgenConfig {
    pub strategies: Vec<Strategy>,
    pub sizes: Vec<usize>,
    pub contending_quantile: f64,
    pub launch_policy: LaunchPolicy,
    pub slice_bytes: Option<u64>,
    /// Keep at most this many sets per (strategy, size); 0 keeps all.
    pub max_sets: usize,
}

/// Fully resolved run configuration. Paths are kept as written and resolved
/// against `base_dir`, the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub characteristics: String,
    pub powerperf: Option<String>,
    pub devices: Vec<String>,
    pub scenario: Option<String>,
    pub traces: Vec<TraceInput>,
    pub rails: RailConfig,
    pub negative_current: NegativeCurrentPolicy,
    /// `None` means ceil(n / 2).
    pub k: Option<usize>,
    pub n_pc_char: usize,
    pub n_pc_power: usize,
    pub seed: u64,
    pub w_char: f64,
    pub w_power: f64,
    pub affinity: DatabaseParams,
    pub pairgen: PairgenConfig,
    pub coappearance: Vec<Vec<String>>,
    pub annotations: BTreeMap<String, String>,
}

const SECTIONS: [&str; 9] = [
    "input",
    "rails",
    "analysis",
    "weights",
    "affinity",
    "pairgen",
    "coappearance",
    "annotations",
    "output",
];

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn empty_section(name: &str) -> Section {
    Section {
        name: name.to_string(),
        entries: Vec::new(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let doc = ConfigDoc::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_doc(&doc, &base)
    }

    pub fn from_doc(doc: &ConfigDoc, base_dir: &Path) -> Result<Self, ConfigError> {
        for s in &doc.sections {
            let known = SECTIONS.contains(&s.name.as_str()) || s.name.starts_with("trace.");
            if !known {
                return Err(invalid(format!("unknown section [{}]", s.name)));
            }
        }
        let blank = |name: &str| doc.section(name).cloned().unwrap_or_else(|| empty_section(name));

        let input = doc.require("input")?;
        input.check_keys(&["characteristics", "powerperf", "devices", "scenario", "negative_current"])?;
        let negative_current = match input.get("negative_current").unwrap_or("clamp") {
            "clamp" => NegativeCurrentPolicy::Clamp,
            "reject" => NegativeCurrentPolicy::Reject,
            _ => return Err(input.bad_value("negative_current", "expected `clamp` or `reject`")),
        };

        let mut traces = Vec::new();
        for (name, s) in doc.prefixed("trace") {
            s.check_keys(&["file", "device", "benchmark", "instructions", "cycles", "comm_ops", "t0", "t1"])?;
            traces.push(TraceInput {
                name: name.to_string(),
                file: s.require("file")?.to_string(),
                device: s.require("device")?.to_string(),
                benchmark: s.require("benchmark")?.to_string(),
                instructions: s.parse_req("instructions")?,
                cycles: s.parse_or("cycles", 0)?,
                comm_ops: s.parse_or("comm_ops", 0)?,
                t0: s.parse_req("t0")?,
                t1: s.parse_req("t1")?,
            });
        }

        let mut rails = RailConfig::new();
        for e in &blank("rails").entries {
            let v: f64 = e
                .value
                .parse()
                .map_err(|_| blank("rails").bad_value(&e.key, "expected volts"))?;
            rails.insert(e.key.clone(), v);
        }

        let analysis = blank("analysis");
        analysis.check_keys(&["k", "n_pc_char", "n_pc_power", "seed"])?;
        let weights = blank("weights");
        weights.check_keys(&["w_char", "w_power"])?;
        let affinity = blank("affinity");
        affinity.check_keys(&["coassoc_weight", "geometry_weight"])?;

        let pg = blank("pairgen");
        pg.check_keys(&["strategies", "sizes", "contending_quantile", "launch_policy", "slice_bytes", "max_sets"])?;
        let strategies = match pg.get("strategies") {
            None => Strategy::ALL.to_vec(),
            Some(v) => split_list(v)
                .iter()
                .map(|s| s.parse::<Strategy>().map_err(|m| pg.bad_value("strategies", m)))
                .collect::<Result<_, _>>()?,
        };
        let sizes = match pg.get("sizes") {
            None => vec![2],
            Some(v) => split_list(v)
                .iter()
                .map(|s| s.parse::<usize>().map_err(|e| pg.bad_value("sizes", e.to_string())))
                .collect::<Result<_, _>>()?,
        };
        let launch_policy = match pg.get("launch_policy").unwrap_or("breadth_first") {
            "breadth_first" => LaunchPolicy::BreadthFirst,
            "depth_first" => LaunchPolicy::DepthFirst,
            _ => return Err(pg.bad_value("launch_policy", "expected `breadth_first` or `depth_first`")),
        };

        let coappearance = blank("coappearance");
        coappearance.check_keys(&["set"])?;
        let annotations = blank("annotations")
            .entries
            .iter()
            .map(|e| (e.key.clone(), e.value.clone()))
            .collect();

        let output = blank("output");
        output.check_keys(&["dir"])?;

        let cfg = RunConfig {
            base_dir: base_dir.to_path_buf(),
            output_dir: base_dir.join(output.get("dir").unwrap_or("out")),
            characteristics: input.require("characteristics")?.to_string(),
            powerperf: input.get("powerperf").map(str::to_string),
            devices: input.get("devices").map(split_list).unwrap_or_default(),
            scenario: input.get("scenario").map(str::to_string),
            traces,
            rails,
            negative_current,
            k: analysis.parse("k")?,
            n_pc_char: analysis.parse_or("n_pc_char", 5)?,
            n_pc_power: analysis.parse_or("n_pc_power", 3)?,
            seed: analysis.parse_or("seed", 0)?,
            w_char: weights.parse_or("w_char", 2.0)?,
            w_power: weights.parse_or("w_power", 1.0)?,
            affinity: DatabaseParams {
                coassoc_weight: affinity.parse_or("coassoc_weight", 0.6)?,
                geometry_weight: affinity.parse_or("geometry_weight", 0.4)?,
            },
            pairgen: PairgenConfig {
                strategies,
                sizes,
                contending_quantile: pg.parse_or("contending_quantile", 0.75)?,
                launch_policy,
                slice_bytes: pg.parse("slice_bytes")?,
                max_sets: pg.parse_or("max_sets", 0)?,
            },
            coappearance: coappearance.get_all("set").map(split_list).collect(),
            annotations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    /// Checks value ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == Some(0) {
            return Err(invalid("k must be >= 1"));
        }
        if self.n_pc_char == 0 || self.n_pc_power == 0 {
            return Err(invalid("component counts must be >= 1"));
        }
        let w_ok = |w: f64| w.is_finite() && w >= 0.0;
        if !(w_ok(self.w_char) && w_ok(self.w_power) && self.w_char + self.w_power > 0.0) {
            return Err(invalid("weights must be non-negative with a positive sum"));
        }
        let a = &self.affinity;
        if !(w_ok(a.coassoc_weight) && w_ok(a.geometry_weight) && a.coassoc_weight + a.geometry_weight > 0.0) {
            return Err(invalid("affinity weights must be non-negative with a positive sum"));
        }
        let pg = &self.pairgen;
        if !(0.0..=1.0).contains(&pg.contending_quantile) {
            return Err(invalid("contending_quantile must lie in [0, 1]"));
        }
        if let Some(s) = pg.sizes.iter().find(|s| !(2..=4).contains(*s)) {
            return Err(invalid(format!("set size {s} outside 2..=4")));
        }
        if pg.slice_bytes == Some(0) {
            return Err(invalid("slice_bytes must be positive"));
        }
        if pg.strategies.contains(&Strategy::Coappearance) && self.coappearance.is_empty() {
            return Err(invalid("co-appearance strategy needs [coappearance] set entries"));
        }
        for t in &self.traces {
            if self.rails.is_empty() {
                return Err(invalid(format!("trace `{}` needs [rails] voltages", t.name)));
            }
            if !(t.t1 > t.t0) {
                return Err(invalid(format!("trace `{}`: t1 must exceed t0", t.name)));
            }
        }
        let mut paths: Vec<&str> = vec![&self.characteristics];
        paths.extend(self.powerperf.as_deref());
        paths.extend(self.scenario.as_deref());
        paths.extend(self.devices.iter().map(String::as_str));
        paths.extend(self.traces.iter().map(|t| t.file.as_str()));
        for p in paths {
            if !self.resolve(p).is_file() {
                return Err(invalid(format!("file not found: {}", self.resolve(p).display())));
            }
        }
        Ok(())
    }
}

/// Kernel table, per-benchmark host templates and simulator constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kernels: BTreeMap<String, KernelSpec>,
    pub templates: BTreeMap<String, HostTemplate>,
    pub sim: SimParams,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_doc(&ConfigDoc::load(path)?)
    }

    pub fn from_doc(doc: &ConfigDoc) -> Result<Self, ConfigError> {
        for s in &doc.sections {
            if !(s.name == "sim" || s.name.starts_with("kernel.") || s.name.starts_with("program.")) {
                return Err(invalid(format!("unknown scenario section [{}]", s.name)));
            }
        }
        let mut kernels = BTreeMap::new();
        for (id, s) in doc.prefixed("kernel") {
            kernels.insert(id.to_string(), KernelSpec::from_section(id, s)?);
        }
        let mut templates = BTreeMap::new();
        for (bench, s) in doc.prefixed("program") {
            s.check_keys(&["ops", "loop_count"])?;
            let ops: Vec<TemplateOp> = split_list(s.require("ops")?)
                .iter()
                .map(|o| o.parse().map_err(|e: crate::streamsim::SimError| s.bad_value("ops", e.to_string())))
                .collect::<Result<_, _>>()?;
            if ops.is_empty() {
                return Err(s.bad_value("ops", "empty op list"));
            }
            for op in &ops {
                if let TemplateOp::Kernel(k) = op {
                    if !kernels.contains_key(k) {
                        return Err(s.bad_value("ops", format!("unknown kernel `{k}`")));
                    }
                }
            }
            let loop_count: u32 = s.parse_or("loop_count", 1)?;
            if loop_count == 0 {
                return Err(s.bad_value("loop_count", "must be >= 1"));
            }
            templates.insert(bench.to_string(), HostTemplate { ops, loop_count });
        }
        let mut sim = SimParams::default();
        if let Some(s) = doc.section("sim") {
            s.check_keys(&[
                "transfer_power_w",
                "launch_latency_s",
                "trace_resolution_s",
                "concurrency_denominator",
            ])?;
            sim.transfer_power = s.parse_or("transfer_power_w", sim.transfer_power)?;
            sim.launch_latency = s.parse_or("launch_latency_s", sim.launch_latency)?;
            sim.trace_resolution = s.parse_or("trace_resolution_s", sim.trace_resolution)?;
            sim.concurrency_denominator = s.parse_or("concurrency_denominator", sim.concurrency_denominator)?;
            if !(sim.transfer_power >= 0.0 && sim.launch_latency >= 0.0 && sim.trace_resolution > 0.0) {
                return Err(invalid("[sim] constants must be non-negative, resolution positive"));
            }
        }
        Ok(Scenario { kernels, templates, sim })
    }
}
