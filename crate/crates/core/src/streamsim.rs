//! Discrete-event simulation of multi-stream transfer/kernel execution.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DeviceModel, KernelSpec, PowerPerfVector, PowerTrace, QueueModel};
use crate::pairgen::{LaunchPolicy, MultiKernelSpec};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("no kernel spec for `{0}`")]
    MissingKernelSpec(String),
    #[error("no host op template for benchmark `{0}`")]
    MissingTemplate(String),
    #[error("invalid custom issue order: {0}")]
    InvalidCustomOrder(String),
    #[error("empty program{}", if .0.is_empty() { String::new() } else { format!(" `{}`", .0) })]
    EmptyProgram(String),
    #[error("a block of kernel `{kernel}` does not fit on one SM: {reason}")]
    UnschedulableBlock { kernel: String, reason: String },
    #[error("transfer of zero bytes in stream `{0}`")]
    ZeroBytes(String),
    #[error("slice size must be positive")]
    InvalidSlice,
    #[error("invalid host op `{0}`")]
    BadOp(String),
    #[error("simulation stalled at t = {0}")]
    Stalled(f64),
}

/// Host op template entry, kernels referenced by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateOp {
    H2D(u64),
    Kernel(String),
    D2H(u64),
    Barrier,
}

impl FromStr for TemplateOp {
    type Err = SimError;

    /// `H2D:<bytes>`, `K:<kernel>`, `D2H:<bytes>` or `BARRIER`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || SimError::BadOp(s.to_string());
        if s.eq_ignore_ascii_case("barrier") {
            return Ok(TemplateOp::Barrier);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let arg = arg.trim();
        match kind.trim().to_ascii_uppercase().as_str() {
            "H2D" => arg.parse().map(TemplateOp::H2D).map_err(|_| bad()),
            "D2H" => arg.parse().map(TemplateOp::D2H).map_err(|_| bad()),
            "K" if !arg.is_empty() => Ok(TemplateOp::Kernel(arg.to_string())),
            _ => Err(bad()),
        }
    }
}

/// Per-benchmark host launch sequence, executed `loop_count` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostTemplate {
    pub ops: Vec<TemplateOp>,
    pub loop_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    H2D { bytes: u64 },
    Kernel(KernelSpec),
    D2H { bytes: u64 },
    /// Device-wide synchronization: waits for every earlier-issued op and
    /// holds back every later one.
    Barrier,
}

impl Op {
    pub fn label(&self) -> String {
        match self {
            Op::H2D { .. } => "H2D".into(),
            Op::Kernel(k) => format!("K:{}", k.kernel_id),
            Op::D2H { .. } => "D2H".into(),
            Op::Barrier => "BARRIER".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamProgram {
    pub stream_id: String,
    pub source_benchmark: String,
    pub ops: Vec<Op>,
    /// Global issue position of each op; increasing within a stream.
    pub issue: Vec<usize>,
    pub loop_count: u32,
}

impl StreamProgram {
    /// Program with issue positions in op order.
    pub fn new(stream_id: &str, source_benchmark: &str, ops: Vec<Op>) -> Self {
        StreamProgram {
            stream_id: stream_id.to_string(),
            source_benchmark: source_benchmark.to_string(),
            issue: (0..ops.len()).collect(),
            ops,
            loop_count: 1,
        }
    }
}

/// Chunk sizes for a transfer of `bytes` split at `slice`.
pub fn slice_bytes(bytes: u64, slice: Option<u64>) -> Result<Vec<u64>, SimError> {
    match slice {
        None => Ok(vec![bytes]),
        Some(0) => Err(SimError::InvalidSlice),
        Some(s) => {
            let mut out = vec![s; (bytes / s) as usize];
            if !bytes.is_multiple_of(s) {
                out.push(bytes % s);
            }
            Ok(out)
        }
    }
}

pub fn build_stream_programs(
    spec: &MultiKernelSpec,
    kernels: &BTreeMap<String, KernelSpec>,
    templates: &BTreeMap<String, HostTemplate>,
) -> Result<Vec<StreamProgram>, SimError> {
    let mut programs = Vec::with_capacity(spec.members.len());
    for member in &spec.members {
        let tpl = templates
            .get(member)
            .ok_or_else(|| SimError::MissingTemplate(member.clone()))?;
        if tpl.ops.is_empty() || tpl.loop_count == 0 {
            return Err(SimError::EmptyProgram(member.clone()));
        }
        let mut ops = Vec::new();
        for _ in 0..tpl.loop_count {
            for op in &tpl.ops {
                match op {
                    TemplateOp::H2D(0) | TemplateOp::D2H(0) => return Err(SimError::ZeroBytes(member.clone())),
                    TemplateOp::H2D(b) => ops.extend(
                        slice_bytes(*b, spec.slice_size)?.into_iter().map(|bytes| Op::H2D { bytes }),
                    ),
                    TemplateOp::D2H(b) => ops.extend(
                        slice_bytes(*b, spec.slice_size)?.into_iter().map(|bytes| Op::D2H { bytes }),
                    ),
                    TemplateOp::Kernel(id) => ops.push(Op::Kernel(
                        kernels
                            .get(id)
                            .cloned()
                            .ok_or_else(|| SimError::MissingKernelSpec(id.clone()))?,
                    )),
                    TemplateOp::Barrier => ops.push(Op::Barrier),
                }
            }
        }
        programs.push(StreamProgram {
            loop_count: tpl.loop_count,
            ..StreamProgram::new(member, member, ops)
        });
    }
    assign_issue_order(&mut programs, &spec.launch_policy)?;
    Ok(programs)
}

/// Assign global issue positions. Breadth-first interleaves ops of the same
/// position across streams, depth-first issues stream after stream, and a
/// custom order names, for each issue in turn, the stream whose next op is
/// issued (the list repeats until every op is issued).
pub fn assign_issue_order(programs: &mut [StreamProgram], policy: &LaunchPolicy) -> Result<(), SimError> {
    let mut next = 0;
    match policy {
        LaunchPolicy::DepthFirst => {
            for p in programs.iter_mut() {
                p.issue = (next..next + p.ops.len()).collect();
                next += p.ops.len();
            }
        }
        LaunchPolicy::BreadthFirst => {
            let longest = programs.iter().map(|p| p.ops.len()).max().unwrap_or(0);
            for p in programs.iter_mut() {
                p.issue = vec![0; p.ops.len()];
            }
            for pos in 0..longest {
                for p in programs.iter_mut().filter(|p| pos < p.ops.len()) {
                    p.issue[pos] = next;
                    next += 1;
                }
            }
        }
        LaunchPolicy::Custom(order) => {
            let streams: Vec<usize> = order
                .iter()
                .map(|id| {
                    programs
                        .iter()
                        .position(|p| &p.stream_id == id)
                        .ok_or_else(|| SimError::InvalidCustomOrder(format!("unknown stream `{id}`")))
                })
                .collect::<Result<_, _>>()?;
            if let Some(p) = programs.iter().enumerate().find(|(i, _)| !streams.contains(i)) {
                return Err(SimError::InvalidCustomOrder(format!(
                    "stream `{}` never issued",
                    p.1.stream_id
                )));
            }
            let mut cursor = vec![0usize; programs.len()];
            for p in programs.iter_mut() {
                p.issue = vec![0; p.ops.len()];
            }
            let total: usize = programs.iter().map(|p| p.ops.len()).sum();
            let mut k = 0;
            while next < total {
                let s = streams[k % streams.len()];
                k += 1;
                if cursor[s] < programs[s].ops.len() {
                    programs[s].issue[cursor[s]] = next;
                    cursor[s] += 1;
                    next += 1;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcurrencyDenominator {
    /// Time with at least one kernel resident.
    Active,
    Makespan,
}

impl FromStr for ConcurrencyDenominator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "active" => Ok(ConcurrencyDenominator::Active),
            "makespan" => Ok(ConcurrencyDenominator::Makespan),
            _ => Err(format!("expected `active` or `makespan`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Watts drawn per busy copy engine.
    pub transfer_power: f64,
    /// Seconds between consecutive host issues.
    pub launch_latency: f64,
    /// Sampling step of the synthetic power trace.
    pub trace_resolution: f64,
    pub concurrency_denominator: ConcurrencyDenominator,
    /// Keep a per-block residency log.
    pub record_blocks: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            transfer_power: 10.0,
            launch_latency: 5e-6,
            trace_resolution: 1e-3,
            concurrency_denominator: ConcurrencyDenominator::Active,
            record_blocks: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Copy0,
    Copy1,
    Compute,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Copy0 => "copy0",
            Engine::Copy1 => "copy1",
            Engine::Compute => "compute",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub op: String,
    pub op_index: usize,
    pub stream: String,
    pub engine: Engine,
    pub start: f64,
    pub end: f64,
    /// Peak resident threads, kernels only.
    pub resident_threads: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub intervals: Vec<Interval>,
    pub makespan: f64,
}

impl Timeline {
    /// `op,stream,engine,start_s,end_s,resident_threads`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("op,stream,engine,start_s,end_s,resident_threads\n");
        for iv in &self.intervals {
            out.push_str(&format!(
                "{}#{},{},{},{},{},{}\n",
                iv.op,
                iv.op_index,
                iv.stream,
                iv.engine.as_str(),
                iv.start,
                iv.end,
                iv.resident_threads.map(|t| t.to_string()).unwrap_or_default()
            ));
        }
        out
    }
}

/// Piecewise-constant power between consecutive events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSegment {
    pub start: f64,
    pub end: f64,
    /// Drawn power after the TDP clamp.
    pub power: f64,
    pub dynamic: f64,
    pub transfer: f64,
    pub resident_threads: u64,
    pub resident_kernels: usize,
    /// Distinct source benchmarks with resident blocks.
    pub benchmarks_active: usize,
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub idle: f64,
    pub dynamic: f64,
    pub transfer: f64,
    /// Energy removed by the TDP clamp.
    pub clamped: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub stream: String,
    pub op_index: usize,
    pub sm: u32,
    pub start: f64,
    pub end: f64,
    pub threads: u64,
    pub regs: u64,
    pub shared_mem: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub device_id: String,
    pub timeline: Timeline,
    #[serde(skip)]
    pub power_trace: PowerTrace,
    #[serde(skip)]
    pub segments: Vec<PowerSegment>,
    pub concurrency: f64,
    pub occupancy: f64,
    pub saturation_events: usize,
    pub energy: EnergyBreakdown,
    pub avg_power: f64,
    pub peak_power: f64,
    /// Time with kernels of at least two source benchmarks resident.
    pub overlap_time: f64,
    /// Time with at least one kernel resident.
    pub kernel_active_time: f64,
    pub instructions: u64,
    #[serde(skip)]
    pub blocks: Vec<BlockRecord>,
}

impl SimResult {
    pub fn makespan(&self) -> f64 {
        self.timeline.makespan
    }

    /// Power-performance summary of the run. IPC is unknown in simulation.
    pub fn powerperf(&self, benchmark_id: &str) -> PowerPerfVector {
        let duration = self.makespan();
        let energy = self.energy.total;
        let instr = self.instructions as f64;
        PowerPerfVector {
            benchmark_id: benchmark_id.to_string(),
            device_id: self.device_id.clone(),
            avg_power: self.avg_power,
            peak_power: self.peak_power,
            total_energy: energy,
            ipw: if energy > 0.0 { instr / energy } else { 0.0 },
            edp: energy * duration,
            ipc: None,
            ips: if duration > 0.0 { instr / duration } else { 0.0 },
            duration,
            comm_overhead: None,
            max_temp: None,
        }
    }
}

fn check_fits(device: &DeviceModel, k: &KernelSpec) -> Result<(), SimError> {
    let regs = k.regs_per_thread * k.threads_per_block;
    let reason = if k.threads_per_block > device.max_threads_per_sm {
        format!("{} threads > {} per SM", k.threads_per_block, device.max_threads_per_sm)
    } else if regs > device.regs_per_sm {
        format!("{regs} registers > {} per SM", device.regs_per_sm)
    } else if k.shared_mem_per_block > device.shared_mem_per_sm {
        format!("{} bytes shared memory > {} per SM", k.shared_mem_per_block, device.shared_mem_per_sm)
    } else {
        return Ok(());
    };
    Err(SimError::UnschedulableBlock {
        kernel: k.kernel_id.clone(),
        reason,
    })
}

#[derive(Clone, Copy, Default)]
struct SmLoad {
    regs: u64,
    shared: u64,
    threads: u64,
    blocks: u64,
}

struct Kernel {
    stream: usize,
    op: usize,
    rank: usize,
    pending: u64,
    resident: u64,
    first: Option<f64>,
    peak_threads: u64,
    queue: usize,
}

struct Running {
    start: f64,
    end: f64,
    kernel: usize,
    sm: usize,
}

struct RawRun {
    intervals: Vec<Interval>,
    segments: Vec<PowerSegment>,
    blocks: Vec<BlockRecord>,
    makespan: f64,
    instructions: u64,
}

fn run(device: &DeviceModel, programs: &[StreamProgram], params: &SimParams) -> Result<RawRun, SimError> {
    if programs.is_empty() {
        return Err(SimError::EmptyProgram(String::new()));
    }
    for p in programs {
        if p.ops.is_empty() {
            return Err(SimError::EmptyProgram(p.stream_id.clone()));
        }
        for op in &p.ops {
            match op {
                Op::Kernel(k) => check_fits(device, k)?,
                Op::H2D { bytes: 0 } | Op::D2H { bytes: 0 } => {
                    return Err(SimError::ZeroBytes(p.stream_id.clone()))
                }
                _ => {}
            }
        }
    }

    // rank = position in the global issue order, ties broken by stream index
    let mut order: Vec<(usize, usize, usize)> = programs
        .iter()
        .enumerate()
        .flat_map(|(s, p)| p.issue.iter().enumerate().map(move |(i, &iss)| (iss, s, i)))
        .collect();
    order.sort();
    let mut rank: Vec<Vec<usize>> = programs.iter().map(|p| vec![0; p.ops.len()]).collect();
    for (r, &(_, s, i)) in order.iter().enumerate() {
        rank[s][i] = r;
    }
    let total_ops = order.len();
    let issue_time = |r: usize| r as f64 * params.launch_latency;

    let n_queues = match device.queue_model {
        QueueModel::Single => 1,
        QueueModel::Multi => device.hw_queue_count.max(1) as usize,
    };
    let copy_engine_of = |op: &Op| match (op, device.copy_engines) {
        (Op::D2H { .. }, 2) => 1,
        _ => 0,
    };

    let mut pc = vec![0usize; programs.len()];
    let mut busy = vec![false; programs.len()];
    let mut done = vec![false; total_ops];
    let mut done_prefix = 0usize;
    let mut pending_barriers: BTreeSet<usize> = programs
        .iter()
        .enumerate()
        .flat_map(|(s, p)| {
            let rank = &rank;
            p.ops
                .iter()
                .enumerate()
                .filter(|(_, op)| matches!(op, Op::Barrier))
                .map(move |(i, _)| rank[s][i])
        })
        .collect();
    let mut engines: [Option<(usize, f64, f64)>; 2] = [None, None];
    let mut queue_busy = vec![false; n_queues];
    let mut kernels: Vec<Kernel> = Vec::new();
    let mut active_kernels: Vec<usize> = Vec::new();
    let mut running: Vec<Running> = Vec::new();
    let mut sms = vec![SmLoad::default(); device.sm_count as usize];

    let mut intervals = Vec::new();
    let mut segments: Vec<PowerSegment> = Vec::new();
    let mut blocks = Vec::new();
    let mut instructions = 0u64;
    let mut t = 0.0f64;

    let kernel_of = |s: usize, i: usize| match &programs[s].ops[i] {
        Op::Kernel(k) => k,
        _ => unreachable!("not a kernel op"),
    };

    loop {
        // start everything that can start at t; barriers complete instantly,
        // so repeat until nothing changes
        loop {
            let mut changed = false;
            let blocked = |r: usize, pb: &BTreeSet<usize>| pb.iter().next().is_some_and(|&b| b < r);
            let mut ready: Vec<(usize, usize)> = (0..programs.len())
                .filter(|&s| !busy[s] && pc[s] < programs[s].ops.len())
                .map(|s| (rank[s][pc[s]], s))
                .filter(|&(r, _)| issue_time(r) <= t)
                .collect();
            ready.sort();
            for &(r, s) in &ready {
                let op = &programs[s].ops[pc[s]];
                match op {
                    Op::Barrier => {
                        if done_prefix >= r && pending_barriers.first() == Some(&r) {
                            pending_barriers.remove(&r);
                            done[r] = true;
                            while done_prefix < total_ops && done[done_prefix] {
                                done_prefix += 1;
                            }
                            pc[s] += 1;
                            changed = true;
                        }
                    }
                    _ if blocked(r, &pending_barriers) => {}
                    Op::H2D { bytes } | Op::D2H { bytes } => {
                        let e = copy_engine_of(op);
                        if engines[e].is_none() {
                            let bw = if matches!(op, Op::H2D { .. }) {
                                device.h2d_bandwidth
                            } else {
                                device.d2h_bandwidth
                            };
                            engines[e] = Some((s, t, t + *bytes as f64 / bw));
                            busy[s] = true;
                            changed = true;
                        }
                    }
                    Op::Kernel(k) => {
                        let q = s % n_queues;
                        if !queue_busy[q] {
                            queue_busy[q] = true;
                            busy[s] = true;
                            kernels.push(Kernel {
                                stream: s,
                                op: pc[s],
                                rank: r,
                                pending: k.grid_blocks,
                                resident: 0,
                                first: None,
                                peak_threads: 0,
                                queue: q,
                            });
                            active_kernels.push(kernels.len() - 1);
                            changed = true;
                        }
                    }
                }
                if changed {
                    break;
                }
            }
            if !changed {
                break;
            }
        }

        // dispatch blocks: earliest-issued kernel first, first-fit over SMs,
        // later kernels backfill whatever is left
        active_kernels.sort_by_key(|&k| (kernels[k].rank, kernels[k].stream));
        for &ki in &active_kernels {
            let spec = kernel_of(kernels[ki].stream, kernels[ki].op);
            let need_regs = spec.regs_per_thread * spec.threads_per_block;
            while kernels[ki].pending > 0 {
                let slot = sms.iter().position(|sm| {
                    sm.regs + need_regs <= device.regs_per_sm
                        && sm.shared + spec.shared_mem_per_block <= device.shared_mem_per_sm
                        && sm.threads + spec.threads_per_block <= device.max_threads_per_sm
                        && sm.blocks < device.max_blocks_per_sm
                });
                let Some(sm) = slot else { break };
                sms[sm].regs += need_regs;
                sms[sm].shared += spec.shared_mem_per_block;
                sms[sm].threads += spec.threads_per_block;
                sms[sm].blocks += 1;
                let kern = &mut kernels[ki];
                kern.pending -= 1;
                kern.resident += 1;
                kern.first.get_or_insert(t);
                running.push(Running {
                    start: t,
                    end: t + spec.block_duration,
                    kernel: ki,
                    sm,
                });
            }
        }
        for &ki in &active_kernels {
            let spec = kernel_of(kernels[ki].stream, kernels[ki].op);
            let threads = kernels[ki].resident * spec.threads_per_block;
            kernels[ki].peak_threads = kernels[ki].peak_threads.max(threads);
        }

        if pc.iter().zip(programs).all(|(&c, p)| c >= p.ops.len()) {
            break;
        }

        let mut t_next = f64::INFINITY;
        for e in engines.iter().flatten() {
            t_next = t_next.min(e.2);
        }
        for b in &running {
            t_next = t_next.min(b.end);
        }
        for s in 0..programs.len() {
            if !busy[s] && pc[s] < programs[s].ops.len() {
                let it = issue_time(rank[s][pc[s]]);
                if it > t {
                    t_next = t_next.min(it);
                }
            }
        }
        if !t_next.is_finite() {
            return Err(SimError::Stalled(t));
        }

        if t_next > t {
            let mut dynamic = 0.0;
            let mut threads = 0;
            let mut resident_kernels = 0;
            let mut benches = BTreeSet::new();
            for &ki in &active_kernels {
                let kern = &kernels[ki];
                if kern.resident == 0 {
                    continue;
                }
                let spec = kernel_of(kern.stream, kern.op);
                dynamic += spec.dynamic_power * kern.resident as f64 / spec.grid_blocks as f64;
                threads += kern.resident * spec.threads_per_block;
                resident_kernels += 1;
                benches.insert(&programs[kern.stream].source_benchmark);
            }
            let transfer = params.transfer_power * engines.iter().flatten().count() as f64;
            let raw = device.idle_power + dynamic + transfer;
            segments.push(PowerSegment {
                start: t,
                end: t_next,
                power: raw.min(device.tdp),
                dynamic,
                transfer,
                resident_threads: threads,
                resident_kernels,
                benchmarks_active: benches.len(),
                saturated: raw > device.tdp,
            });
        }
        t = t_next;

        for (e, slot) in engines.iter_mut().enumerate() {
            if let Some((s, start, end)) = *slot {
                if end <= t {
                    let i = pc[s];
                    intervals.push(Interval {
                        op: programs[s].ops[i].label(),
                        op_index: i,
                        stream: programs[s].stream_id.clone(),
                        engine: if e == 0 { Engine::Copy0 } else { Engine::Copy1 },
                        start,
                        end,
                        resident_threads: None,
                    });
                    done[rank[s][i]] = true;
                    pc[s] += 1;
                    busy[s] = false;
                    *slot = None;
                }
            }
        }

        let mut still = Vec::with_capacity(running.len());
        for b in running.drain(..) {
            if b.end <= t {
                let kern = &mut kernels[b.kernel];
                let spec = kernel_of(kern.stream, kern.op);
                kern.resident -= 1;
                let sm = &mut sms[b.sm];
                sm.regs -= spec.regs_per_thread * spec.threads_per_block;
                sm.shared -= spec.shared_mem_per_block;
                sm.threads -= spec.threads_per_block;
                sm.blocks -= 1;
                if params.record_blocks {
                    blocks.push(BlockRecord {
                        stream: programs[kern.stream].stream_id.clone(),
                        op_index: kern.op,
                        sm: b.sm as u32,
                        start: b.start,
                        end: b.end,
                        threads: spec.threads_per_block,
                        regs: spec.regs_per_thread * spec.threads_per_block,
                        shared_mem: spec.shared_mem_per_block,
                    });
                }
            } else {
                still.push(b);
            }
        }
        running = still;

        let mut remaining = Vec::with_capacity(active_kernels.len());
        for &ki in &active_kernels {
            let kern = &kernels[ki];
            if kern.pending == 0 && kern.resident == 0 {
                let spec = kernel_of(kern.stream, kern.op);
                instructions += spec.instructions;
                intervals.push(Interval {
                    op: programs[kern.stream].ops[kern.op].label(),
                    op_index: kern.op,
                    stream: programs[kern.stream].stream_id.clone(),
                    engine: Engine::Compute,
                    start: kern.first.unwrap_or(t),
                    end: t,
                    resident_threads: Some(kern.peak_threads),
                });
                queue_busy[kern.queue] = false;
                let s = kern.stream;
                done[kern.rank] = true;
                pc[s] += 1;
                busy[s] = false;
            } else {
                remaining.push(ki);
            }
        }
        active_kernels = remaining;
        while done_prefix < total_ops && done[done_prefix] {
            done_prefix += 1;
        }
    }

    intervals.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then(a.engine.cmp(&b.engine))
            .then_with(|| a.stream.cmp(&b.stream))
            .then(a.op_index.cmp(&b.op_index))
    });
    Ok(RawRun {
        intervals,
        segments,
        blocks,
        makespan: t,
        instructions,
    })
}

fn sample_trace(segments: &[PowerSegment], makespan: f64, idle: f64, resolution: f64) -> PowerTrace {
    const MAX_SAMPLES: f64 = 1e6;
    let end = if makespan > 0.0 { makespan } else { resolution };
    let step = resolution.max(end / MAX_SAMPLES);
    let n = (end / step).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    if *times.last().unwrap() < end {
        times.push(end);
    }
    let mut seg = 0;
    let power = times
        .iter()
        .map(|&t| {
            while seg + 1 < segments.len() && segments[seg].end <= t {
                seg += 1;
            }
            segments.get(seg).map_or(idle, |s| s.power)
        })
        .collect();
    PowerTrace::from_power(times, power).expect("sample times are increasing")
}

fn summarize(device: &DeviceModel, params: &SimParams, raw: RawRun) -> SimResult {
    let mut energy = EnergyBreakdown::default();
    let mut overlap = 0.0;
    let mut active = 0.0;
    let mut occupied = 0.0;
    let mut peak = if raw.segments.is_empty() { device.idle_power } else { 0.0f64 };
    let mut saturation_events = 0;
    let mut was_saturated = false;
    let capacity = device.sm_count as f64 * device.max_threads_per_sm as f64;
    for s in &raw.segments {
        let dt = s.end - s.start;
        energy.total += s.power * dt;
        energy.idle += device.idle_power * dt;
        energy.dynamic += s.dynamic * dt;
        energy.transfer += s.transfer * dt;
        if s.saturated {
            energy.clamped += (device.idle_power + s.dynamic + s.transfer - s.power) * dt;
        }
        if s.resident_kernels > 0 {
            active += dt;
            occupied += s.resident_threads as f64 / capacity * dt;
        }
        if s.benchmarks_active >= 2 {
            overlap += dt;
        }
        peak = peak.max(s.power);
        if s.saturated && !was_saturated {
            saturation_events += 1;
        }
        was_saturated = s.saturated;
    }
    if saturation_events > 0 {
        log::warn!(
            "{}: power clamped at TDP {} W in {} episode(s)",
            device.device_id,
            device.tdp,
            saturation_events
        );
    }
    let denom = match params.concurrency_denominator {
        ConcurrencyDenominator::Active => active,
        ConcurrencyDenominator::Makespan => raw.makespan,
    };
    let power_trace = sample_trace(&raw.segments, raw.makespan, device.idle_power, params.trace_resolution);
    SimResult {
        device_id: device.device_id.clone(),
        timeline: Timeline {
            intervals: raw.intervals,
            makespan: raw.makespan,
        },
        power_trace,
        segments: raw.segments,
        concurrency: if denom > 0.0 { (overlap / denom).clamp(0.0, 1.0) } else { 0.0 },
        occupancy: if active > 0.0 { (occupied / active).clamp(0.0, 1.0) } else { 0.0 },
        saturation_events,
        energy,
        avg_power: if raw.makespan > 0.0 { energy.total / raw.makespan } else { device.idle_power },
        peak_power: peak,
        overlap_time: overlap,
        kernel_active_time: active,
        instructions: raw.instructions,
        blocks: raw.blocks,
    }
}

/// Event-driven greedy schedule of `programs` on `device`.
///
/// A single-queue device keeps at most one kernel resident at a time; on a
/// multi-queue device each stream feeds hardware queue `stream mod
/// hw_queue_count` and kernels from different queues share SMs. Ready work
/// starts in issue order, ties by stream.
pub fn simulate(device: &DeviceModel, programs: &[StreamProgram], params: &SimParams) -> Result<SimResult, SimError> {
    let raw = run(device, programs, params)?;
    Ok(summarize(device, params, raw))
}

/// Programs run one after another with a full barrier in between.
pub fn sequential_baseline(
    device: &DeviceModel,
    programs: &[StreamProgram],
    params: &SimParams,
) -> Result<SimResult, SimError> {
    if programs.is_empty() {
        return Err(SimError::EmptyProgram(String::new()));
    }
    let mut acc = RawRun {
        intervals: Vec::new(),
        segments: Vec::new(),
        blocks: Vec::new(),
        makespan: 0.0,
        instructions: 0,
    };
    for p in programs {
        let raw = run(device, std::slice::from_ref(p), params)?;
        let off = acc.makespan;
        acc.intervals.extend(raw.intervals.into_iter().map(|iv| Interval {
            start: iv.start + off,
            end: iv.end + off,
            ..iv
        }));
        acc.segments.extend(raw.segments.into_iter().map(|s| PowerSegment {
            start: s.start + off,
            end: s.end + off,
            ..s
        }));
        acc.blocks.extend(raw.blocks.into_iter().map(|b| BlockRecord {
            start: b.start + off,
            end: b.end + off,
            ..b
        }));
        acc.makespan += raw.makespan;
        acc.instructions += raw.instructions;
    }
    Ok(summarize(device, params, acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn device(queue: QueueModel) -> DeviceModel {
        DeviceModel {
            device_id: "dev".into(),
            queue_model: queue,
            hw_queue_count: if queue == QueueModel::Single { 1 } else { 32 },
            copy_engines: 1,
            sm_count: 4,
            regs_per_sm: 65536,
            shared_mem_per_sm: 49152,
            max_threads_per_sm: 2048,
            max_blocks_per_sm: 16,
            idle_power: 30.0,
            tdp: 1000.0,
            h2d_bandwidth: 1e9,
            d2h_bandwidth: 1e9,
        }
    }

    fn kernel(id: &str, grid: u64, dur: f64, power: f64) -> KernelSpec {
        KernelSpec {
            kernel_id: id.into(),
            grid_blocks: grid,
            threads_per_block: 256,
            regs_per_thread: 16,
            shared_mem_per_block: 0,
            block_duration: dur,
            dynamic_power: power,
            instructions: 1000,
        }
    }

    fn params() -> SimParams {
        SimParams {
            launch_latency: 0.0,
            ..SimParams::default()
        }
    }

    #[test]
    fn parse_template_ops() {
        assert_eq!("H2D:4096".parse::<TemplateOp>().unwrap(), TemplateOp::H2D(4096));
        assert_eq!(" K: bfs ".parse::<TemplateOp>().unwrap(), TemplateOp::Kernel("bfs".into()));
        assert_eq!("barrier".parse::<TemplateOp>().unwrap(), TemplateOp::Barrier);
        assert!("H2D:x".parse::<TemplateOp>().is_err());
        assert!("K:".parse::<TemplateOp>().is_err());
    }

    #[test]
    fn slicing_ten_megabytes_by_four() {
        let mb = 1 << 20;
        assert_eq!(slice_bytes(10 * mb, Some(4 * mb)).unwrap(), vec![4 * mb, 4 * mb, 2 * mb]);
        assert_eq!(slice_bytes(8, Some(4)).unwrap(), vec![4, 4]);
        assert_eq!(slice_bytes(8, None).unwrap(), vec![8]);
        assert_eq!(slice_bytes(8, Some(0)), Err(SimError::InvalidSlice));
    }

    #[test]
    fn single_stream_has_no_concurrency() {
        let p = StreamProgram::new(
            "a",
            "a",
            vec![Op::H2D { bytes: 1_000_000_000 }, Op::Kernel(kernel("k", 4, 2.0, 50.0)), Op::D2H { bytes: 500_000_000 }],
        );
        let r = simulate(&device(QueueModel::Multi), &[p], &params()).unwrap();
        assert_eq!(r.concurrency, 0.0);
        assert!((r.makespan() - 3.5).abs() < 1e-12);
        // 4 blocks of 256 threads over 4 × 2048 slots
        assert!((r.occupancy - 1024.0 / 8192.0).abs() < 1e-12);
    }

    #[test]
    fn waves_when_grid_exceeds_capacity() {
        let mut k = kernel("k", 8, 1.0, 80.0);
        k.threads_per_block = 2048;
        k.regs_per_thread = 1;
        let p = StreamProgram::new("a", "a", vec![Op::Kernel(k)]);
        let r = simulate(&device(QueueModel::Multi), &[p], &params()).unwrap();
        assert!((r.makespan() - 2.0).abs() < 1e-12);
        // half the grid resident throughout
        assert!((r.energy.dynamic - 80.0).abs() < 1e-9);
    }

    #[test]
    fn oversize_block_is_rejected() {
        let mut k = kernel("big", 1, 1.0, 1.0);
        k.shared_mem_per_block = 1 << 20;
        let p = StreamProgram::new("a", "a", vec![Op::Kernel(k)]);
        assert!(matches!(
            simulate(&device(QueueModel::Multi), &[p], &params()),
            Err(SimError::UnschedulableBlock { .. })
        ));
        assert_eq!(
            simulate(&device(QueueModel::Multi), &[], &params()).unwrap_err(),
            SimError::EmptyProgram(String::new())
        );
    }

    #[test]
    fn barrier_serializes_streams() {
        let a = StreamProgram {
            issue: vec![0, 1],
            ..StreamProgram::new("a", "a", vec![Op::Kernel(kernel("ka", 1, 2.0, 10.0)), Op::Barrier])
        };
        let b = StreamProgram {
            issue: vec![2],
            ..StreamProgram::new("b", "b", vec![Op::Kernel(kernel("kb", 1, 2.0, 10.0))])
        };
        let r = simulate(&device(QueueModel::Multi), &[a, b], &params()).unwrap();
        assert!((r.makespan() - 4.0).abs() < 1e-12);
        assert_eq!(r.concurrency, 0.0);
    }

    #[test]
    fn issue_orders() {
        let ops = |n| (0..n).map(|_| Op::Barrier).collect::<Vec<_>>();
        let mut ps = vec![StreamProgram::new("a", "a", ops(3)), StreamProgram::new("b", "b", ops(2))];
        assign_issue_order(&mut ps, &LaunchPolicy::BreadthFirst).unwrap();
        assert_eq!((ps[0].issue.clone(), ps[1].issue.clone()), (vec![0, 2, 4], vec![1, 3]));
        assign_issue_order(&mut ps, &LaunchPolicy::DepthFirst).unwrap();
        assert_eq!((ps[0].issue.clone(), ps[1].issue.clone()), (vec![0, 1, 2], vec![3, 4]));
        assign_issue_order(&mut ps, &LaunchPolicy::Custom(vec!["b".into(), "a".into(), "a".into()])).unwrap();
        assert_eq!((ps[0].issue.clone(), ps[1].issue.clone()), (vec![1, 2, 4], vec![0, 3]));
        assert!(matches!(
            assign_issue_order(&mut ps, &LaunchPolicy::Custom(vec!["a".into()])),
            Err(SimError::InvalidCustomOrder(_))
        ));
    }

    fn two_stream(queue: QueueModel) -> SimResult {
        let prog = |id: &str| {
            StreamProgram::new(
                id,
                id,
                vec![
                    Op::H2D { bytes: 1_000_000_000 },
                    Op::Kernel(kernel(&format!("k{id}"), 4, 2.0, 40.0)),
                    Op::D2H { bytes: 1_000_000_000 },
                ],
            )
        };
        let mut ps = vec![prog("1"), prog("2")];
        let order = ["1", "1", "2", "2", "1", "2"].iter().map(|s| s.to_string()).collect();
        assign_issue_order(&mut ps, &LaunchPolicy::Custom(order)).unwrap();
        simulate(&device(queue), &ps, &params()).unwrap()
    }

    #[test]
    fn single_queue_interleaving() {
        let r = two_stream(QueueModel::Single);
        let got: Vec<(String, String, f64, f64)> = r
            .timeline
            .intervals
            .iter()
            .map(|iv| (iv.op.clone(), iv.stream.clone(), iv.start, iv.end))
            .collect();
        let want: [(&str, &str, f64, f64); 6] = [
            ("H2D", "1", 0.0, 1.0),
            ("K:k1", "1", 1.0, 3.0),
            ("H2D", "2", 1.0, 2.0),
            ("K:k2", "2", 3.0, 5.0),
            ("D2H", "1", 3.0, 4.0),
            ("D2H", "2", 5.0, 6.0),
        ];
        let mut want: Vec<_> = want.iter().map(|w| (w.0.to_string(), w.1.to_string(), w.2, w.3)).collect();
        want.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        let mut got_sorted = got.clone();
        got_sorted.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        assert_eq!(got_sorted, want);
        assert_eq!(r.concurrency, 0.0);
    }

    #[test]
    fn multi_queue_overlaps_kernels() {
        let r = two_stream(QueueModel::Multi);
        assert!(r.concurrency > 0.0);
        assert!(r.overlap_time > 0.0);
    }
}
