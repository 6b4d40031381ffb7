//! Shared builders for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, SymmetricEigen};

use kernelweave::ingest::{DeviceModel, KernelSpec, QueueModel};
use kernelweave::statkit::{FeatureMatrix, PartitionLabeling, PartitionSource};
use kernelweave::streamsim::{Op, SimParams, StreamProgram};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn fixture_config() -> PathBuf {
    data_dir().join("run.cfg")
}

pub fn device(queue: QueueModel, sm_count: u32, idle: f64, tdp: f64) -> DeviceModel {
    DeviceModel {
        device_id: format!("{queue:?}").to_lowercase(),
        queue_model: queue,
        hw_queue_count: if queue == QueueModel::Single { 1 } else { 32 },
        copy_engines: 1,
        sm_count,
        regs_per_sm: 65536,
        shared_mem_per_sm: 49152,
        max_threads_per_sm: 2048,
        max_blocks_per_sm: 16,
        idle_power: idle,
        tdp,
        h2d_bandwidth: 1e9,
        d2h_bandwidth: 1e9,
    }
}

pub fn kernel(id: &str, grid: u64, block_duration: f64, power: f64) -> KernelSpec {
    KernelSpec {
        kernel_id: id.into(),
        grid_blocks: grid,
        threads_per_block: 256,
        regs_per_thread: 16,
        shared_mem_per_block: 0,
        block_duration,
        dynamic_power: power,
        instructions: 1_000_000,
    }
}

pub fn h2d_k_d2h(stream: &str, bytes: u64, k: KernelSpec) -> StreamProgram {
    StreamProgram::new(stream, stream, vec![Op::H2D { bytes }, Op::Kernel(k), Op::D2H { bytes }])
}

pub fn no_latency() -> SimParams {
    SimParams {
        launch_latency: 0.0,
        ..SimParams::default()
    }
}

pub fn groups(source: PartitionSource, gs: &[&[&str]]) -> PartitionLabeling {
    let owned: Vec<Vec<&str>> = gs.iter().map(|g| g.to_vec()).collect();
    PartitionLabeling::from_groups(source, &owned)
}

/// Benchmark groupings published for the 17-benchmark suite.
pub fn published_kmeans() -> PartitionLabeling {
    groups(
        PartitionSource::Kmeans,
        &[
            &["BN", "CFD"],
            &["NW", "LM"],
            &["AES", "RAY", "BFS"],
            &["BS", "HY"],
            &["NQ", "MM"],
            &["SAD", "PF"],
            &["LUD", "FFT"],
            &["SPMV"],
            &["HW"],
        ],
    )
}

pub fn published_hierarchical() -> PartitionLabeling {
    groups(
        PartitionSource::Hierarchical,
        &[
            &["BN", "BS", "HW"],
            &["AES", "SPMV"],
            &["SAD", "MM"],
            &["BFS", "NQ"],
            &["LUD", "FFT"],
            &["NW", "PF"],
            &["LM", "CFD"],
            &["HY"],
            &["RAY"],
        ],
    )
}

pub fn published_consensus() -> PartitionLabeling {
    groups(
        PartitionSource::Ensemble,
        &[
            &["BN", "HW"],
            &["BS", "HY"],
            &["AES", "SPMV"],
            &["MM", "NQ"],
            &["BFS", "RAY"],
            &["FFT", "LUD"],
            &["NW", "PF"],
            &["LM", "CFD"],
            &["SAD"],
        ],
    )
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// A random multi-stream scenario that never reaches TDP.
pub fn random_scenario<R: rand::Rng>(rng: &mut R) -> (DeviceModel, Vec<StreamProgram>, SimParams) {
    use kernelweave::pairgen::LaunchPolicy;
    use kernelweave::streamsim::assign_issue_order;

    let queue = if rng.random_bool(0.5) { QueueModel::Single } else { QueueModel::Multi };
    let mut dev = device(queue, rng.random_range(1..=8), rng.random_range(10.0..60.0), 1e9);
    dev.copy_engines = rng.random_range(1..=2);
    if queue == QueueModel::Multi {
        dev.hw_queue_count = rng.random_range(1..=32);
    }
    let n_streams = rng.random_range(1..=4);
    let mut programs: Vec<StreamProgram> = (0..n_streams)
        .map(|s| {
            let ops = (0..rng.random_range(1..=5))
                .map(|i| match rng.random_range(0..10) {
                    0..=1 => Op::H2D {
                        bytes: rng.random_range(1_000_000..1_000_000_000),
                    },
                    2..=3 => Op::D2H {
                        bytes: rng.random_range(1_000_000..1_000_000_000),
                    },
                    4 => Op::Barrier,
                    _ => Op::Kernel(KernelSpec {
                        kernel_id: format!("k{s}_{i}"),
                        grid_blocks: rng.random_range(1..=64),
                        threads_per_block: [64, 128, 256, 512, 1024][rng.random_range(0..5)],
                        regs_per_thread: rng.random_range(8..=64),
                        shared_mem_per_block: rng.random_range(0..=16384),
                        block_duration: rng.random_range(1e-4..1e-1),
                        dynamic_power: rng.random_range(5.0..150.0),
                        instructions: rng.random_range(1_000..1_000_000_000),
                    }),
                })
                .collect();
            let id = format!("s{s}");
            StreamProgram::new(&id, &id, ops)
        })
        .collect();
    let policy = if rng.random_bool(0.5) { LaunchPolicy::BreadthFirst } else { LaunchPolicy::DepthFirst };
    assign_issue_order(&mut programs, &policy).unwrap();
    let params = SimParams {
        launch_latency: if rng.random_bool(0.5) { 0.0 } else { 5e-6 },
        record_blocks: true,
        ..SimParams::default()
    };
    (dev, programs, params)
}

/// Eigenpairs of the sample covariance, sorted by decreasing eigenvalue.
pub fn covariance_eigen(values: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = values.len();
    let p = values[0].len();
    let x = DMatrix::from_fn(n, p, |i, j| values[i][j]);
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..p)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.into_iter().unzip()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimum within-cluster sum of squares over all two-way splits.
pub fn exhaustive_two_means(values: &[Vec<f64>]) -> f64 {
    let n = values.len();
    let sse = |members: &[usize]| {
        let p = values[0].len();
        let c: Vec<f64> = (0..p)
            .map(|j| members.iter().map(|&i| values[i][j]).sum::<f64>() / members.len() as f64)
            .collect();
        members
            .iter()
            .map(|&i| values[i].iter().zip(&c).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
            .sum::<f64>()
    };
    (1..(1u32 << (n - 1)))
        .map(|mask| {
            let (a, b): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| i < n - 1 && mask & (1 << i) != 0);
            sse(&a) + sse(&b)
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn matrix(values: Vec<Vec<f64>>) -> FeatureMatrix {
    let n = values.len();
    let p = values[0].len();
    FeatureMatrix::new(
        (0..n).map(|i| format!("r{i}")).collect(),
        (0..p).map(|j| format!("c{j}")).collect(),
        values,
    )
    .unwrap()
}
