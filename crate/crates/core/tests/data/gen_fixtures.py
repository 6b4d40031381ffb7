"""Regenerates the fixture inputs in this directory (deterministic)."""
import csv
import math
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
rng = random.Random(20140601)

GROUPS = [
    ["BN", "HW"], ["BS", "HY"], ["AES", "SPMV"], ["MM", "NQ"], ["BFS", "RAY"],
    ["FFT", "LUD"], ["NW", "PF"], ["LM", "CFD"], ["SAD"],
]
ORDER = ["AES", "BFS", "BN", "BS", "CFD", "FFT", "HW", "HY", "LM", "LUD",
         "MM", "NQ", "NW", "PF", "RAY", "SAD", "SPMV"]
group_of = {b: g for g, members in enumerate(GROUPS) for b in members}

LATENT = 5
centers = [[rng.uniform(-3, 3) for _ in range(LATENT)] for _ in GROUPS]
latent = {b: [c + rng.gauss(0, 0.12) for c in centers[group_of[b]]] for b in ORDER}

# (column, kind, lo, hi)
CHAR_COLS = [
    ("regs_per_thread", "int", 10, 63),
    ("shared_mem_per_block", "int", 0, 16384),
    ("branch_eff_pct", "pct", 70, 100),
    ("tbatch_eff_pct", "pct", 40, 100),
    ("kernel_count", "int", 1, 60),
    ("thread_count", "int", 10000, 4000000),
    ("dyn_inst", "int", 5e7, 5e9),
    ("local_inst", "int", 0, 2e6),
    ("global_inst", "int", 1e6, 3e8),
    ("shared_inst", "int", 0, 4e8),
    ("branch_inst", "int", 1e6, 4e8),
    ("div_branches", "int", 0, 2e7),
    ("atomic_inst", "int", 0, 1e6),
    ("d2h_bytes", "int", 1e5, 2e8),
    ("h2d_bytes", "int", 1e5, 4e8),
    ("offchip_eff_pct", "pct", 20, 100),
]
loading = [[rng.gauss(0, 1) for _ in range(LATENT)] for _ in CHAR_COLS]


def squash(x):
    return 1 / (1 + math.exp(-x / 2.5))


def project(b, weights):
    return sum(w * z for w, z in zip(weights, latent[b])) / math.sqrt(LATENT)


with open(os.path.join(HERE, "characteristics.csv"), "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["benchmark"] + [c[0] for c in CHAR_COLS])
    for b in ORDER:
        row = [b]
        for (name, kind, lo, hi), wts in zip(CHAR_COLS, loading):
            v = lo + (hi - lo) * squash(project(b, wts) + rng.gauss(0, 0.05))
            row.append(f"{v:.2f}" if kind == "pct" else str(int(round(v))))
        w.writerow(row)

DEVICES = {
    "gtx470": dict(idle=52.0, span=140.0, ips=2.2e11),
    "m2050": dict(idle=58.0, span=135.0, ips=2.0e11),
    "k20": dict(idle=40.0, span=150.0, ips=3.1e11),
}
power_load = [rng.gauss(0, 1) for _ in range(LATENT)]
time_load = [rng.gauss(0, 1) for _ in range(LATENT)]
ipc_load = [rng.gauss(0, 1) for _ in range(LATENT)]

# HW on m2050 comes from a measured trace instead of the table.
TRACE_DEVICE, TRACE_BENCH = "m2050", "HW"
trace_target = None

with open(os.path.join(HERE, "powerperf.csv"), "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["device", "benchmark", "avg_power_w", "peak_power_w", "energy_j", "ipw",
                "edp_js", "ipc", "ips", "duration_s", "comm_ops", "max_temp_c"])
    for dev, p in DEVICES.items():
        for b in ORDER:
            avg = p["idle"] + p["span"] * squash(project(b, power_load) + rng.gauss(0, 0.05))
            peak = avg * (1.05 + 0.1 * rng.random())
            dur = 0.5 + 20 * squash(project(b, time_load) + rng.gauss(0, 0.05))
            ipc = 0.3 + 1.5 * squash(project(b, ipc_load))
            instr = p["ips"] * dur * (0.3 + ipc / 2)
            energy = avg * dur
            comm = int(1000 * squash(project(b, time_load)) * 50)
            temp = 55 + 30 * (avg - p["idle"]) / p["span"]
            if (dev, b) == (TRACE_DEVICE, TRACE_BENCH):
                trace_target = dict(avg=avg, dur=dur, instr=instr, ipc=ipc, comm=comm)
                continue
            w.writerow([dev, b, f"{avg:.4f}", f"{peak:.4f}", f"{energy:.6f}",
                        f"{instr / energy:.6e}", "", f"{ipc:.4f}", "", f"{dur:.6f}",
                        comm, f"{temp:.1f}"])

# Two 12 V rails sampled at 100 Hz; the measured window is [0.5, 0.5 + dur].
t = trace_target
dt = 0.01
n = int(round((t["dur"] + 1.0) / dt)) + 1
with open(os.path.join(HERE, "trace_hw_m2050.csv"), "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["time_s", "i_pcie12_a", "i_aux12_a"])
    for i in range(n):
        ts = i * dt
        watts = t["avg"] * (1 + 0.02 * math.sin(2 * math.pi * ts))
        if ts < 0.5 or ts > 0.5 + t["dur"]:
            watts = DEVICES[TRACE_DEVICE]["idle"]
        w.writerow([f"{ts:.2f}", f"{0.4 * watts / 12:.6f}", f"{0.6 * watts / 12:.6f}"])
trace_cfg = (
    f"[trace.hw_m2050]\nfile = trace_hw_m2050.csv\ndevice = {TRACE_DEVICE}\nbenchmark = {TRACE_BENCH}\n"
    f"instructions = {int(t['instr'])}\ncycles = {int(t['instr'] / t['ipc'])}\ncomm_ops = {t['comm']}\n"
    f"t0 = 0.5\nt1 = {0.5 + round(t['dur'] / dt) * dt:.2f}\n"
)

# Scenario: one kernel and one H2D-K-D2H program per benchmark.
with open(os.path.join(HERE, "scenario.cfg"), "w") as f:
    f.write("[sim]\ntransfer_power_w = 10\nlaunch_latency_s = 0.000005\ntrace_resolution_s = 0.0005\n")
    f.write("concurrency_denominator = active\n\n")
    for b in ORDER:
        z = latent[b]
        blocks = 2 ** rng.randint(4, 9)
        tpb = rng.choice([64, 128, 256, 512])
        regs = rng.choice([16, 20, 24, 32, 40])
        smem = rng.choice([0, 0, 2048, 4096, 8192])
        f.write(f"[kernel.k_{b.lower()}]\n")
        f.write(f"grid_blocks = {blocks}\nthreads_per_block = {tpb}\nregs_per_thread = {regs}\n")
        f.write(f"shared_mem_per_block = {smem}\n")
        f.write(f"block_duration = {0.0005 + 0.004 * squash(z[0]):.6f}\n")
        f.write(f"dynamic_power = {40 + 80 * squash(z[1]):.3f}\n")
        f.write(f"instructions = {int(1e7 * (1 + 20 * squash(z[2])))}\n\n")
    for b in ORDER:
        h2d = int(1e6 * (1 + 30 * squash(latent[b][3])))
        d2h = int(1e6 * (1 + 10 * squash(latent[b][4])))
        f.write(f"[program.{b}]\nops = H2D:{h2d}, K:k_{b.lower()}, D2H:{d2h}\nloop_count = 2\n\n")

DEVICE_FILES = {
    "gtx470": dict(queue_model="single", copy_engines=1, sm_count=14, regs_per_sm=32768,
                   shared_mem_per_sm=49152, max_threads_per_sm=1536, max_blocks_per_sm=8,
                   idle_power=52, tdp=215, h2d_bandwidth=5.5e9, d2h_bandwidth=5.0e9),
    "m2050": dict(queue_model="single", copy_engines=2, sm_count=14, regs_per_sm=32768,
                  shared_mem_per_sm=49152, max_threads_per_sm=1536, max_blocks_per_sm=8,
                  idle_power=58, tdp=225, h2d_bandwidth=5.8e9, d2h_bandwidth=5.6e9),
    "k20": dict(queue_model="multi", hw_queue_count=32, copy_engines=2, sm_count=13,
                regs_per_sm=65536, shared_mem_per_sm=49152, max_threads_per_sm=2048,
                max_blocks_per_sm=16, idle_power=40, tdp=225, h2d_bandwidth=6.0e9,
                d2h_bandwidth=6.0e9),
}
for dev, fields in DEVICE_FILES.items():
    with open(os.path.join(HERE, f"{dev}.device"), "w") as f:
        f.write(f"[device]\ndevice_id = {dev}\n")
        for k, v in fields.items():
            f.write(f"{k} = {v}\n")

with open(os.path.join(HERE, "run.cfg"), "w") as f:
    f.write("""[input]
characteristics = characteristics.csv
powerperf = powerperf.csv
devices = gtx470.device, m2050.device, k20.device
scenario = scenario.cfg

[rails]
pcie12 = 12
aux12 = 12

[analysis]
k = 9
n_pc_char = 5
n_pc_power = 3
seed = 7

[weights]
w_char = 2
w_power = 1

[pairgen]
strategies = contending, complementary, coappearance
sizes = 2
contending_quantile = 0.75

[coappearance]
set = SAD, FFT
set = BN, BS
set = BFS, HY

[annotations]
suite = 17-benchmark fixture

[output]
dir = out

""")
    f.write(trace_cfg)
