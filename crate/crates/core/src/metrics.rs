//! Power, energy and energy-delay impact of running kernels concurrently.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PowerPerfVector;
use crate::pairgen::{MultiKernelSpec, Strategy};
use crate::streamsim::SimResult;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("baseline power must be positive")]
    ZeroBaselinePower,
    #[error("baseline energy must be positive")]
    ZeroBaselineEnergy,
    #[error("{0} must be positive")]
    NonPositiveInput(&'static str),
    #[error("energies must be positive")]
    ZeroEnergy,
    #[error("overlap duration must be non-negative")]
    NegativeOverlap,
    #[error("no member runs supplied")]
    NoMembers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerImpact {
    pub ipo_avg: f64,
    pub ipo_peak: f64,
}

/// Percent power reduction of the concurrent run; negative when it draws more.
pub fn compute_ipo(seq: &PowerPerfVector, conc: &PowerPerfVector) -> Result<PowerImpact, MetricsError> {
    if !(seq.avg_power > 0.0 && seq.peak_power > 0.0) {
        return Err(MetricsError::ZeroBaselinePower);
    }
    Ok(PowerImpact {
        ipo_avg: 100.0 * (seq.avg_power - conc.avg_power) / seq.avg_power,
        ipo_peak: 100.0 * (seq.peak_power - conc.peak_power) / seq.peak_power,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyImpact {
    pub ieo_pct: f64,
    /// Joules saved per second of overlap; `None` without overlap.
    pub ieo_rate: Option<f64>,
}

pub fn compute_ieo(seq_energy: f64, conc_energy: f64, overlap_duration: f64) -> Result<EnergyImpact, MetricsError> {
    if !(seq_energy > 0.0) {
        return Err(MetricsError::ZeroBaselineEnergy);
    }
    if !(overlap_duration >= 0.0) {
        return Err(MetricsError::NegativeOverlap);
    }
    let saved = seq_energy - conc_energy;
    Ok(EnergyImpact {
        ieo_pct: 100.0 * saved / seq_energy,
        ieo_rate: (overlap_duration > 0.0).then(|| saved / overlap_duration),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub energy: f64,
    pub duration: f64,
}

/// Percent energy-delay-product improvement, `100·(1 − EDP_conc/EDP_seq)`.
pub fn compute_ic(seq: RunSummary, conc: RunSummary) -> Result<f64, MetricsError> {
    for (v, name) in [
        (seq.energy, "sequential energy"),
        (seq.duration, "sequential duration"),
        (conc.energy, "concurrent energy"),
        (conc.duration, "concurrent duration"),
    ] {
        if !(v > 0.0) {
            return Err(MetricsError::NonPositiveInput(name));
        }
    }
    Ok(100.0 * (1.0 - (conc.energy * conc.duration) / (seq.energy * seq.duration)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiencies {
    /// Summed member energy over concurrent energy.
    pub energy_efficiency: f64,
    /// Instructions per joule.
    pub ipw_conc: f64,
    pub ipw_seq: f64,
}

pub fn compute_efficiencies(members: &[PowerPerfVector], conc: &PowerPerfVector) -> Result<Efficiencies, MetricsError> {
    if members.is_empty() {
        return Err(MetricsError::NoMembers);
    }
    if !(conc.total_energy > 0.0) || members.iter().any(|m| !(m.total_energy > 0.0)) {
        return Err(MetricsError::ZeroEnergy);
    }
    let seq_energy: f64 = members.iter().map(|m| m.total_energy).sum();
    let seq_instr: f64 = members.iter().map(PowerPerfVector::instructions).sum();
    Ok(Efficiencies {
        energy_efficiency: seq_energy / conc.total_energy,
        ipw_conc: conc.instructions() / conc.total_energy,
        ipw_seq: seq_instr / seq_energy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcurrencyReport {
    pub spec_id: String,
    pub strategy: Strategy,
    pub device_id: String,
    pub concurrency: f64,
    pub ipo_avg: f64,
    pub ipo_peak: f64,
    pub ieo_pct: f64,
    pub ieo_rate: Option<f64>,
    pub edp_delta: f64,
    pub ipw_conc: f64,
    pub ipw_seq: f64,
    pub energy_efficiency: f64,
    pub occupancy_conc: f64,
    pub occupancy_seq: f64,
    pub energy_seq: f64,
    pub energy_conc: f64,
    pub makespan_seq: f64,
    pub makespan_conc: f64,
    pub overlap_time: f64,
    pub saturation_events: usize,
}

/// Metrics for one workload set on one device. `members` are the
/// stand-alone runs of each member, `seq` their back-to-back baseline.
pub fn concurrency_report(
    spec: &MultiKernelSpec,
    members: &[SimResult],
    seq: &SimResult,
    conc: &SimResult,
) -> Result<ConcurrencyReport, MetricsError> {
    let seq_pp = seq.powerperf(&spec.id);
    let conc_pp = conc.powerperf(&spec.id);
    let member_pp: Vec<PowerPerfVector> = members
        .iter()
        .zip(&spec.members)
        .map(|(m, id)| m.powerperf(id))
        .collect();
    let ipo = compute_ipo(&seq_pp, &conc_pp)?;
    let ieo = compute_ieo(seq.energy.total, conc.energy.total, conc.overlap_time)?;
    let edp_delta = compute_ic(
        RunSummary {
            energy: seq.energy.total,
            duration: seq.makespan(),
        },
        RunSummary {
            energy: conc.energy.total,
            duration: conc.makespan(),
        },
    )?;
    let eff = compute_efficiencies(&member_pp, &conc_pp)?;
    Ok(ConcurrencyReport {
        spec_id: spec.id.clone(),
        strategy: spec.strategy,
        device_id: conc.device_id.clone(),
        concurrency: conc.concurrency,
        ipo_avg: ipo.ipo_avg,
        ipo_peak: ipo.ipo_peak,
        ieo_pct: ieo.ieo_pct,
        ieo_rate: ieo.ieo_rate,
        edp_delta,
        ipw_conc: eff.ipw_conc,
        ipw_seq: eff.ipw_seq,
        energy_efficiency: eff.energy_efficiency,
        occupancy_conc: conc.occupancy,
        occupancy_seq: seq.occupancy,
        energy_seq: seq.energy.total,
        energy_conc: conc.energy.total,
        makespan_seq: seq.makespan(),
        makespan_conc: conc.makespan(),
        overlap_time: conc.overlap_time,
        saturation_events: conc.saturation_events,
    })
}

const CSV_HEADER: [&str; 16] = [
    "spec_id",
    "strategy",
    "device_id",
    "concurrency",
    "ipo_avg",
    "ipo_peak",
    "ieo_pct",
    "ieo_rate",
    "edp_delta",
    "ipw_conc_millions",
    "ipw_seq_millions",
    "energy_efficiency",
    "occupancy_conc",
    "occupancy_seq",
    "energy_seq",
    "energy_conc",
];

/// One row per report; IPW in millions of instructions per joule, undefined
/// values as empty cells.
pub fn metrics_csv(reports: &[ConcurrencyReport]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.spec_id.clone(),
            r.strategy.as_str().to_string(),
            r.device_id.clone(),
            r.concurrency.to_string(),
            r.ipo_avg.to_string(),
            r.ipo_peak.to_string(),
            r.ieo_pct.to_string(),
            r.ieo_rate.map(|v| v.to_string()).unwrap_or_default(),
            r.edp_delta.to_string(),
            (r.ipw_conc / 1e6).to_string(),
            (r.ipw_seq / 1e6).to_string(),
            r.energy_efficiency.to_string(),
            r.occupancy_conc.to_string(),
            r.occupancy_seq.to_string(),
            r.energy_seq.to_string(),
            r.energy_conc.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(avg: f64, peak: f64, energy: f64, instr: f64) -> PowerPerfVector {
        PowerPerfVector {
            benchmark_id: String::new(),
            device_id: String::new(),
            avg_power: avg,
            peak_power: peak,
            total_energy: energy,
            ipw: instr / energy,
            edp: 0.0,
            ipc: None,
            ips: 0.0,
            duration: energy / avg,
            comm_overhead: None,
            max_temp: None,
        }
    }

    #[test]
    fn ipo_examples() {
        let seq = pp(100.0, 100.0, 1.0, 1.0);
        assert_eq!(compute_ipo(&seq, &seq).unwrap(), PowerImpact { ipo_avg: 0.0, ipo_peak: 0.0 });
        assert!((compute_ipo(&seq, &pp(170.0, 170.0, 1.0, 1.0)).unwrap().ipo_avg + 70.0).abs() < 1e-12);
        assert!((compute_ipo(&seq, &pp(39.0, 39.0, 1.0, 1.0)).unwrap().ipo_avg - 61.0).abs() < 1e-12);
        assert_eq!(
            compute_ipo(&pp(0.0, 0.0, 1.0, 1.0), &seq).unwrap_err(),
            MetricsError::ZeroBaselinePower
        );
    }

    #[test]
    fn ieo_examples() {
        let e = compute_ieo(2000.0, 1700.0, 10.0).unwrap();
        assert!((e.ieo_pct - 15.0).abs() < 1e-12);
        assert!((e.ieo_rate.unwrap() - 30.0).abs() < 1e-12);
        let z = compute_ieo(500.0, 500.0, 0.0).unwrap();
        assert_eq!(z, EnergyImpact { ieo_pct: 0.0, ieo_rate: None });
        assert_eq!(compute_ieo(0.0, 1.0, 1.0).unwrap_err(), MetricsError::ZeroBaselineEnergy);
    }

    #[test]
    fn ic_examples() {
        let seq = RunSummary { energy: 2000.0, duration: 20.0 };
        let conc = RunSummary { energy: 1700.0, duration: 10.0 };
        assert!((compute_ic(seq, conc).unwrap() - 57.5).abs() < 1e-12);
        assert_eq!(compute_ic(seq, seq).unwrap(), 0.0);
        let worse = RunSummary { energy: 2500.0, duration: 25.0 };
        assert!(compute_ic(seq, worse).unwrap() < 0.0);
        assert!(matches!(
            compute_ic(seq, RunSummary { energy: 1.0, duration: 0.0 }),
            Err(MetricsError::NonPositiveInput(_))
        ));
    }

    #[test]
    fn efficiency_examples() {
        let m = pp(100.0, 100.0, 1000.0, 4e9);
        let one = compute_efficiencies(std::slice::from_ref(&m), &m).unwrap();
        assert_eq!(one.energy_efficiency, 1.0);
        let two = compute_efficiencies(&[m.clone(), m.clone()], &pp(170.0, 170.0, 1700.0, 8e9)).unwrap();
        assert!((two.energy_efficiency - 2000.0 / 1700.0).abs() < 1e-12);
        assert!((two.ipw_seq - 4e6).abs() < 1e-3);
        assert!(compute_efficiencies(&[], &m).is_err());
    }
}
