mod common;

use std::path::Path;
use std::process::Command;

use kernelweave::config::ConfigDoc;
use kernelweave::report::{run_pipeline, run_stage, ReportBundle, RunConfig, Stage};

fn fixture() -> RunConfig {
    RunConfig::load(&common::fixture_config()).unwrap()
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kernelweave"))
        .args(args)
        .env("KERNELWEAVE_LOG", "error")
        .output()
        .unwrap()
}

fn schema_errors(report: &serde_json::Value) -> Vec<String> {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/report.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    validator.iter_errors(report).map(|e| format!("{} at {}", e, e.instance_path)).collect()
}

#[test]
fn fixture_bundle_has_expected_shape() {
    let b = run_pipeline(&fixture()).unwrap();
    assert_eq!(b.benchmarks.len(), 17);
    let count = |track: &str| b.partitions.iter().filter(|p| p.track == track).count();
    assert_eq!(count("characteristics"), 2);
    assert_eq!(count("power"), 6);
    assert_eq!(b.consensus.labeling.k, 9);
    assert!(b.specs.len() >= 9, "{} specs", b.specs.len());
    assert_eq!(b.simulations.len(), b.specs.len() * 3);
    for s in &b.simulations {
        assert!(s.report.is_some() != s.error.is_some(), "{} on {}", s.spec_id, s.device_id);
    }
    for spec in &b.specs {
        assert!(b.simulations.iter().any(|s| s.spec_id == spec.id && s.strategy == spec.strategy));
    }
    assert_eq!(b.aggregates.len(), 3);
    assert_eq!(b.config, fixture());
    // the trace supplies the m2050 row for HW
    let ingest = kernelweave::report::run_ingest(&fixture()).unwrap();
    let hw = ingest.powerperf.iter().find(|r| r.device_id == "m2050" && r.benchmark_id == "HW").unwrap();
    assert_eq!(hw.comm_overhead, Some(18705));
}

#[test]
fn report_validates_against_schema() {
    let b = run_pipeline(&fixture()).unwrap();
    let value = serde_json::to_value(&b).unwrap();
    let errors = schema_errors(&value);
    assert!(errors.is_empty(), "{errors:#?}");

    let mut broken = value.clone();
    broken["reports"][0]["strategy"] = "sideways".into();
    broken.as_object_mut().unwrap().remove("consensus");
    assert!(schema_errors(&broken).len() >= 2);

    let back: ReportBundle = serde_json::from_value(value).unwrap();
    assert_eq!(back.specs, b.specs);
}

#[test]
fn empty_strategy_list_yields_no_specs() {
    let mut cfg = fixture();
    cfg.pairgen.strategies.clear();
    let b = run_pipeline(&cfg).unwrap();
    assert!(b.specs.is_empty() && b.simulations.is_empty() && b.reports.is_empty());
    assert_eq!(b.partitions.len(), 8);
}

#[test]
fn missing_scenario_is_recorded_per_spec() {
    let mut cfg = fixture();
    cfg.scenario = None;
    let b = run_pipeline(&cfg).unwrap();
    assert!(!b.specs.is_empty());
    assert_eq!(b.errors.len(), b.specs.len());
    assert!(b.errors.iter().all(|e| e.stage == "simulate"));
}

#[test]
fn unknown_kernel_in_program_fails_only_that_spec() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::data_dir();
    for f in std::fs::read_dir(&data).unwrap() {
        let f = f.unwrap().path();
        if f.is_file() {
            std::fs::copy(&f, dir.path().join(f.file_name().unwrap())).unwrap();
        }
    }
    // drop the SAD program so every SAD set fails in simulation
    let scenario = std::fs::read_to_string(dir.path().join("scenario.cfg")).unwrap();
    let start = scenario.find("[program.SAD]").unwrap();
    let end = scenario[start..].find("\n\n").map(|e| start + e + 2).unwrap_or(scenario.len());
    std::fs::write(dir.path().join("scenario.cfg"), format!("{}{}", &scenario[..start], &scenario[end..])).unwrap();

    let b = run_pipeline(&RunConfig::load(&dir.path().join("run.cfg")).unwrap()).unwrap();
    let failed: Vec<_> = b.simulations.iter().filter(|s| s.error.is_some()).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|s| s.spec_id.split('_').any(|m| m == "SAD")));
    assert!(b.reports.len() + failed.len() == b.simulations.len());
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    let base = common::data_dir();
    let parse = |text: &str| RunConfig::from_doc(&text.parse::<ConfigDoc>().unwrap(), &base);
    assert!(parse("[input]\ncharacteristics = characteristics.csv\npowerperf = powerperf.csv\n[coappearance]\nset = A, B").is_ok());
    assert!(parse("[input]\ncharacteristics = characteristics.csv\ncolour = blue").is_err());
    assert!(parse("[input]\ncharacteristics = characteristics.csv\n[analysis]\nk = 0").is_err());
    assert!(parse("[input]\ncharacteristics = characteristics.csv\n[pairgen]\nsizes = 5").is_err());
    assert!(parse("[input]\ncharacteristics = characteristics.csv\n[mystery]\na = 1").is_err());
}

#[test]
fn cli_all_is_byte_identical_across_runs_and_matches_staged_runs() {
    let cfg = common::fixture_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = cli(&["all", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let report = std::fs::read(a.path().join("report.json")).unwrap();
    assert_eq!(report, std::fs::read(b.path().join("report.json")).unwrap());
    for f in ["metrics.csv", "plots/pca_characteristics.svg", "plots/dendrogram_power_k20.svg"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }

    let staged = tempfile::tempdir().unwrap();
    for stage in ["ingest", "characterize", "ensemble", "pair", "simulate", "report"] {
        let out = cli(&[stage, "--config", cfg.to_str().unwrap(), "--out", staged.path().to_str().unwrap()]);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(report, std::fs::read(staged.path().join("report.json")).unwrap());

    let value: serde_json::Value = serde_json::from_slice(&report).unwrap();
    assert!(schema_errors(&value).is_empty());
}

#[test]
fn seed_and_k_overrides_reach_the_report() {
    let cfg = common::fixture_config();
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "characterize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--k",
        "4",
        "--seed",
        "99",
    ]);
    assert!(out.status.success());
    let ch: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("characterize.json")).unwrap()).unwrap();
    assert_eq!(ch["k"], 4);
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn exit_codes() {
    let cfg = common::fixture_config();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    assert_eq!(cli(&["all", "--config", "/no/such/file.cfg", "--out", out_dir]).status.code(), Some(1));
    assert_eq!(cli(&["all", "--config", cfg.to_str().unwrap(), "--k", "0", "--out", out_dir]).status.code(), Some(1));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
    // more clusters than benchmarks is a statistics failure
    let out = cli(&["all", "--config", cfg.to_str().unwrap(), "--k", "40", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn stage_runner_resumes_from_artifacts() {
    let cfg = fixture();
    let dir = tempfile::tempdir().unwrap();
    run_stage(&cfg, Some(Stage::Pair), dir.path()).unwrap();
    for f in ["ingest.json", "characterize.json", "ensemble.json", "workload_db.json", "pairs.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert!(!dir.path().join("simulations.json").exists());
    // a tampered upstream artifact is picked up by later stages
    let pairs = dir.path().join("pairs.json");
    let mut specs: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&pairs).unwrap()).unwrap();
    specs.truncate(1);
    std::fs::write(&pairs, serde_json::to_string(&specs).unwrap()).unwrap();
    run_stage(&cfg, Some(Stage::Report), dir.path()).unwrap();
    let report: ReportBundle = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.specs.len(), 1);
    assert_eq!(report.simulations.len(), 3);
}
