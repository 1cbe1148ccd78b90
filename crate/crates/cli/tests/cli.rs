mod common;

use common::{dscd, scratch_dir, write_config, SMALL_TOML};
use dscd_cli::artifacts::{parse_csv, RunManifest, CSV_HEADER, MANIFEST_FILE};
use dscd_core::config::{Mode, SimConfig};

fn run_into(dir: &std::path::Path, out: &str, extra: &[&str]) -> std::process::Output {
    let cfg = write_config(dir, SMALL_TOML);
    let out = dir.join(out);
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    dscd(&args)
}

#[test]
fn defaults_print_a_loadable_config() {
    let out = dscd(&["defaults"]);
    assert!(out.status.success());
    let cfg = SimConfig::from_toml(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, SimConfig::default());
}

#[test]
fn run_writes_manifest_runs_aggregate_and_summary() {
    let dir = scratch_dir("layout");
    let out = run_into(&dir, "out", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.join("out");
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.files, ["run-000.csv", "run-001.csv", "aggregate.csv", "summary.json"]);
    for f in &manifest.files {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let resolved = manifest.resolved_config().unwrap();
    assert_eq!(resolved.ttis, 300);
    assert_eq!(resolved.mode, Mode::Dscd);
    let records = parse_csv(&std::fs::read_to_string(out_dir.join("run-000.csv")).unwrap()).unwrap();
    // 300 TTIs in windows of 50, three classes each
    assert_eq!(records.len(), 6 * 3);
}

#[test]
fn reruns_are_byte_identical_and_independent_of_threads() {
    let dir = scratch_dir("determinism");
    assert!(run_into(&dir, "a", &["--threads", "1"]).status.success());
    assert!(run_into(&dir, "b", &["--threads", "2"]).status.success());
    for f in ["run-000.csv", "run-001.csv", "aggregate.csv", "summary.json"] {
        let a = std::fs::read(dir.join("a").join(f)).unwrap();
        let b = std::fs::read(dir.join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = scratch_dir("flags");
    let out = run_into(&dir, "out", &["--mode", "nf-cu", "--seed", "42", "--runs", "1", "--ttis", "100"]);
    assert!(out.status.success());
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out").join(MANIFEST_FILE)).unwrap()).unwrap();
    let cfg = manifest.resolved_config().unwrap();
    assert_eq!((cfg.mode, cfg.seed, cfg.runs, cfg.ttis), (Mode::NfCu, 42, 1, 100));
    // the rest still comes from the file
    assert_eq!(cfg.n_ues, 8);
}

#[test]
fn zero_ttis_give_header_only_files() {
    let dir = scratch_dir("zero");
    assert!(run_into(&dir, "out", &["--ttis", "0", "--runs", "1"]).status.success());
    for f in ["run-000.csv", "aggregate.csv"] {
        assert_eq!(std::fs::read_to_string(dir.join("out").join(f)).unwrap(), format!("{CSV_HEADER}\n"));
    }
}

#[test]
fn nf_du_reports_every_ue_tti_at_the_du() {
    let dir = scratch_dir("nfdu");
    assert!(run_into(&dir, "out", &["--mode", "nf-du"]).status.success());
    let records = parse_csv(&std::fs::read_to_string(dir.join("out").join("aggregate.csv")).unwrap()).unwrap();
    let with_ues: Vec<_> = records.iter().filter(|r| r.du_ratio.is_some()).collect();
    assert!(!with_ues.is_empty());
    for r in with_ues {
        assert_eq!(r.du_ratio, Some(1.0));
        assert_eq!(r.cu_ratio, Some(0.0));
    }
}

#[test]
fn json_output_matches_csv_output() {
    let dir = scratch_dir("json");
    assert!(run_into(&dir, "csv", &[]).status.success());
    assert!(run_into(&dir, "json", &["--format", "json"]).status.success());
    let csv = parse_csv(&std::fs::read_to_string(dir.join("csv/aggregate.csv")).unwrap()).unwrap();
    let json: Vec<dscd_cli::artifacts::MetricRecord> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("json/aggregate.json")).unwrap()).unwrap();
    assert_eq!(csv, json);
}

#[test]
fn out_of_envelope_density_is_a_config_error_unless_overridden() {
    let dir = scratch_dir("density");
    let cfg = write_config(&dir, &format!("urllc_density = 0.5\n{SMALL_TOML}"));
    let out_dir = dir.join("out");
    let base = ["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--ttis", "20"];
    let out = dscd(&base);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("urllc_density"));
    let mut with_override = base.to_vec();
    with_override.push("--override");
    assert!(dscd(&with_override).status.success());
}

#[test]
fn unknown_config_key_is_named() {
    let dir = scratch_dir("unknown");
    let cfg = write_config(&dir, "n_cels = 3\n");
    let out = dscd(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_cels"));
}

#[test]
fn missing_config_file_exits_with_config_error() {
    let out = dscd(&["run", "--config", "/nonexistent/dscd.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_against_itself_has_zero_deltas() {
    let dir = scratch_dir("cmp-self");
    assert!(run_into(&dir, "out", &[]).status.success());
    let agg = dir.join("out/aggregate.csv");
    let out = dscd(&["compare", agg.to_str().unwrap(), agg.to_str().unwrap(), "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["fingerprint_mismatch"], false);
    assert_eq!(v["seed_mismatch"], false);
    for d in v["others"][0]["deltas"].as_array().unwrap() {
        if !d["delta"].is_null() {
            assert_eq!(d["delta"].as_f64().unwrap(), 0.0);
        }
    }
}

#[test]
fn compare_flags_seed_and_config_differences() {
    let dir = scratch_dir("cmp-seed");
    assert!(run_into(&dir, "a", &[]).status.success());
    assert!(run_into(&dir, "b", &["--seed", "9", "--mode", "nf-cu"]).status.success());
    assert!(run_into(&dir, "c", &["--ttis", "200"]).status.success());
    let a = dir.join("a/aggregate.csv");
    let b = dir.join("b/aggregate.csv");
    let c = dir.join("c/aggregate.csv");

    let out = dscd(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("seeds differ"));
    // mode is not part of the fingerprint
    assert!(!text.contains("fingerprints differ"));

    let out = dscd(&["compare", a.to_str().unwrap(), c.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("fingerprints differ"));
}

#[test]
fn compare_needs_two_files() {
    let out = dscd(&["compare", "only.csv"]);
    assert!(!out.status.success());
}
