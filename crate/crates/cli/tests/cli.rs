//! End-to-end checks of the `mgp` binary: artifact layout, determinism,
//! precision contracts, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn mgp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgp"))
        .args(args)
        .current_dir(dir)
        .env_remove("MGP_WORKERS")
        .output()
        .expect("spawn mgp")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    serde_json::from_str(&text).unwrap()
}

/// CSV body with the manifest comment line stripped.
fn csv_body(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn format_flag_selects_artifact_families() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&mgp(dir, &["table1", "--samples", "20000", "--out", "both"]));
    for f in ["table1.json", "table1.csv", "table1_display.csv"] {
        assert!(dir.join("both").join(f).exists(), "missing {f}");
    }
    assert_ok(&mgp(dir, &["table1", "--samples", "20000", "--format", "json", "--out", "j"]));
    assert!(dir.join("j/table1.json").exists());
    assert!(!dir.join("j/table1.csv").exists());
    assert_ok(&mgp(dir, &["table1", "--samples", "20000", "--format", "csv", "--out", "c"]));
    assert!(!dir.join("c/table1.json").exists());
    assert!(dir.join("c/table1.csv").exists());
    assert!(dir.join("c/table1_display.csv").exists());

    // The embedded manifest lists exactly the files that exist next to it.
    let doc = read_json(&dir.join("both/table1.json"));
    let outputs: Vec<String> = doc["manifest"]["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(outputs, vec!["table1.json", "table1.csv", "table1_display.csv"]);
    for f in &outputs {
        assert!(dir.join("both").join(f).exists());
    }
}

#[test]
fn payloads_are_deterministic_across_reruns_and_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let args = ["table1", "--samples", "20000", "--seed", "3"];
    assert_ok(&mgp(dir, &[&args[..], &["--out", "a"]].concat()));
    assert_ok(&mgp(dir, &[&args[..], &["--out", "b"]].concat()));
    let out_c = Command::new(env!("CARGO_BIN_EXE_mgp"))
        .args([&args[..], &["--out", "c"]].concat())
        .current_dir(dir)
        .env("MGP_WORKERS", "2")
        .output()
        .unwrap();
    assert_ok(&out_c);

    let pa = read_json(&dir.join("a/table1.json"))["payload"].clone();
    let pb = read_json(&dir.join("b/table1.json"))["payload"].clone();
    let pc = read_json(&dir.join("c/table1.json"))["payload"].clone();
    assert_eq!(pa, pb, "rerun changed the payload");
    assert_eq!(pa, pc, "worker count changed the payload");
    assert_eq!(csv_body(&dir.join("a/table1.csv")), csv_body(&dir.join("c/table1.csv")));
}

#[test]
fn full_precision_csv_round_trips_to_the_json_payload() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&mgp(dir, &["table1", "--samples", "20000", "--out", "o"]));
    let payload = read_json(&dir.join("o/table1.json"))["payload"].clone();
    let rows = payload["rows"].as_array().unwrap();

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(dir.join("o/table1.csv"))
        .unwrap();
    let records: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), rows.len());
    for (rec, row) in records.iter().zip(rows) {
        assert_eq!(rec[0].parse::<usize>().unwrap(), row["h"].as_u64().unwrap() as usize);
        let expect: Vec<f64> = ["tau_q", "theta_q"]
            .iter()
            .flat_map(|k| row[k].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()))
            .chain([row["lambda_iqr"].as_f64().unwrap()])
            .collect();
        for (cell, want) in rec.iter().skip(1).zip(expect) {
            // Shortest round-trip formatting must reparse to the same bits.
            assert_eq!(cell.parse::<f64>().unwrap().to_bits(), want.to_bits());
        }
    }
}

#[test]
fn table1_with_one_column_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&mgp(dir, &["table1", "--samples", "20000", "--k", "1", "--out", "o"]));
    let body = csv_body(&dir.join("o/table1.csv"));
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 2, "header plus a single row:\n{body}");
    assert!(lines[0].starts_with("h,tau_q1,"));
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn table2_renders_cap_sentinel_and_still_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = mgp(
        dir,
        &[
            "table2", "--setting", "1,2", "--k", "3", "--cap", "1", "--samples", "20000",
            "--out", "o",
        ],
    );
    assert_ok(&out);
    let display = csv_body(&dir.join("o/table2_display.csv"));
    assert!(display.contains(">1"), "no cap sentinel in:\n{display}");
    let payload = read_json(&dir.join("o/table2.json"))["payload"].clone();
    assert_eq!(
        payload[0]["region"]["intersection"]["kind"],
        serde_json::json!("exceeds_cap")
    );

    // k = 2 leaves exactly one transition column.
    let out = mgp(
        dir,
        &["table2", "--setting", "2,1", "--k", "2", "--samples", "20000", "--out", "o2"],
    );
    assert_ok(&out);
    let body = csv_body(&dir.join("o2/table2.csv"));
    assert!(body.lines().next().unwrap() == "a1,a2,bound_1,intersection", "{body}");
}

#[test]
fn diagnose_verdicts_cover_the_reference_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let base = ["diagnose", "--samples", "20000", "--k", "3", "--cap", "5"];

    // Default k, samples, and cap for the headline case.
    let out = mgp(dir, &["diagnose", "--a1", "2", "--a2", "3", "--out", "a"]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("shrinkage region exceeds cap"), "{text}");
    assert!(text.contains("order-violation exponent m*=2.7786"), "{text}");

    let out = mgp(dir, &[&base[..], &["--a1", "1", "--a2", "1.1", "--out", "b"]].concat());
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("precision quartiles decrease"), "{text}");

    let out = mgp(dir, &[&base[..], &["--a1", "2", "--a2", "1.5", "--out", "c"]].concat());
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("mean column variances increase"), "{text}");
    let doc = read_json(&dir.join("c/diagnose.json"))["payload"].clone();
    assert_eq!(doc["theta_means_increase"], serde_json::json!(true));
    // E(θ_h) = 2^{h-1} at these shapes (computed through gamma ratios, so
    // only up to rounding).
    let means: Vec<f64> = doc["moments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["theta_mean"].as_f64().unwrap())
        .collect();
    for (got, want) in means.iter().zip([1.0, 2.0, 4.0]) {
        assert!((got - want).abs() < 1e-9, "{means:?}");
    }
}

#[test]
fn simstudy_runs_a_tiny_config_and_rejects_an_empty_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("tiny.toml"),
        "p = 4\nn = 30\nk_trunc = 3\niterations = 60\nburnin = 10\nreplicates = 2\n\
         k0_list = [1]\nseed = 9\n\n\
         [[settings]]\nkind = \"multiplicative\"\na1 = 2.0\na2 = 2.0\n\n\
         [[settings]]\nkind = \"independent_gamma\"\n",
    )
    .unwrap();
    let out = mgp(dir, &["simstudy", "--config", "tiny.toml", "--out", "o"]);
    assert_ok(&out);
    for f in [
        "study.json",
        "medians.csv",
        "best_counts.csv",
        "d_k1_mgp-a1-2-a2-2.csv",
        "d_k1_independent-gamma.csv",
    ] {
        assert!(dir.join("o").join(f).exists(), "missing {f}");
    }
    let medians = csv_body(&dir.join("o/medians.csv"));
    assert_eq!(medians.lines().count(), 1 + 2 * 2, "k0 × settings × replicates:\n{medians}");
    let counts = csv_body(&dir.join("o/best_counts.csv"));
    assert!(
        counts.starts_with("setting,k0,best_count,median_d"),
        "{counts}"
    );
    // p = 4 gives 10 lower-triangle entries, split between the two settings.
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(dir.join("o/best_counts.csv"))
        .unwrap();
    let total: usize = rdr
        .records()
        .map(|r| r.unwrap()[2].parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 10);
    let report = read_json(&dir.join("o/study.json"))["payload"].clone();
    assert_eq!(report["blocks"][0]["labels"][0], serde_json::json!("mgp(a1=2, a2=2)"));

    std::fs::write(dir.join("empty.toml"), "settings = []\n").unwrap();
    let out = mgp(dir, &["simstudy", "--config", "empty.toml", "--out", "bad"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("settings"));
    assert!(!dir.join("bad").exists(), "rejected run must not write artifacts");
}

#[test]
fn support_probe_reports_a_positive_frequency() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = mgp(dir, &["support-probe", "--samples", "20000", "--out", "o"]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("box frequency:"));
    let payload = read_json(&dir.join("o/support_probe.json"))["payload"].clone();
    assert!(payload["frequency"].as_f64().unwrap() > 0.0);
    assert_eq!(payload["target"].as_array().unwrap().len(), 3);
}

#[test]
fn density_check_passes_on_the_default_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = mgp(dir, &["density-check", "--out", "o"]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict: pass"));
    let payload = read_json(&dir.join("o/density_check.json"))["payload"].clone();
    assert_eq!(payload["report"]["verdict"], serde_json::json!("pass"));
    let out = mgp(dir, &["density-check", "--transition", "2", "--out", "o2"]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict: pass"));
}

#[test]
fn bad_input_exit_codes_are_distinct() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // Unknown flag: usage error from the parser.
    let out = mgp(dir, &["table1", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    // Bad worker-count env var: our validation error.
    let out = Command::new(env!("CARGO_BIN_EXE_mgp"))
        .args(["table1", "--samples", "20000", "--out", "o"])
        .current_dir(dir)
        .env("MGP_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MGP_WORKERS"));
    // Domain error from the library: also exit 1.
    let out = mgp(dir, &["table1", "--a1=-1", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
}
