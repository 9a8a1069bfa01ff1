use std::path::Path;
use std::process::Command;

use prm_cli::manifest::Manifest;
use prm_drift::io::sha256_file;
use serde_json::Value;

fn prm(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_prm"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = prm(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn pipeline_of_commands_with_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("synth.toml"), "regime1 = 3000\nregime2 = 3000\nseed = 5\n").unwrap();
    ok(d, &["synth", "--config", "synth.toml", "--out", "s"]);
    let m = manifest(&d.join("s"));
    assert_eq!(m.config["regime1"], 3000);
    for o in &m.outputs {
        assert_eq!(sha256_file(d.join("s").join(&o.path)).unwrap(), o.sha256);
    }

    ok(d, &["discretize", "--data", "s/regime1.csv", "--data-config", "s/data_config.json", "--out", "disc"]);
    ok(d, &["mine", "--data", "s/regime1.csv", "--data-config", "s/data_config.json", "--max-rules", "6", "--out", "mine"]);
    let model: Value = serde_json::from_str(&std::fs::read_to_string(d.join("mine/model.json")).unwrap()).unwrap();
    assert_eq!(model["rules"].as_array().unwrap().len(), 7);
    ok(
        d,
        &["calibrate", "--model", "mine/model.json", "--data", "s/regime1.csv", "--discretizer", "mine/discretizer.json", "--out", "cal"],
    );
    let rules = std::fs::read_to_string(d.join("cal/rules.csv")).unwrap();
    assert!(rules.starts_with("rule_id,definition,points,coverage,impact"));
    assert_eq!(rules.lines().count(), 8);

    ok(
        d,
        &["correct", "--regime1", "s/regime1.csv", "--regime2", "s/regime2.csv", "--data-config", "s/data_config.json", "--max-rules", "4", "--out", "c"],
    );
    ok(
        d,
        &["evaluate", "--pipeline", "c/pipeline.json", "--regime1", "s/regime1.csv", "--regime2", "s/regime2.csv", "--learning-curve", "0..2", "--out", "e"],
    );
    let curve = std::fs::read_to_string(d.join("e/learning_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);
    ok(d, &["cluster", "--pipeline", "c/pipeline.json", "--data", "s/regime2.csv", "--out", "cl"]);

    std::fs::write(d.join("spec.json"), r#"{"name":"s","overrides":[{"rule":"R-01","action":"disable"}]}"#).unwrap();
    ok(d, &["scenario", "--pipeline", "c/pipeline.json", "--data", "s/regime2.csv", "--spec", "spec.json", "--q", "0.5", "--out", "sc"]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("sc/scenario.json")).unwrap()).unwrap();
    assert_eq!(report["crisis_likelihood"], 0.5);
    assert!(report["overall"]["expected_rate"].is_number());
}

#[test]
fn external_base_scores_are_copied_next_to_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--regime1", "1500", "--regime2", "1500", "--out", "s"]);
    for name in ["m1.csv", "m2.csv"] {
        let mut text = String::from("record_id,score,space\n");
        for f in ["s/regime1.csv", "s/regime2.csv"] {
            let mut r = csv::Reader::from_path(d.join(f)).unwrap();
            let headers = r.headers().unwrap().clone();
            let id = headers.iter().position(|h| h == "loan_id").unwrap();
            let cs = headers.iter().position(|h| h == "cscore").unwrap();
            for rec in r.records() {
                let rec = rec.unwrap();
                let score: f64 = rec[cs].parse().unwrap_or(720.0);
                let shift = if name == "m1.csv" { 0.0 } else { 0.3 };
                text += &format!("{},{},logodds\n", &rec[id], (700.0 - score) / 40.0 - 1.5 + shift);
            }
        }
        std::fs::write(d.join(name), text).unwrap();
    }
    ok(
        d,
        &["correct", "--regime1", "s/regime1.csv", "--regime2", "s/regime2.csv", "--data-config", "s/data_config.json", "--m1", "m1.csv", "--m2", "m2.csv", "--max-rules", "3", "--out", "c"],
    );
    assert!(d.join("c/m1_scores.csv").exists());
    // the pipeline still loads once the original score files are gone
    std::fs::remove_file(d.join("m1.csv")).unwrap();
    std::fs::rename(d.join("c"), d.join("moved")).unwrap();
    ok(d, &["cluster", "--pipeline", "moved/pipeline.json", "--data", "s/regime2.csv", "--out", "cl"]);
}

#[test]
fn failures_report_json_and_leave_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--regime1", "500", "--regime2", "500", "--out", "s"]);
    std::fs::write(d.join("bad.json"), r#"{"name":"x","overrides":[{"rule":"R-77","action":"disable"}]}"#).unwrap();
    let out = prm(d, &["scenario", "--bundled", "--data", "s/regime2.csv", "--spec", "bad.json", "--out", "sc"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["errors"][0]["field"], "overrides[0].rule");
    assert!(!d.join("sc").exists());

    // evaluate writes evaluation.json before failing on the band variable
    ok(
        d,
        &["correct", "--regime1", "s/regime1.csv", "--regime2", "s/regime2.csv", "--data-config", "s/data_config.json", "--max-rules", "2", "--out", "c"],
    );
    let out = prm(d, &["evaluate", "--pipeline", "c/pipeline.json", "--regime2", "s/regime2.csv", "--band-variable", "nope", "--out", "e"]);
    assert!(!out.status.success());
    assert!(!d.join("e").exists());

    let out = prm(d, &["synth", "--out", "x", "--config", "missing.toml"]);
    assert!(!out.status.success());
    assert!(!d.join("x").exists());
}
