use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ctrlgad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrlgad"))
        .args(args)
        .output()
        .expect("spawn ctrlgad")
}

fn ok(args: &[&str]) -> String {
    let out = ctrlgad(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn stages_chain_from_generation_to_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.json");
    let injected = dir.path().join("injected.json");
    let manifest = dir.path().join("manifest.json");
    let scores = dir.path().join("ac.txt");
    let augmented = dir.path().join("aug.json");
    let run = dir.path().join("run");

    ok(&["--seed", "4", "--out", p(&clean), "generate", "--nodes", "150", "--features", "6"]);
    ok(&[
        "--seed", "4", "--out", p(&injected), "inject", "--graph", p(&clean),
        "--structural", "5,2,0", "--contextual", "5,2,20", "--manifest", p(&manifest),
    ]);
    let planted: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert!(planted.is_object());

    ok(&["--out", p(&scores), "ac-score", "--graph", p(&injected)]);
    let ac: Vec<f64> = fs::read_to_string(&scores).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(ac.len(), 150);
    assert!(ac.iter().all(|v| v.is_finite() && *v > 0.0));

    ok(&[
        "--out", p(&augmented), "augment", "--graph", p(&injected),
        "--scores", p(&scores), "--mode", "both", "--bins", "10",
    ]);
    ok(&["--seed", "1", "--out", p(&run), "train", "--graph", p(&augmented), "--conv", "edge-attr-conv"]);
    for f in ["model.json", "loss_trace.csv", "scores.txt", "test_mask.txt", "labels.txt"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let trace = fs::read_to_string(run.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 201);

    let csv_path = dir.path().join("metrics.csv");
    let text = ok(&[
        "--format", "json", "evaluate",
        "--scores", p(&run.join("scores.txt")),
        "--labels", p(&run.join("labels.txt")),
        "--mask", p(&run.join("test_mask.txt")),
        "--append", p(&csv_path),
    ]);
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["auroc", "auprc", "rec_at_k"] {
        let v = m[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert_eq!(fs::read_to_string(&csv_path).unwrap().lines().count(), 2);
}

#[test]
fn ac_score_json_reports_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    ok(&["--out", p(&g), "generate", "--nodes", "30", "--features", "3", "--communities", "2", "--intra-p", "0.3"]);
    let text = ok(&["--format", "json", "ac-score", "--graph", p(&g), "--horizon", "5"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["scores"].as_array().unwrap().len(), 30);
    assert!((v["horizon"].as_f64().unwrap() - 5.0).abs() < 1e-9);
}

const CONFIG: &str = r#"
name = "cli"

[dataset]
kind = "synthetic"
num_nodes = 120
feature_dim = 6
communities = 3
intra_p = 0.1
inter_p = 0.005
seed = 9

[injection.structural]
m = 4
n = 2

[injection.contextual]
m = 4
n = 2
q = 15
seed = 1

[model]
conv_type = "sage_mean"
hidden_dim = 8

[training]
epochs = 20
seeds = [0, 1, 2]
"#;

#[test]
fn pipeline_writes_reports_and_honours_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("reports");
    let md = ok(&["--seed", "5", "--out", p(&out), "pipeline", "--config", p(&cfg)]);
    assert!(md.contains("AUROC Ours"));
    for ext in ["json", "csv", "md"] {
        assert!(out.join(format!("report.{ext}")).exists(), "report.{ext} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let seeds = report["baseline"]["per_seed"].as_array().unwrap();
    assert_eq!(seeds.len(), 1);
    assert_eq!(seeds[0]["seed"].as_u64(), Some(5));
}

#[test]
fn failures_exit_nonzero_with_a_stage_tag() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = ctrlgad(&["ac-score", "--graph", p(&missing)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error:") && err.contains("load"), "{err}");

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, CONFIG.replace("[model]", "[model]\nunknown_knob = 1")).unwrap();
    let out = ctrlgad(&["pipeline", "--config", p(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}

#[test]
fn weight_mode_rejects_bins() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    let s = dir.path().join("s.txt");
    ok(&["--out", p(&g), "generate", "--nodes", "20", "--features", "2", "--communities", "2"]);
    ok(&["--out", p(&s), "ac-score", "--graph", p(&g)]);
    let out = ctrlgad(&["--out", "/dev/null", "augment", "--graph", p(&g), "--scores", p(&s), "--mode", "weight", "--bins", "5"]);
    assert!(!out.status.success());
}

#[test]
fn readme_config_is_valid() {
    let readme = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let block = readme.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, block.replace("[training]", "[training]\nbogus = 1")).unwrap();
    // Only the planted key should be rejected.
    let err = String::from_utf8_lossy(&ctrlgad(&["pipeline", "--config", p(&cfg)]).stderr).into_owned();
    assert!(err.contains("bogus"), "{err}");
    let parsed: toml::Value = toml::from_str(block).unwrap();
    assert_eq!(parsed["dataset"]["num_nodes"].as_integer(), Some(2708));
}
