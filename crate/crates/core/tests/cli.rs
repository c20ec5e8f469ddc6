use std::path::Path;
use std::process::{Command, Output};

fn rainbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rainbench"))
        .current_dir(dir)
        .env_remove("RAINBENCH_DATA_ROOT")
        .args(args)
        .output()
        .expect("spawn rainbench")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_downscale_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = rainbench(d, &["generate", "--out", "ev.rnb", "--frames", "6", "--rows", "48", "--cols", "48", "--truth", "truth.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&d.join("truth.json"))["per_frame"].as_array().unwrap().len(), 6);

    assert_eq!(code(&rainbench(d, &["downscale", "--input", "ev.rnb", "--out", "pred.rnb"])), 0);
    let out = rainbench(d, &["evaluate", "--pred", "pred.rnb", "--obs", "ev.rnb", "--out", "r.json"]);
    assert_eq!(code(&out), 0);
    let r = json(&d.join("r.json"));
    assert!(r["rmse"].as_f64().unwrap() > 0.0);
    assert_eq!(r["frames_used_rmse"], 6);

    // Observations scored against themselves.
    let out = rainbench(d, &["evaluate", "--pred", "ev.rnb", "--obs", "ev.rnb"]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["pem"], 0.0);
    assert_eq!(r["pdem"], 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&rainbench(d, &["no-such-command"])), 2);
    assert_eq!(code(&rainbench(d, &["--help"])), 0);
    rainbench(d, &["generate", "--out", "ev.rnb", "--frames", "4", "--rows", "24", "--cols", "24"]);
    assert_eq!(code(&rainbench(d, &["evaluate", "--pred", "ev.rnb", "--obs", "ev.rnb", "--tau", "1.5"])), 2);
    assert_eq!(code(&rainbench(d, &["evaluate", "--pred", "gone.rnb", "--obs", "ev.rnb"])), 3);
    assert_eq!(code(&rainbench(d, &["downscale", "--input", "ev.rnb", "--out", "p.rnb", "--method", "lanczos"])), 2);
    assert_eq!(code(&rainbench(d, &["crossval", "--out", "cv"])), 2);

    std::fs::write(d.join("junk.rnb"), b"RNB1 not really").unwrap();
    assert_eq!(code(&rainbench(d, &["evaluate", "--pred", "junk.rnb", "--obs", "ev.rnb"])), 3);
    std::fs::write(d.join("bad.json"), r#"{"metric": {"quantile_tau": 0.9}, "colour": 1}"#).unwrap();
    assert_eq!(code(&rainbench(d, &["--config", "bad.json", "evaluate", "--pred", "ev.rnb", "--obs", "ev.rnb"])), 2);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    rainbench(d, &["generate", "--out", "ev.rnb", "--frames", "4", "--rows", "48", "--cols", "48"]);
    rainbench(d, &["downscale", "--input", "ev.rnb", "--out", "p.rnb", "--method", "nearest"]);
    std::fs::write(d.join("cfg.json"), r#"{"metric": {"heavy_threshold": 1000.0}}"#).unwrap();

    let from_file = rainbench(d, &["--config", "cfg.json", "evaluate", "--pred", "p.rnb", "--obs", "ev.rnb"]);
    let r: serde_json::Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert_eq!(r["hrre"], 0.0);

    let overridden = rainbench(
        d,
        &["--config", "cfg.json", "evaluate", "--pred", "p.rnb", "--obs", "ev.rnb", "--heavy-threshold", "1"],
    );
    let r: serde_json::Value = serde_json::from_slice(&overridden.stdout).unwrap();
    assert!(r["hrre"].as_f64().unwrap() > 0.0);
}

#[test]
fn crossval_external_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = rainbench(d, &["generate-corpus", "--out", "data", "--years", "3", "--months", "7,8", "--frames", "4", "--seed", "9"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_rainbench"))
            .current_dir(d)
            .env("RAINBENCH_DATA_ROOT", d.join("data"))
            .args(args)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["crossval", "--methods", "nearest,bicubic", "--out", "cv"]);
    for f in ["crossval.json", "leaderboard.csv", "leaderboard.md", "leaderboard.json", "scatter.csv", "scatter.svg"] {
        assert!(d.join("cv").join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(d.join("cv/leaderboard.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "Approach,MPPE,HRRE,AMMD,CPMSE,HRTS,CMD,PEM,PDEM,RMSE×100");
    assert_eq!(csv.lines().count(), 3);

    run(&["export-inputs", "--out", "ex"]);
    let manifest = json(&d.join("ex/manifest.json"));
    assert_eq!(manifest["sequences"].as_array().unwrap().len(), 6);
    for entry in std::fs::read_dir(d.join("ex")).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_str().unwrap().to_owned();
        if let Some(id) = name.strip_suffix(".lr.rnb") {
            run(&["downscale", "--input", &format!("ex/{name}"), "--out", &format!("ex/{id}.pred.rnb")]);
        }
    }
    run(&["score-external", "--exchange", "ex", "--name", "mine", "--out", "ext"]);
    let internal = json(&d.join("cv/crossval.json"));
    let external = json(&d.join("ext/crossval.json"));
    assert_eq!(internal["methods"][1]["fold_mean"]["report"], external["methods"][0]["fold_mean"]["report"]);

    let out = run(&["report", "--input", "cv/crossval.json", "ext/crossval.json", "--format", "csv", "--scatter-csv", "s.csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("\nmine,"));
    assert_eq!(std::fs::read_to_string(d.join("s.csv")).unwrap().lines().next().unwrap(), "label,pdem,pem");
}

#[test]
fn data_root_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    rainbench(d, &["generate-corpus", "--out", "data", "--months", "7", "--frames", "3"]);
    let out = Command::new(env!("CARGO_BIN_EXE_rainbench"))
        .current_dir(d)
        .env("RAINBENCH_DATA_ROOT", d.join("missing"))
        .args(["export-inputs", "--data-root", "data", "--out", "ex"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = Command::new(env!("CARGO_BIN_EXE_rainbench"))
        .current_dir(d)
        .env("RAINBENCH_DATA_ROOT", d.join("missing"))
        .args(["export-inputs", "--out", "ex2"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}
