use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn radiomap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radiomap")).args(args).output().expect("run binary")
}

fn ok(args: &[&str]) -> String {
    let out = radiomap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("tiny.toml");
    let cfg = cfg.to_str().unwrap();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        ok(&["--config", cfg, "--out", out.to_str().unwrap(), "sweep"]);
    }
    for file in ["cells.csv", "blocks.csv", "summary.csv", "range.csv", "plan.toml"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs");
    }
    let cells = std::fs::read_to_string(dir.path().join("a/cells.csv")).unwrap();
    // 4 methods x 2 rates x 2 seeds, no failed cells.
    assert_eq!(cells.lines().count(), 1 + 16);
    assert!(cells.lines().skip(1).all(|l| l.ends_with(',')), "{cells}");
}

#[test]
fn train_predict_and_render_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("tiny.toml");
    let cfg = cfg.to_str().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    ok(&["--config", cfg, "--out", &p("gen"), "generate"]);
    ok(&["--config", cfg, "--out", &p("run"), "--seed", "4", "train"]);
    let pred = ok(&["--config", cfg, "--out", &p("pred"), "predict", "--run", &p("run")]);
    assert!(pred.contains("5750 MHz: area RMSE"), "{pred}");
    ok(&["--out", &p("img/truth.ppm"), "render", "--tensor", &p("gen/truth.bin"), "--freq", "5750"]);
    let ppm = std::fs::read(p("img/truth.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n24 24\n255\n"));
    let hist = ok(&["histogram", "--tensor", &p("gen/truth.bin"), "--freq", "1750", "--bin-width-db", "5"]);
    assert!(hist.starts_with("lo_dbm,count\n"));
    let graph = ok(&["--config", cfg, "--out", &p("graph"), "graph", "--block", "0_1", "--freq", "3750"]);
    assert!(graph.contains("nodes"));
    for kind in ["idw", "kriging", "halrtc"] {
        let out = ok(&["--config", cfg, "--out", &p(kind), "baseline", kind]);
        assert!(out.contains("area RMSE"), "{out}");
    }
    let ev = ok(&[
        "--config",
        cfg,
        "--out",
        &p("ev"),
        "evaluate",
        "--prediction",
        &p("idw/prediction.csv"),
        "--freq",
        "5750",
    ]);
    let base = ok(&["--config", cfg, "--out", &p("idw2"), "baseline", "idw"]);
    assert_eq!(ev, base);
    assert!(Path::new(&p("ev/rmse_5750.csv")).is_file());
    let printed = ok(&["--config", cfg, "evaluate", "--prediction", &p("idw/prediction.bin"), "--freq", "5750"]);
    assert_eq!(printed, base);
}

#[test]
fn exit_codes() {
    assert_eq!(radiomap(&["--help"]).status.code(), Some(0));
    assert_eq!(radiomap(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(radiomap(&["generate"]).status.code(), Some(1));
    assert_eq!(radiomap(&["--config", "/nonexistent.toml", "generate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[area]\nwidth_m = \"wide\"\n").unwrap();
    let out = radiomap(&["--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "generate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml:2"));
    let cfg = config("tiny.toml");
    let out = radiomap(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "graph",
        "--block",
        "9_9",
        "--freq",
        "1750",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
