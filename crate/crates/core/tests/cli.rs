use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_laddermem"));
    c.env("SOURCE_DATE_EPOCH", "1700000000");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example_run.toml")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn analyze_matches_golden_report() {
    let out = tempfile::tempdir().unwrap();
    let cfg = data("golden.toml");
    let o = run(&["-c", cfg.to_str().unwrap(), "analyze"], out.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let got = std::fs::read(out.path().join("report.json")).unwrap();
    let want = std::fs::read(data("golden_report.json")).unwrap();
    assert!(
        got == want,
        "report differs from golden:\n{}",
        String::from_utf8_lossy(&got)
    );
    let m = manifest(out.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["outputs"], serde_json::json!(["report.json"]));
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn golden_trio_is_reproduced_by_simulation() {
    let out = tempfile::tempdir().unwrap();
    let cfg = data("golden.toml");
    let o = run(&["-c", cfg.to_str().unwrap(), "simulate-trace"], out.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["signal.csv", "reference.csv", "noise.csv"] {
        assert_eq!(
            std::fs::read(out.path().join(f)).unwrap(),
            std::fs::read(data(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn missing_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 1\n[mc_dephase]\ntemperature_k = 333.15\nt_max_ns = 10.0\nt_step_ns = 1.0\n",
    );
    let out = dir.path().join("out");
    let o = run(&["-c", cfg.to_str().unwrap(), "mc-dephase"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_atoms"), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert_eq!(m["exit_code"], 2);
    assert!(m["error"].as_str().unwrap().contains("n_atoms"));
}

#[test]
fn missing_seed_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[mc_dephase]\nn_atoms = 10\ntemperature_k = 333.15\nt_max_ns = 10.0\nt_step_ns = 1.0\n",
    );
    let o = run(&["-c", cfg.to_str().unwrap(), "mc-dephase"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[vapor]\ntemperature_k = 300.0\ntemprature_c = 20.0\n");
    let o = run(&["-c", cfg.to_str().unwrap(), "vapor"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("temprature_c"));
}

#[test]
fn malformed_histogram_exits_1_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("signal.csv");
    let mut text = std::fs::read_to_string(data("signal.csv")).unwrap();
    text = text.replacen("\n3\n", "\nthree\n", 1);
    std::fs::write(&bad, &text).unwrap();
    let line = text.lines().position(|l| l == "three").unwrap() + 1;
    let o = bin()
        .args(["analyze", "--signal"])
        .arg(&bad)
        .arg("--reference")
        .arg(data("reference.csv"))
        .arg("--noise")
        .arg(data("noise.csv"))
        .arg("-c")
        .arg(data("golden.toml"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&format!("line {line}")), "{}", stderr(&o));
    assert_eq!(manifest(&dir.path().join("out"))["status"], "failed");
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[vapor\ntemperature_k = 300.0\n");
    let o = run(&["-c", cfg.to_str().unwrap(), "vapor"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_usage_exits_2() {
    let o = bin().arg("no-such-command").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_trace_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("golden.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["-c", cfg.to_str().unwrap(), "simulate-trace"], &a)
        .status
        .success());
    assert!(run(&["-c", cfg.to_str().unwrap(), "simulate-trace"], &b)
        .status
        .success());
    assert_eq!(dir_contents(&a), dir_contents(&b));
    let c = dir.path().join("c");
    assert!(
        run(&["-c", cfg.to_str().unwrap(), "--seed", "831", "simulate-trace"], &c)
            .status
            .success()
    );
    assert_eq!(manifest(&c)["seed"], 831);
    assert_ne!(
        std::fs::read(a.join("signal.csv")).unwrap(),
        std::fs::read(c.join("signal.csv")).unwrap()
    );
}

#[test]
fn mc_dephase_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 5\n[mc_dephase]\nn_atoms = 20000\ntemperature_k = 333.15\nt_max_ns = 40.0\nt_step_ns = 2.0\nbeating = true\n",
    );
    let mut outs = Vec::new();
    for w in ["1", "3", "8"] {
        let out = dir.path().join(format!("w{w}"));
        let o = run(&["-c", cfg.to_str().unwrap(), "mc-dephase", "--workers", w], &out);
        assert!(o.status.success(), "{}", stderr(&o));
        outs.push(dir_contents(&out));
    }
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);
}

#[test]
fn example_config_runs_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config();
    let cfg = cfg.to_str().unwrap();
    let out = dir.path();
    for cmd in ["vapor", "simulate-trace", "fit-decay", "deconvolve", "benchmark"] {
        let o = run(&["-c", cfg, cmd], out);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let o = run(&["-c", cfg, "mc-dephase", "--atoms", "5000"], out);
    assert!(o.status.success(), "{}", stderr(&o));
    let signal = out.join("signal.csv");
    let o = bin()
        .args(["-c", cfg, "analyze", "--signal"])
        .arg(&signal)
        .arg("--reference")
        .arg(out.join("reference.csv"))
        .arg("--noise")
        .arg(out.join("noise.csv"))
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));

    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("fit_report.json")).unwrap()).unwrap();
    assert_eq!(fit["converged"], true);
    let dec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("deconvolve.json")).unwrap()).unwrap();
    let w = dec["window_fwhm_mhz"].as_f64().unwrap();
    assert!((w / 560.0 - 1.0).abs() < 0.03, "{w}");
    let grid = std::fs::read_to_string(out.join("snr_grid.csv")).unwrap();
    assert!(grid.starts_with("# quantity=snr_upper_bound"));
}

#[test]
fn vapor_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[vapor]\ntemperature_k = 300.0\n");
    let out = dir.path().join("out");
    let o = run(&["-c", cfg.to_str().unwrap(), "vapor", "--temperature-c", "60"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("vapor.json")).unwrap()).unwrap();
    assert!((v["temperature_k"].as_f64().unwrap() - 333.15).abs() < 1e-9);
    let vth = v["thermal_velocity_m_s"].as_f64().unwrap();
    assert!((vth - 144.4).abs() < 0.1, "{vth}");
}

#[test]
fn vapor_out_of_range_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["vapor", "--temperature-k", "500"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
