use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_wmsense");

const SMALL: &str = r#"
seed = 3

[grid]
pixel_count = 1000
lambda_start_nm = 790.0
lambda_step_nm = 0.1

[noise]
trials = 200

[schedule]
levels = [
  { label = "water", start_s = 0.0, end_s = 9.0, value = 0.0 },
  { label = "a", start_s = 10.0, end_s = 19.0, value = 0.5 },
  { label = "b", start_s = 20.0, end_s = 29.0, value = 1.0 },
]
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_config_key_exits_2_with_path() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "c.toml", "[interface]\nn1 = 1.75\nthetadeg = 50\n");
    let o = run(d.path(), &["--config", cfg.to_str().unwrap(), "optimize"]);
    assert_eq!(code(&o), 2);
    let e = stderr(&o);
    assert!(e.contains("interface") && e.contains("thetadeg"), "{e}");
}

#[test]
fn below_critical_angle_exits_2() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "c.toml", "[interface]\ntheta_deg = 45.0\n");
    let o = run(d.path(), &["--config", cfg.to_str().unwrap(), "shift"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("total internal reflection"));
}

#[test]
fn missing_and_malformed_inputs_exit_3() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["kinetics", "absent.csv"]);
    assert_eq!(code(&o), 3);
    let bad = write(d.path(), "b.csv", "concentration_g_per_mL,response_nm\n1e-6,abc\n");
    let o = run(d.path(), &["kinetics", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("b.csv:2"), "{}", stderr(&o));
    let degenerate = write(d.path(), "z.csv", "concentration_g_per_mL,response_nm\n1e-6,0\n2e-6,0\n4e-6,0\n");
    let o = run(d.path(), &["kinetics", degenerate.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn overflowing_noise_model_exits_4() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "c.toml", &format!("{SMALL}\n"));
    let text = std::fs::read_to_string(&cfg).unwrap().replace("trials = 200", "trials = 200\nclassical = \"paper_literal\"");
    std::fs::write(&cfg, text).unwrap();
    let o = run(d.path(), &["--config", cfg.to_str().unwrap(), "noise"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn simulate_then_calibrate_round_trip() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "c.toml", SMALL);
    let c = cfg.to_str().unwrap();
    let o = run(d.path(), &["--config", c, "--out", "o", "simulate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let frames = d.path().join("o/simulate_frames.csv");
    let head = std::fs::read_to_string(&frames).unwrap();
    assert!(head.starts_with("# wmsense simulate config_sha256="));
    assert!(head.lines().nth(1).unwrap().contains("dark_subtracted=false"));
    let o = run(d.path(), &["--config", c, "--out", "o", "calibrate", frames.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(d.path().join("o/calibrate_report.txt")).unwrap();
    let get = |k: &str| -> f64 {
        report
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{k} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    let fitted = get("s_ri_nm_per_riu");
    let predicted = get("predicted_s_ri_nm_per_riu");
    assert!((fitted.abs() / predicted - 1.0).abs() < 0.02, "{fitted} vs {predicted}");
    // the sensorgram written by simulate gives the same regression
    let sg = d.path().join("o/simulate_sensorgram.csv");
    let o = run(d.path(), &["--config", c, "--out", "p", "calibrate", sg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again = std::fs::read_to_string(d.path().join("p/calibrate_report.txt")).unwrap();
    assert_eq!(report, again);
}

#[test]
fn single_level_calibration_is_a_data_error() {
    let d = TempDir::new().unwrap();
    let cfg = write(
        d.path(),
        "c.toml",
        "[schedule]\nlevels = [ { label = \"w\", start_s = 0.0, end_s = 9.0, value = 0.0 } ]\n",
    );
    let sg = write(
        d.path(),
        "s.csv",
        &(std::iter::once("time_s,shift_nm".to_string())
            .chain((0..10).map(|i| format!("{i},0.0{i}")))
            .collect::<Vec<_>>()
            .join("\n")),
    );
    let o = run(d.path(), &["--config", cfg.to_str().unwrap(), "calibrate", sg.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn resolution_accepts_measured_curves() {
    let d = TempDir::new().unwrap();
    let rows: Vec<String> = [1u64, 2, 4, 8, 16, 32]
        .iter()
        .map(|&n| {
            let r = ((5.3e-3f64).powi(2) / n as f64 + (2e-3f64).powi(2)).sqrt() / 13605.0;
            format!("{n},{r:?}")
        })
        .collect();
    let input = write(d.path(), "r.csv", &format!("N,r_RIU\n{}\n", rows.join("\n")));
    let o = run(d.path(), &["--out", "o", "resolution", input.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    let sigma_s: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("sigma_s_nm = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((sigma_s / 5.3e-3 - 1.0).abs() < 1e-9);
    let csv = std::fs::read_to_string(d.path().join("o/resolution.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "N,r_RIU,r_fit_RIU");
}

#[test]
fn seed_changes_noisy_output() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "c.toml", SMALL);
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(d.path(), &["--config", c, "--seed", "1", "--out", "a", "noise"])), 0);
    assert_eq!(code(&run(d.path(), &["--config", c, "--seed", "2", "--out", "b", "noise"])), 0);
    let a = std::fs::read_to_string(d.path().join("a/noise_report.txt")).unwrap();
    let b = std::fs::read_to_string(d.path().join("b/noise_report.txt")).unwrap();
    assert_ne!(a, b);
    assert!(a.starts_with("# wmsense noise config_sha256=") && a.lines().next().unwrap().ends_with("seed=1"));
}
