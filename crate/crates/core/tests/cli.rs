use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use mif_core::io::{format_params, load_telemetry, parse_params};
use tempfile::TempDir;

fn mif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mif"))
        .args(args)
        .current_dir(repo_root())
        .output()
        .expect("spawn mif")
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> String {
    repo_root().join("scenarios").join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Scenario 1 and the healthy run, simulated once for the whole file.
struct Datasets {
    _dir: TempDir,
    fault: PathBuf,
    normal: PathBuf,
}

fn datasets() -> &'static Datasets {
    static DATA: OnceLock<Datasets> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let fault = dir.path().join("fault_1.csv");
        let normal = dir.path().join("normal.csv");
        for (cfg, out) in [("fault_1.toml", &fault), ("normal.toml", &normal)] {
            let o = mif(&["simulate", &scenario(cfg), "--out", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", stderr(&o));
        }
        Datasets {
            _dir: dir,
            fault,
            normal,
        }
    })
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_labeled_dataset() {
    let frames = load_telemetry(&datasets().fault).unwrap();
    assert_eq!(frames.len(), 2000);
    assert_eq!(frames.iter().filter(|f| f.abnormal).count(), 1000);
    assert!(!frames[999].abnormal && frames[1000].abnormal);
}

#[test]
fn simulate_to_stdout_is_deterministic() {
    let a = mif(&["simulate", &scenario("fault_3.toml")]);
    let b = mif(&["simulate", &scenario("fault_3.toml")]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stderr(&a).contains("frames=2000"));
    let c = mif(&["simulate", &scenario("fault_3.toml"), "--seed", "77"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn bad_configs_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");

    fs::write(&cfg, "duration = 0.0\n").unwrap();
    let o = mif(&["simulate", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("duration"), "{}", stderr(&o));

    fs::write(&cfg, "duration = 10.0\nwarp_factor = 9\n").unwrap();
    let o = mif(&["simulate", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("warp_factor"), "{}", stderr(&o));

    fs::write(
        &cfg,
        "duration = 10.0\nfault_cell = 30\nr_short = 1.0\nonset = 1.0\n",
    )
    .unwrap();
    assert_eq!(mif(&["simulate", path(&cfg)]).status.code(), Some(2));
}

#[test]
fn malformed_dataset_row_exits_with_code_4() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    let text = fs::read_to_string(&datasets().normal).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    lines[5] = lines[5].replacen(',', ",oops", 1);
    fs::write(&bad, lines.join("\n")).unwrap();
    let o = mif(&["detect", path(&bad)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("line 6"), "{}", stderr(&o));
}

#[test]
fn detect_writes_trace_with_blank_warmup() {
    let d = datasets();
    let params = mif_core::fusion::DetectorParams::tuned();
    let o = mif(&["detect", path(&d.fault)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("t,h_d,h_s,h_t,H,H_r,alarm"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2000);
    for row in &rows[..params.window - 1] {
        assert_eq!(&row[1..5], ["", "", "", ""]);
        assert_eq!(row[6], "0");
    }
    assert!(rows[params.window - 1][4].parse::<f64>().is_ok());

    let summary = stderr(&o);
    let t_f: f64 = summary
        .split_whitespace()
        .find_map(|w| w.strip_prefix("t_f="))
        .and_then(|v| v.parse().ok())
        .expect("alarm after onset");
    assert!((1000.0..=1060.0).contains(&t_f), "{summary}");
}

#[test]
fn detect_on_healthy_run_rarely_alarms() {
    let o = mif(&["detect", path(&datasets().normal)]);
    assert!(o.status.success());
    let alarms = stdout(&o)
        .lines()
        .skip(1 + 600)
        .filter(|l| l.ends_with(",1"))
        .count();
    assert!(alarms as f64 / 1400.0 <= 0.05, "{alarms} alarms");
}

#[test]
fn localize_points_at_injected_cell() {
    let d = datasets();
    let o = mif(&["detect", path(&d.fault)]);
    let summary = stderr(&o);
    let t_f = summary
        .split_whitespace()
        .find_map(|w| w.strip_prefix("t_f="))
        .unwrap()
        .to_owned();
    let a = mif(&["localize", path(&d.fault), "--t-f", &t_f]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stderr(&a).contains("estimated fault cell: #4"), "{}", stderr(&a));
    let b = mif(&["localize", path(&d.fault), "--t-f", &t_f]);
    assert_eq!(a.stdout, b.stdout);
    let csv = stdout(&a);
    assert_eq!(csv.lines().count(), 25);
}

#[test]
fn localize_rejects_missing_time() {
    let o = mif(&["localize", path(&datasets().fault), "--t-f", "99999"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_f"));
}

#[test]
fn localize_on_healthy_run_still_answers() {
    let w = mif_core::fusion::DetectorParams::tuned().window;
    let o = mif(&["localize", path(&datasets().normal), "--t-f", &w.to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("estimated fault cell: #"));
}

#[test]
fn fit_calibrates_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("params.toml");
    let o = mif(&["fit", "--normal", path(&datasets().normal), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let p = parse_params(&text).unwrap();
    assert_eq!(p.window, 27);
    assert_eq!(p.alpha, [0.216, 0.573, 0.211]);
    assert_eq!(p.beta, 0.99);
    assert!(p.threshold > 0.0 && p.max_hs > 0.0);
    assert_eq!(format_params(&p), text);

    let o = mif(&["fit", "--normal", path(&datasets().normal), "--beta", "0.95"]);
    assert!(o.status.success());
    let loose = parse_params(&stdout(&o)).unwrap();
    assert_eq!(loose.beta, 0.95);
    assert!(loose.threshold <= p.threshold);

    let o = mif(&["fit", "--normal", path(&datasets().normal), "--beta", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn optimize_needs_fault_data() {
    let o = mif(&["fit", "--normal", path(&datasets().normal), "--optimize"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn optimize_is_reproducible_for_a_seed() {
    let d = datasets();
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("ga.csv");
    let run = || {
        mif(&[
            "fit",
            "--normal",
            path(&d.normal),
            "--fault",
            path(&d.fault),
            "--optimize",
            "--generations",
            "3",
            "--population",
            "6",
            "--seed",
            "7",
            "--log",
            path(&log),
        ])
    };
    let a = run();
    assert!(a.status.success(), "{}", stderr(&a));
    let log_a = fs::read_to_string(&log).unwrap();
    let b = run();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(log_a, fs::read_to_string(&log).unwrap());
    assert_eq!(log_a.lines().count(), 1 + 3);
    let p = parse_params(&stdout(&a)).unwrap();
    assert!((p.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((5..=200).contains(&p.window));
}

#[test]
fn benchmark_reports_every_scenario() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.csv");
    let o = mif(&["benchmark", "--out", path(&out)]);
    let report = fs::read_to_string(&out).unwrap();
    assert_eq!(report.lines().count(), 10);
    assert!(report.starts_with("scenario,status,add_s"));
    let summary = stdout(&o);
    if summary.contains("PASS") {
        assert!(o.status.success());
    } else {
        assert_eq!(o.status.code(), Some(5));
    }
}

#[test]
fn benchmark_with_missing_directory_is_an_io_error() {
    let o = mif(&["benchmark", "/nonexistent/scenarios"]);
    assert_eq!(o.status.code(), Some(4));
}
