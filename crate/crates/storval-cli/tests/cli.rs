use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CURVE: &str = r#"
[curve]
t_end = 1.0
n_steps = 120
sinusoid = { f_c = 20.0, d_f = 5.0, n_humps = 4 }
"#;

const STORAGE: &str = r#"
[storage]
q_min = 0.0
q_max = 2.0
r_min = -1.0
r_max = 1.0
q_start = 1.0
terminal = { mode = "fixed", q_end = 1.0 }
"#;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn storval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storval")).args(args).output().expect("binary runs")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    storval(&args)
}

fn report(out: &Path) -> toml::Table {
    std::fs::read_to_string(out.join("report.toml")).unwrap().parse().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn benchmark_trigger_is_center_price() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", &format!("{CURVE}{STORAGE}"));
    let out = dir.path().join("out");
    let o = run("intrinsic", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    let seg = &r["result"]["segments"].as_array().unwrap()[0];
    assert!((seg["trigger"].as_float().unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(r["command"].as_str(), Some("intrinsic"));
    assert_eq!(r["config"]["curve"]["n_steps"].as_integer(), Some(120));
    let csv = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(csv.starts_with("# storval intrinsic seed=1\n"));
    assert!(csv.contains("# q_max = 2.0"));
}

#[test]
fn infeasible_terminal_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{CURVE}{}", STORAGE.replace("q_start = 1.0", "q_start = 0.0").replace("q_end = 1.0", "q_end = 1.5"));
    let cfg = write_config(dir.path(), "i.toml", &body);
    let o = run("intrinsic", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("terminal volume unreachable"), "{}", stderr(&o));
}

#[test]
fn both_solvers_report_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    // 240 lattice intervals over [0, 2] match the per-step move 1/120.
    let cfg = write_config(dir.path(), "b.toml", &format!("{CURVE}{STORAGE}\n[solver]\ndp_levels = 241\n"));
    let out = dir.path().join("out");
    let o = run("intrinsic", &cfg, &out, &["--solver", "both"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    let cross = &r["result"]["cross_solver"];
    let gap = cross["value_gap"].as_float().unwrap();
    let bound = cross["grid_bound"].as_float().unwrap();
    assert!(gap.abs() <= bound + 1e-9, "gap {gap} bound {bound}");
    assert!(out.join("solution_dp.csv").exists());
}

#[test]
fn dp_rejects_cycle_cap() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{CURVE}{}c_max = 0.3\n", STORAGE);
    let cfg = write_config(dir.path(), "c.toml", &body);
    let o = run("intrinsic", &cfg, &dir.path().join("out"), &["--solver", "dp"]);
    assert_eq!(o.status.code(), Some(1));
    let out = dir.path().join("out2");
    let o = run("intrinsic", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let intake = report(&out)["result"]["intake"].as_float().unwrap();
    assert!(intake <= 0.3 + 1e-6, "intake {intake}");
}

const PROCESS: &str = r#"
[process]
kind = "lognormal1f"
sigma0 = 0.2
alpha = 2.0

[simulation]
paths = 16
seed = 5
record_ledger = true
"#;

#[test]
fn fixed_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", &format!("{CURVE}{STORAGE}{PROCESS}"));
    let a = dir.path().join("a");
    let files = ["report.toml", "paths.csv", "drift.csv", "ledgers.csv"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = run("simulate", &cfg, &a, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push(files.map(|f| std::fs::read(a.join(f)).unwrap()));
    }
    for (i, f) in files.iter().enumerate() {
        assert!(runs[0][i] == runs[1][i], "{f} differs between reruns");
    }
    let o = run("simulate", &cfg, &dir.path().join("c"), &["--seed", "6"]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(a.join("paths.csv")).unwrap(), std::fs::read(dir.path().join("c/paths.csv")).unwrap());
}

#[test]
fn zero_volatility_has_no_time_value() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{CURVE}{STORAGE}{}", PROCESS.replace("sigma0 = 0.2", "sigma0 = 0.0"));
    let cfg = write_config(dir.path(), "z.toml", &body);
    let out = dir.path().join("out");
    let o = run("simulate", &cfg, &out, &["--paths", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    let v = r["result"]["rolling"]["mean"].as_float().unwrap();
    let p0 = r["result"]["p0"].as_float().unwrap();
    assert!(v.abs() <= 1e-10 * p0.abs(), "V_T {v}");
    assert_eq!(r["result"]["rolling"]["n_paths"].as_integer(), Some(4));
    assert_eq!(r["config"]["simulation"]["paths"].as_integer(), Some(4));
}

#[test]
fn simulation_reports_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", &format!("{CURVE}{STORAGE}{PROCESS}"));
    let out = dir.path().join("out");
    let o = run("simulate", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["result"]["hedge_identity"]["pairing_ok"].as_bool(), Some(true));
    assert_eq!(r["result"]["trigger_check"]["samples"].as_array().unwrap().len(), 3);
    assert_eq!(r["result"]["analytic"]["product"].as_str(), Some("storage"));
}

#[test]
fn parse_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.toml", &format!("{CURVE}{}", STORAGE.replace("r_max = 1.0", "r_maxx = 1.0")));
    let o = run("intrinsic", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("unknown field `r_maxx`"), "{e}");

    let cfg = write_config(dir.path(), "g.toml", &format!("{CURVE}{STORAGE}gamma_injj = 0.1\n"));
    let o = run("intrinsic", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown field `gamma_injj`"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "q.toml", &format!("{CURVE}{}", STORAGE.replace("q_min = 0.0", "q_min = \"low\"")));
    let o = run("intrinsic", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("q_min"), "{}", stderr(&o));
}

#[test]
fn missing_sections_and_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.toml", CURVE);
    let o = run("intrinsic", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("storage"));

    let body = format!("[curve]\nt_end = 1.0\nn_steps = 10\nfile = \"nope.csv\"\n{STORAGE}");
    let cfg = write_config(dir.path(), "f.toml", &body);
    let o = run("intrinsic", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
}

#[test]
fn curve_file_is_resolved_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("t,price\n");
    for k in 0..=500 {
        let t = k as f64 / 500.0;
        text.push_str(&format!("{t},{}\n", 20.0 + 5.0 * (4.0 * std::f64::consts::PI * t).sin()));
    }
    std::fs::write(dir.path().join("curve.csv"), text).unwrap();
    let body = format!("[curve]\nt_end = 1.0\nn_steps = 120\nfile = \"curve.csv\"\n{STORAGE}");
    let cfg = write_config(dir.path(), "f.toml", &body);
    let out = dir.path().join("out");
    let o = run("intrinsic", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trigger = report(&out)["result"]["segments"].as_array().unwrap()[0]["trigger"].as_float().unwrap();
    assert!((trigger - 20.0).abs() < 0.05, "trigger {trigger}");
}

#[test]
fn analytic_table_and_compare_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let swing = r#"
[curve]
t_end = 1.0
n_steps = 120
sinusoid = { f_c = 0.0, d_f = 5.0, n_humps = 4 }

[storage]
q_min = -1e300
q_max = 1e300
r_min = 0.0
r_max = 1.0
q_start = 0.0
terminal = { mode = "free", f_e = 0.0 }

[process]
kind = "normal1f"
kappa0 = 1.0

[simulation]
paths = 8
antithetic = true

[analytic]
points = 20

[compare]
alpha_t_e = [0.0, 1.0, 5.0]
"#;
    let cfg = write_config(dir.path(), "w.toml", swing);
    let out = dir.path().join("out");
    let o = run("analytic", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("phi_table.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 21);
    assert_eq!(report(&out)["result"]["product"].as_str(), Some("swing"));

    let o = run("compare", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], 2.0);
    assert!(rows[0][1] > rows[1][1] && rows[1][1] > rows[2][1]);

    let o = run("compare", &write_config(dir.path(), "n.toml", &format!("{CURVE}{STORAGE}")), &out, &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn worker_override_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", &format!("{CURVE}{STORAGE}"));
    let o = Command::new(env!("CARGO_BIN_EXE_storval"))
        .args(["intrinsic", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .env("STORVAL_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
