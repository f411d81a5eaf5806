use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(cmd: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = out.with_extension("json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_expdirac"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(dir.join("summary.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn outdir(tmp: &TempDir, name: &str) -> PathBuf {
    tmp.path().join(name)
}

const TWO_POINTS: &str = r#""points": [[0.3, 0.4], [0.7, 0.6]], "bounds": {"lower": [-1, -1], "upper": [2, 2]}"#;

#[test]
fn solve_zero_data_gives_zero_state() {
    let tmp = TempDir::new().unwrap();
    let out = outdir(&tmp, "zero");
    let o = run("solve", &format!("{{{TWO_POINTS}, \"mesh\": {{\"resolution\": 8}}}}"), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&out);
    assert!(s["max_abs_y"].parse::<f64>().unwrap() <= 1e-12);
    let sol = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert_eq!(sol.lines().next(), Some("x,y,value"));
    assert_eq!(sol.lines().count(), 1 + s["vertices"].parse::<usize>().unwrap());
    assert!(out.join("newton.csv").exists());
}

#[test]
fn solve_disk_green_probe_column() {
    let tmp = TempDir::new().unwrap();
    let out = outdir(&tmp, "green");
    let cfg = r#"{"domain": {"kind": "disk", "radius": 1.0}, "points": [[0, 0]],
        "bounds": {"lower": [0], "upper": [1]}, "control": [1.0], "nonlinearity": "none",
        "mesh": {"resolution": 32}, "probe_ring": {"radius": 0.5, "count": 32}}"#;
    let o = run("solve", cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let probe = fs::read_to_string(out.join("probe.csv")).unwrap();
    assert_eq!(probe.lines().next(), Some("angle,x,y,value,green,abs_error"));
    assert_eq!(probe.lines().count(), 33);
    let exact = 2f64.ln() / (2.0 * std::f64::consts::PI);
    for line in probe.lines().skip(1) {
        let g: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!((g - exact).abs() < 1e-12);
    }
    assert!(summary(&out)["probe_max_error"].parse::<f64>().unwrap() < 5e-3);
}

#[test]
fn bounds_at_four_pi_exit_one_with_index() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{"points": [[0.3, 0.4], [0.7, 0.6]], "bounds": {"lower": [0, 0], "upper": [1, 12.6]}}"#;
    let o = run("solve", cfg, &outdir(&tmp, "b"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("index 1"), "{}", stderr(&o));
}

#[test]
fn malformed_config_and_usage_exit_one() {
    let tmp = TempDir::new().unwrap();
    let o = run("solve", r#"{"points": [[0.5, 0.5]], "bogus": 1}"#, &outdir(&tmp, "m"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"));
    let o = Command::new(env!("CARGO_BIN_EXE_expdirac")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_expdirac"))
        .args(["solve", "--config", "/nonexistent/run.json"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn newton_budget_exhaustion_is_solver_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!(
        "{{{TWO_POINTS}, \"control\": [2, 2], \"f0\": {{\"kind\": \"constant\", \"value\": 50}},
           \"mesh\": {{\"resolution\": 8}}, \"solver\": {{\"max_newton\": 1}}}}"
    );
    let o = run("solve", &cfg, &outdir(&tmp, "s"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn optimize_fully_constrained() {
    let tmp = TempDir::new().unwrap();
    let out = outdir(&tmp, "pinned");
    let cfg = r#"{"points": [[0.3, 0.4], [0.7, 0.6]], "bounds": {"lower": [0.5, -1], "upper": [0.5, -1]},
        "nu": 0.1, "mesh": {"resolution": 8}}"#;
    let o = run("optimize", cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&out);
    assert_eq!(s["iterations"], "0");
    assert!(s["notes"].contains("fully constrained"));
    let control = fs::read_to_string(out.join("control.csv")).unwrap();
    assert_eq!(control, "index,u\n0,0.5\n1,-1\n");
}

#[test]
fn optimize_budget_exit_three_with_partial_report() {
    let tmp = TempDir::new().unwrap();
    let out = outdir(&tmp, "budget");
    let cfg = format!(
        "{{{TWO_POINTS}, \"nu\": 0.01, \"y_d\": {{\"kind\": \"constant\", \"value\": 0.3}},
           \"mesh\": {{\"resolution\": 8}}, \"optimize\": {{\"max_iters\": 1, \"tol\": 1e-12}}}}"
    );
    let o = run("optimize", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("max iterations"));
    assert_eq!(summary(&out)["converged"], "false");
    let kkt = fs::read_to_string(out.join("kkt.csv")).unwrap();
    assert!(kkt.starts_with("index,u,lower,upper,d,class,residual,projected_residual\n"));
    assert!(out.join("history.csv").exists());
}

#[test]
fn optimize_manufactured_instance() {
    let tmp = TempDir::new().unwrap();
    let out = outdir(&tmp, "opt");
    let cfg = r#"{"points": [[0.25, 0.25], [0.75, 0.25], [0.5, 0.75]],
        "bounds": {"lower": [-1, 0.3, -2], "upper": [1, 2, -0.2]}, "nu": 0.1,
        "f0": {"kind": "gaussian", "center": [0.5, 0.5], "width": 0.3, "amplitude": 1},
        "y_d": {"kind": "state_of", "control": [0, 0, 0]},
        "mesh": {"resolution": 16}, "optimize": {"directions": 16}}"#;
    let o = run("optimize", cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&out);
    assert!(s["kkt_residual"].parse::<f64>().unwrap() <= 1e-6);
    assert_eq!(s["trichotomy"], "true");
    assert_eq!(s["second_order_pass"], "true");
    let so = fs::read_to_string(out.join("second_order.csv")).unwrap();
    assert_eq!(so.lines().count(), 17);
}

#[test]
fn verify_scalar_and_hypothesis_violation() {
    let tmp = TempDir::new().unwrap();
    let out = outdir(&tmp, "scalar");
    let o = run("verify", r#"{"verify": [{"check": "scalar", "samples": 2000}]}"#, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("estimates.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "0");
    assert_eq!(summary(&out)["failed"], "0");

    let cfg = r#"{"points": [[0.5, 0.5]], "verify": [{"check": "poisson_exponential", "omega": [-1], "alpha": 3}]}"#;
    let o = run("verify", cfg, &outdir(&tmp, "hyp"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hypothesis"), "{}", stderr(&o));
}

#[test]
fn verify_disk_case_row() {
    let tmp = TempDir::new().unwrap();
    let out = outdir(&tmp, "disk");
    let cfg = r#"{"domain": {"kind": "disk", "radius": 1}, "points": [[0, 0]],
        "mesh": {"resolution": 32, "refine_levels": 4},
        "verify": [{"check": "poisson_exponential", "omega": [1], "alpha": 6.283185307179586},
                   {"check": "mollified_poisson", "x0": [0, 0], "rho0": 0.5, "epsilon": 0.1, "m": 6.283185307179586}]}"#;
    let o = run("verify", cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("estimates.csv")).unwrap();
    let mut rdr = csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    let row = rdr.next().unwrap();
    assert_eq!(row[0], "poisson_exponential");
    let two_pi = 2.0 * std::f64::consts::PI;
    assert!((row[2].parse::<f64>().unwrap() / two_pi - 1.0).abs() < 1e-3);
    assert!((row[4].parse::<f64>().unwrap() / (2.0 * two_pi) - 1.0).abs() < 1e-12);
    assert_eq!(summary(&out)["reports"], "3");
}

#[test]
fn taylor_zero_direction_and_skipped_probe() {
    let tmp = TempDir::new().unwrap();
    let out = outdir(&tmp, "zero");
    let cfg = format!("{{{TWO_POINTS}, \"mesh\": {{\"resolution\": 8}}, \"taylor\": {{\"direction\": [0, 0]}}}}");
    let o = run("taylor", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = fs::read_to_string(out.join("taylor.csv")).unwrap();
    assert_eq!(t.lines().count(), 6);
    for line in t.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(&f[1..], ["0", "0", "0", "0", "ok"]);
    }
    assert!(summary(&out).contains_key("slope_r1"));

    let out = outdir(&tmp, "skip");
    let cfg = format!(
        "{{{TWO_POINTS}, \"mesh\": {{\"resolution\": 8}}, \"control\": [12.0, 0],
           \"taylor\": {{\"direction\": [10, 0], \"rho_grid\": [0.1, 0.01, 0.001]}}}}"
    );
    let o = run("taylor", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = fs::read_to_string(out.join("taylor.csv")).unwrap();
    let rows: Vec<&str> = t.lines().skip(1).collect();
    assert!(rows[0].ends_with("skipped"), "{t}");
    assert!(rows[1].ends_with("ok") && rows[2].ends_with("ok"));
    assert_eq!(summary(&out)["skipped"], "1");
}

fn read_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn identical_config_and_seed_give_identical_reports() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{"points": [[0.25, 0.25], [0.75, 0.25], [0.5, 0.75]],
        "bounds": {"lower": [-1, 0.3, -2], "upper": [1, 2, -0.2]}, "nu": 0.1,
        "y_d": {"kind": "state_of", "control": [0, 0, 0]}, "mesh": {"resolution": 8},
        "optimize": {"directions": 8},
        "verify": [{"check": "scalar", "samples": 500}, {"check": "lipschitz", "trials": 3}]}"#;
    for cmd in ["optimize", "verify"] {
        let a = outdir(&tmp, &format!("{cmd}_a"));
        let b = outdir(&tmp, &format!("{cmd}_b"));
        assert_eq!(run(cmd, cfg, &a, &["--seed", "7"]).status.code(), Some(0));
        assert_eq!(run(cmd, cfg, &b, &["--seed", "7"]).status.code(), Some(0));
        let (ra, rb) = (read_all(&a), read_all(&b));
        assert!(!ra.is_empty());
        assert_eq!(ra, rb, "{cmd}");
    }
    let c = outdir(&tmp, "verify_c");
    assert_eq!(run("verify", cfg, &c, &["--seed", "8"]).status.code(), Some(0));
    assert_ne!(read_all(&c)["estimates.csv"], read_all(&outdir(&tmp, "verify_a"))["estimates.csv"]);
}
