//! The four commands. Each writes CSV reports and a `summary.txt` of
//! `key=value` lines into the output directory.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimates::{
    disk_green, verify_lipschitz_family, verify_mollified_poisson, verify_poisson_exponential,
    verify_scalar_exponential, verify_semilinear_exponential, EstimateReport,
};
use crate::fem::integrate_nodal;
use crate::mesh::{build_mesh, DomainKind, Point};
use crate::objective::taylor_remainder_test;
use crate::optimizer::{projected_gradient, sample_critical_cone, second_order_check, OptimizerOptions};
use crate::pde::{Discretization, Nonlinearity};
use crate::sequences::{compute_separation_radii, project_box, Control};

use super::config::{RunConfig, VerifyCheck};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_ESTIMATE: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    if e.is_solver_failure() || matches!(e, Error::PointNotLocated { .. }) {
        EXIT_SOLVER
    } else {
        EXIT_CONFIG
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub message: Option<String>,
}

impl Outcome {
    fn ok() -> Self {
        Self { code: EXIT_OK, message: None }
    }
}

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e6)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e6).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(header).map_err(|e| io_err(&path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

#[derive(Default)]
struct Summary(Vec<(String, String)>);

impl Summary {
    fn put(&mut self, k: &str, v: impl ToString) -> &mut Self {
        self.0.push((k.to_string(), v.to_string()));
        self
    }

    fn num(&mut self, k: &str, v: f64) -> &mut Self {
        self.put(k, num(v))
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("summary.txt");
        let text: String = self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn domain_center(kind: &DomainKind) -> Point {
    match *kind {
        DomainKind::Rectangle { min, max } => [0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1])],
        DomainKind::Disk { center, .. } => center,
    }
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let inst = cfg.instance()?;
    let u = cfg.control_or_zero(inst.num_sources(), "control", &cfg.control)?;
    let mesh = cfg.mesh_for(&inst)?;
    let disc = Discretization::new(&inst, &mesh, cfg.solver_options())?;
    let state = disc.solve_state(&u)?;
    prepare_out(out)?;
    let y = state.values();
    let rows: Vec<Vec<String>> =
        mesh.vertices().iter().zip(y).map(|(x, v)| vec![num(x[0]), num(x[1]), num(*v)]).collect();
    write_csv(out, "solution.csv", &["x", "y", "value"], &rows)?;
    let rows: Vec<Vec<String>> =
        state.history.iter().map(|s| vec![s.iteration.to_string(), num(s.residual), num(s.step)]).collect();
    write_csv(out, "newton.csv", &["iteration", "residual", "step"], &rows)?;

    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let int_exp = integrate_nodal(&mesh, y, f64::exp, |_| true, |_| 0);
    let mut s = Summary::default();
    s.put("command", "solve")
        .put("vertices", mesh.num_vertices())
        .put("triangles", mesh.num_triangles())
        .num("h", mesh.h())
        .put("converged", state.converged)
        .put("newton_iterations", state.newton_iterations)
        .num("final_residual", state.final_residual)
        .num("y_min", ymin)
        .num("y_max", ymax)
        .num("max_abs_y", state.y.max_abs())
        .num("integral_exp_y", int_exp);

    if let Some(ring) = &cfg.probe_ring {
        let center = domain_center(&inst.domain.kind);
        let reference = match inst.domain.kind {
            DomainKind::Disk { center, radius } if inst.nonlinearity == Nonlinearity::Linear && inst.f0.is_zero() => {
                Some((center, radius))
            }
            _ => None,
        };
        let mut rows = Vec::with_capacity(ring.count);
        let mut max_err: f64 = 0.0;
        for k in 0..ring.count {
            let th = 2.0 * PI * k as f64 / ring.count as f64;
            let x = [center[0] + ring.radius * th.cos(), center[1] + ring.radius * th.sin()];
            let v = state.y.evaluate(x)?;
            let (g, err) = match reference {
                Some((c, r)) => {
                    let g: f64 = inst
                        .sources
                        .points()
                        .iter()
                        .enumerate()
                        .map(|(i, &xi)| u.get(i) * disk_green(x, xi, c, r))
                        .sum();
                    max_err = max_err.max((v - g).abs());
                    (num(g), num((v - g).abs()))
                }
                None => (String::new(), String::new()),
            };
            rows.push(vec![num(th), num(x[0]), num(x[1]), num(v), g, err]);
        }
        write_csv(out, "probe.csv", &["angle", "x", "y", "value", "green", "abs_error"], &rows)?;
        if reference.is_some() {
            s.num("probe_max_error", max_err);
        }
    }
    s.write(out)?;
    Ok(Outcome::ok())
}

pub fn cmd_optimize(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let inst = cfg.instance()?;
    let mesh = cfg.mesh_for(&inst)?;
    let disc = Discretization::new(&inst, &mesh, cfg.solver_options())?;
    let k = inst.num_sources();
    let oc = &cfg.optimize;
    let u0 = match &oc.initial {
        Some(_) => cfg.control_or_zero(k, "optimize.initial", &oc.initial)?,
        None => project_box(&Control::zeros(k), &inst.bounds),
    };
    let opts = OptimizerOptions { max_iters: oc.max_iters, tol: oc.tol, tol_active: oc.tol_active };
    let res = projected_gradient(&disc, &u0, opts)?;
    prepare_out(out)?;

    let rows: Vec<Vec<String>> =
        res.history.iter().map(|h| vec![h.iteration.to_string(), num(h.j), num(h.kkt), num(h.step)]).collect();
    write_csv(out, "history.csv", &["iteration", "J", "kkt_residual", "step"], &rows)?;
    let rows: Vec<Vec<String>> = res.u.values().iter().enumerate().map(|(i, v)| vec![i.to_string(), num(*v)]).collect();
    write_csv(out, "control.csv", &["index", "u"], &rows)?;
    let rows: Vec<Vec<String>> = res
        .kkt
        .entries
        .iter()
        .map(|e| {
            vec![
                e.index.to_string(),
                num(e.u),
                num(e.lower),
                num(e.upper),
                num(e.d),
                e.class.as_str().to_string(),
                num(e.residual),
                num(e.projected),
            ]
        })
        .collect();
    write_csv(
        out,
        "kkt.csv",
        &["index", "u", "lower", "upper", "d", "class", "residual", "projected_residual"],
        &rows,
    )?;

    let mut s = Summary::default();
    s.put("command", "optimize")
        .put("converged", res.converged)
        .put("iterations", res.kkt.iterations)
        .num("J", *res.kkt.j_history.last().unwrap_or(&f64::NAN))
        .num("kkt_residual", res.kkt.aggregate)
        .num("projected_residual", res.kkt.projected_aggregate)
        .put("trichotomy", res.kkt.trichotomy_holds(oc.tol));

    let tol_grad = oc.tol_grad.unwrap_or(oc.tol);
    let d: Vec<f64> = res.kkt.entries.iter().map(|e| e.d).collect();
    let mut notes = res.notes.clone();
    if res.kkt.aggregate <= tol_grad {
        let dirs = sample_critical_cone(&res.u, &d, &inst.bounds, oc.tol_active, tol_grad, oc.directions, cfg.seed)?;
        let so = second_order_check(&disc, &res.u, &dirs, None)?;
        let rows: Vec<Vec<String>> = dirs
            .iter()
            .zip(&so.values)
            .enumerate()
            .map(|(i, (dir, v))| {
                let h: Vec<String> = dir.h.values().iter().map(|x| num(*x)).collect();
                vec![i.to_string(), num(*v), dir.certified().to_string(), h.join(";")]
            })
            .collect();
        write_csv(out, "second_order.csv", &["direction", "d2j", "certified", "h"], &rows)?;
        s.put("critical_directions", dirs.len())
            .put("critical_cone_trivial", dirs.iter().all(|d| d.zero))
            .num("second_order_min", so.min_value)
            .num("second_order_tol", so.tol)
            .put("second_order_pass", so.pass);
    } else {
        notes.push("second-order check skipped: first-order residual above tolerance".into());
    }
    s.put("notes", notes.join("; "));
    s.write(out)?;
    if res.converged {
        Ok(Outcome::ok())
    } else {
        Ok(Outcome { code: EXIT_BUDGET, message: Some(format!("max iterations ({}) reached", oc.max_iters)) })
    }
}

fn run_check(cfg: &RunConfig, check: &VerifyCheck) -> Result<Vec<EstimateReport>> {
    match check {
        VerifyCheck::Scalar { samples } => Ok(vec![verify_scalar_exponential(*samples, cfg.seed)]),
        VerifyCheck::PoissonExponential { omega, alpha } | VerifyCheck::SemilinearExponential { omega, alpha } => {
            let domain = cfg.domain()?;
            let points = compute_separation_radii(&cfg.points, &domain)?;
            let omega = Control::new(omega.clone())?;
            let mesh = build_mesh(&domain, cfg.mesh.resolution, Some(&points), cfg.mesh.refine_levels)?;
            if matches!(check, VerifyCheck::PoissonExponential { .. }) {
                Ok(vec![verify_poisson_exponential(&points, &omega, *alpha, &mesh)?])
            } else {
                Ok(vec![verify_semilinear_exponential(&points, &omega, *alpha, &cfg.f0()?, &mesh)?])
            }
        }
        VerifyCheck::Lipschitz { trials } => {
            let inst = cfg.instance()?;
            let mesh = cfg.mesh_for(&inst)?;
            verify_lipschitz_family(&inst, &mesh, *trials, cfg.seed)
        }
        VerifyCheck::MollifiedPoisson { x0, rho0, epsilon, m } => {
            let domain = cfg.domain()?;
            let mesh = build_mesh(&domain, cfg.mesh.resolution, None, 0)?;
            verify_mollified_poisson(*x0, *rho0, *epsilon, *m, &mesh)
        }
    }
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    if cfg.verify.is_empty() {
        return Err(Error::InvalidInput("verify: no checks configured".into()));
    }
    let mut reports = Vec::new();
    for check in &cfg.verify {
        reports.extend(run_check(cfg, check)?);
    }
    prepare_out(out)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={}", num(*v))).collect();
            vec![
                r.name.clone(),
                params.join(";"),
                num(r.lhs),
                num(r.bound),
                num(r.rhs),
                num(r.margin),
                r.pass.to_string(),
                r.note.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(out, "estimates.csv", &["name", "parameters", "lhs", "bound", "rhs", "margin", "pass", "note"], &rows)?;
    let failed: Vec<&EstimateReport> = reports.iter().filter(|r| !r.pass).collect();
    let mut s = Summary::default();
    s.put("command", "verify").put("reports", reports.len()).put("failed", failed.len()).put("seed", cfg.seed);
    s.write(out)?;
    if failed.is_empty() {
        Ok(Outcome::ok())
    } else {
        let names: Vec<&str> = failed.iter().map(|r| r.name.as_str()).collect();
        Ok(Outcome { code: EXIT_ESTIMATE, message: Some(format!("estimate violated: {}", names.join(", "))) })
    }
}

pub fn cmd_taylor(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let tc = cfg.taylor.as_ref().ok_or_else(|| Error::InvalidInput("taylor: section required".into()))?;
    let inst = cfg.instance()?;
    let k = inst.num_sources();
    let u = cfg.control_or_zero(k, "control", &cfg.control)?;
    let h = cfg.control_or_zero(k, "taylor.direction", &Some(tc.direction.clone()))?;
    let mesh = cfg.mesh_for(&inst)?;
    let disc = Discretization::new(&inst, &mesh, cfg.solver_options())?;
    let rep = taylor_remainder_test(&disc, &u, &h, &tc.rho_grid)?;
    prepare_out(out)?;
    let rows: Vec<Vec<String>> = rep
        .taylor
        .iter()
        .map(|r| {
            if r.skipped {
                vec![num(r.rho), String::new(), String::new(), String::new(), String::new(), "skipped".into()]
            } else {
                vec![num(r.rho), num(r.r1), num(r.r2), num(r.state_r1), num(r.state_r2), "ok".into()]
            }
        })
        .collect();
    write_csv(out, "taylor.csv", &["rho", "r1", "r2", "state_r1", "state_r2", "status"], &rows)?;
    let slope = |v: Option<f64>| v.map_or_else(|| "none".to_string(), num);
    let dj: f64 = rep.gradient.iter().enumerate().map(|(i, d)| d * h.get(i)).sum();
    let mut s = Summary::default();
    s.put("command", "taylor")
        .num("J", rep.j)
        .num("dj_h", dj)
        .num("d2j_hh", rep.second_order.unwrap_or(f64::NAN))
        .put("slope_r1", slope(rep.slope_r1))
        .put("slope_r2", slope(rep.slope_r2))
        .put("slope_state_r1", slope(rep.slope_state_r1))
        .put("slope_state_r2", slope(rep.slope_state_r2))
        .put("skipped", rep.taylor.iter().filter(|r| r.skipped).count())
        .put("notes", rep.notes.join("; "));
    s.write(out)?;
    Ok(Outcome::ok())
}
