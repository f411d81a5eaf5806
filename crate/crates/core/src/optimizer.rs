//! Projected gradient over the control box, first-order (KKT) certification,
//! critical-cone sampling and the second-order necessary check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::{cost_from_state, first_order, first_order_from_state, second_order_form, FirstOrder};
use crate::pde::Discretization;
use crate::sequences::{project_box, BoundsPair, Control};

pub const DEFAULT_TOL_ACTIVE: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;
const MAX_REJECTIONS: usize = 30;
const STEP_MIN: f64 = 1e-6;
const STEP_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    LowerActive,
    UpperActive,
    Interior,
    /// `α_i = β_i`
    Degenerate,
}

impl Activity {
    pub fn as_str(self) -> &'static str {
        match self {
            Activity::LowerActive => "lower-active",
            Activity::UpperActive => "upper-active",
            Activity::Interior => "interior",
            Activity::Degenerate => "degenerate",
        }
    }
}

pub fn classify(u: f64, lower: f64, upper: f64, tol_active: f64) -> Activity {
    if upper - lower <= tol_active {
        Activity::Degenerate
    } else if u - lower <= tol_active {
        Activity::LowerActive
    } else if upper - u <= tol_active {
        Activity::UpperActive
    } else {
        Activity::Interior
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktEntry {
    pub index: usize,
    pub u: f64,
    pub lower: f64,
    pub upper: f64,
    pub d: f64,
    pub class: Activity,
    pub residual: f64,
    /// `|u − clamp(u − d)|`
    pub projected: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KktReport {
    pub entries: Vec<KktEntry>,
    pub aggregate: f64,
    pub projected_aggregate: f64,
    pub iterations: usize,
    pub j_history: Vec<f64>,
}

impl KktReport {
    /// The sign condition of each class holds up to `tol`.
    pub fn trichotomy_holds(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| match e.class {
            Activity::LowerActive => e.d >= -tol,
            Activity::UpperActive => e.d <= tol,
            Activity::Interior => e.d.abs() <= tol,
            Activity::Degenerate => true,
        })
    }
}

pub fn kkt_residual(u: &Control, d: &[f64], bounds: &BoundsPair, tol_active: f64) -> KktReport {
    assert_eq!(d.len(), bounds.len(), "gradient and bounds lengths");
    let mut entries = Vec::with_capacity(d.len());
    for (i, &di) in d.iter().enumerate() {
        let (a, b) = (bounds.lower()[i], bounds.upper()[i]);
        let ui = u.get(i);
        let class = classify(ui, a, b, tol_active);
        let residual = match class {
            Activity::LowerActive => (-di).max(0.0),
            Activity::UpperActive => di.max(0.0),
            Activity::Interior => di.abs(),
            Activity::Degenerate => 0.0,
        };
        let projected = (ui - (ui - di).clamp(a, b)).abs();
        entries.push(KktEntry { index: i, u: ui, lower: a, upper: b, d: di, class, residual, projected });
    }
    KktReport {
        aggregate: entries.iter().fold(0.0, |m, e| m.max(e.residual)),
        projected_aggregate: entries.iter().fold(0.0, |m, e| m.max(e.projected)),
        entries,
        iterations: 0,
        j_history: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub tol_active: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-6, tol_active: DEFAULT_TOL_ACTIVE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub j: f64,
    pub kkt: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub u: Control,
    pub kkt: KktReport,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub notes: Vec<String>,
}

/// `u⁺ = P(u − s d)` with Armijo backtracking and Barzilai–Borwein initial
/// steps. Reaching `max_iters` is not an error; `converged` is then false.
pub fn projected_gradient(
    disc: &Discretization<'_>,
    u0: &Control,
    opts: OptimizerOptions,
) -> Result<OptimizationResult> {
    let bounds = &disc.instance().bounds;
    let k = bounds.len();
    if u0.len() != k {
        return Err(Error::InvalidInput(format!("initial control has {} entries for {k} bounds", u0.len())));
    }
    if !bounds.contains(u0) {
        return Err(Error::InvalidInput("initial control violates the bounds".into()));
    }
    let mut notes = Vec::new();
    let mut fo = first_order(disc, u0)?;
    let mut history = Vec::new();
    let mut j_history = vec![fo.j];
    let all_pinned = bounds.lower().iter().zip(bounds.upper()).all(|(a, b)| b - a <= opts.tol_active);
    if all_pinned {
        notes.push("fully constrained".to_string());
        let mut kkt = kkt_residual(&fo.u, &fo.gradient, bounds, opts.tol_active);
        kkt.j_history = j_history;
        history.push(IterationRecord { iteration: 0, j: fo.j, kkt: kkt.aggregate, step: 0.0 });
        return Ok(OptimizationResult { u: fo.u, kkt, history, converged: true, notes });
    }

    let mut step = 1.0;
    let mut iteration = 0;
    loop {
        let mut kkt = kkt_residual(&fo.u, &fo.gradient, bounds, opts.tol_active);
        history.push(IterationRecord {
            iteration,
            j: fo.j,
            kkt: kkt.aggregate,
            step: if iteration == 0 { 0.0 } else { step },
        });
        if kkt.aggregate <= opts.tol || iteration >= opts.max_iters {
            let converged = kkt.aggregate <= opts.tol;
            if !converged {
                notes.push("max iterations".to_string());
            }
            kkt.iterations = iteration;
            kkt.j_history = j_history;
            return Ok(OptimizationResult { u: fo.u, kkt, history, converged, notes });
        }
        iteration += 1;
        let d = Control::new(fo.gradient.clone())?;
        let mut t = step;
        let mut rejections = 0;
        let next = loop {
            let trial = project_box(&fo.u.add_scaled(-t, &d), bounds);
            let decrease: f64 = (0..k).map(|i| d.get(i) * (trial.get(i) - fo.u.get(i))).sum();
            if decrease == 0.0 {
                // the projected step no longer moves: stationary to round-off
                notes.push(format!("iteration {iteration}: projected step vanished"));
                let mut kkt = kkt_residual(&fo.u, &fo.gradient, bounds, opts.tol_active);
                kkt.iterations = iteration;
                kkt.j_history = j_history;
                return Ok(OptimizationResult { u: fo.u, converged: kkt.aggregate <= opts.tol, kkt, history, notes });
            }
            let accepted = match disc.solve_state(&trial) {
                Ok(state) => {
                    let j = cost_from_state(disc, &state, &trial);
                    if j <= fo.j + ARMIJO * decrease {
                        Some(state)
                    } else {
                        None
                    }
                }
                Err(e) if e.is_solver_failure() || matches!(e, Error::IllPosed { .. }) => None,
                Err(e) => return Err(e),
            };
            if let Some(state) = accepted {
                break first_order_from_state(disc, &trial, state)?;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(Error::LineSearchFailed { rejections });
            }
            t *= 0.5;
        };
        let s: Vec<f64> = (0..k).map(|i| next.u.get(i) - fo.u.get(i)).collect();
        let y: Vec<f64> = (0..k).map(|i| next.gradient[i] - fo.gradient[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { (ss / sy).clamp(STEP_MIN, STEP_MAX) } else { STEP_MAX.min(t * 2.0) };
        j_history.push(next.j);
        fo = next;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalDirection {
    pub h: Control,
    /// Only the zero direction exists.
    pub zero: bool,
    /// Sign constraints at active indices hold exactly.
    pub signs_ok: bool,
    /// `h_i = 0` wherever `|d_i| > tol_grad`.
    pub support_ok: bool,
    /// `Σ h_i d̃_i`, with `d̃` the gradient with entries `|d_i| ≤ tol_grad` set
    /// to zero. Vanishes exactly for a certified direction.
    pub dj_cleaned: f64,
    /// `Σ h_i d_i` with the raw gradient.
    pub dj_raw: f64,
}

impl CriticalDirection {
    pub fn certified(&self) -> bool {
        self.signs_ok && self.support_ok && self.dj_cleaned == 0.0
    }
}

fn certify(h: Control, d: &[f64], classes: &[Activity], tol_grad: f64, zero: bool) -> CriticalDirection {
    let mut signs_ok = true;
    let mut support_ok = true;
    let mut dj_cleaned = 0.0;
    let mut dj_raw = 0.0;
    for (i, &di) in d.iter().enumerate() {
        let hi = h.get(i);
        signs_ok &= match classes[i] {
            Activity::LowerActive => hi >= 0.0,
            Activity::UpperActive => hi <= 0.0,
            Activity::Degenerate => hi == 0.0,
            Activity::Interior => true,
        };
        if di.abs() > tol_grad {
            support_ok &= hi == 0.0;
            dj_cleaned += hi * di;
        }
        dj_raw += hi * di;
    }
    CriticalDirection { h, zero, signs_ok, support_ok, dj_cleaned, dj_raw }
}

/// Seeded samples from the critical cone at a first-order point, normalized
/// to unit `ℓ¹` norm.
pub fn sample_critical_cone(
    u: &Control,
    d: &[f64],
    bounds: &BoundsPair,
    tol_active: f64,
    tol_grad: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<CriticalDirection>> {
    let kkt = kkt_residual(u, d, bounds, tol_active);
    if kkt.aggregate > tol_grad {
        return Err(Error::Hypothesis(format!(
            "KKT residual {:e} exceeds the gradient tolerance {tol_grad:e}",
            kkt.aggregate
        )));
    }
    let classes: Vec<Activity> = kkt.entries.iter().map(|e| e.class).collect();
    let free: Vec<bool> = (0..d.len()).map(|i| classes[i] != Activity::Degenerate && d[i].abs() <= tol_grad).collect();
    if !free.iter().any(|&f| f) {
        let h = Control::zeros(d.len());
        return Ok(vec![certify(h, d, &classes, tol_grad, true)]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut h: Vec<f64> = (0..d.len())
            .map(|i| {
                if !free[i] {
                    return 0.0;
                }
                // (0, 1], never exactly zero
                let mag = 1.0 - rng.gen::<f64>();
                match classes[i] {
                    Activity::LowerActive => mag,
                    Activity::UpperActive => -mag,
                    _ => {
                        if rng.gen::<bool>() {
                            mag
                        } else {
                            -mag
                        }
                    }
                }
            })
            .collect();
        let norm: f64 = h.iter().map(|v| v.abs()).sum();
        for v in &mut h {
            *v /= norm;
        }
        out.push(certify(Control::new(h)?, d, &classes, tol_grad, false));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderReport {
    pub values: Vec<f64>,
    pub min_value: f64,
    pub argmin: Option<usize>,
    pub tol: f64,
    pub pass: bool,
    pub j: f64,
}

/// `D²J(u)[h, h] ≥ −tol` over the supplied directions; `tol` defaults to
/// `1e-8 (1 + |J|)`.
pub fn second_order_check(
    disc: &Discretization<'_>,
    u: &Control,
    directions: &[CriticalDirection],
    tol: Option<f64>,
) -> Result<SecondOrderReport> {
    let fo = first_order(disc, u)?;
    second_order_check_at(disc, &fo, directions, tol)
}

pub fn second_order_check_at(
    disc: &Discretization<'_>,
    fo: &FirstOrder<'_>,
    directions: &[CriticalDirection],
    tol: Option<f64>,
) -> Result<SecondOrderReport> {
    let tol = tol.unwrap_or(1e-8 * (1.0 + fo.j.abs()));
    let mut values = Vec::with_capacity(directions.len());
    for dir in directions {
        let v =
            if dir.h.values().iter().all(|&x| x == 0.0) { 0.0 } else { second_order_form(disc, fo, &dir.h, &dir.h)? };
        values.push(v);
    }
    let (argmin, min_value) =
        values
            .iter()
            .enumerate()
            .fold((None, f64::INFINITY), |(ai, av), (i, &v)| if v < av { (Some(i), v) } else { (ai, av) });
    let min_value = if values.is_empty() { 0.0 } else { min_value };
    Ok(SecondOrderReport { pass: min_value >= -tol, values, min_value, argmin, tol, j: fo.j })
}
