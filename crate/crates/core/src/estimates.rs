//! Numerical checks of the explicit inequalities: exponential integrability
//! of Poisson and semilinear solutions with point sources, the `L¹` bounds on
//! `e^{S(u)}`, the scalar exponential inequalities and the mollified-source
//! bounds.
//!
//! Integrals of `exp(c y_h)` use the seven-point rule on the P1 interpolant,
//! with one extra subdivision level on triangles carrying a source. Because
//! the interpolant is bounded where the true solution has a logarithmic
//! singularity, a passing check is a consistency check, not a proof.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_mollified_load, assemble_stiffness, integrate_nodal, lp_norm, near_points_levels, solve_spd, ScalarField,
};
use crate::mesh::{dist, DomainKind, Mesh, Point};
use crate::pde::{Discretization, Nonlinearity, ProblemInstance, SolverOptions, Target};
use crate::sequences::{compute_separation_radii, l_functional, BoundsPair, Control, SourcePoints};

/// Relative slack for the pass flag.
pub const PASS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub name: String,
    pub lhs: f64,
    /// The inequality's right-hand side as stated.
    pub bound: f64,
    /// The bound with any discretization slack applied; the check compares
    /// against this value.
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub params: Vec<(String, f64)>,
    pub note: Option<String>,
}

impl EstimateReport {
    pub fn new(name: impl Into<String>, lhs: f64, bound: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            name: name.into(),
            lhs,
            bound,
            rhs,
            margin,
            pass: margin >= -PASS_TOLERANCE * rhs.abs(),
            params: Vec::new(),
            note: None,
        }
    }

    pub fn param(mut self, key: impl Into<String>, value: f64) -> Self {
        self.params.push((key.into(), value));
        self
    }

    pub fn params_from(mut self, key: &str, values: &[f64]) -> Self {
        for (i, &v) in values.iter().enumerate() {
            self.params.push((format!("{key}{}", i + 1), v));
        }
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// `e^x − 1 − x`, by its Taylor series for `|x| < 2`.
pub fn exp_remainder1(x: f64) -> f64 {
    if x.abs() < 2.0 {
        series_from(x, 2)
    } else {
        x.exp_m1() - x
    }
}

/// `e^x − 1 − x − x²/2`, by its Taylor series for `|x| < 2`.
pub fn exp_remainder2(x: f64) -> f64 {
    if x.abs() < 2.0 {
        series_from(x, 3)
    } else {
        x.exp_m1() - x - 0.5 * x * x
    }
}

/// `Σ_{n ≥ start} x^n / n!`
fn series_from(x: f64, start: u32) -> f64 {
    let mut term = 1.0;
    for n in 1..=start {
        term *= x / n as f64;
    }
    let mut sum = 0.0f64;
    let mut n = start;
    while term != 0.0 && term.abs() > 1e-17 * sum.abs() {
        sum += term;
        n += 1;
        term *= x / n as f64;
        if n > 60 {
            break;
        }
    }
    sum
}

/// `(e^{at} − 1 − at)/t`
pub fn first_order_quotient(a: f64, t: f64) -> f64 {
    exp_remainder1(a * t) / t
}

/// `|e^{at} − 1 − at − a²t²/2| / (t²/2)`
pub fn second_order_quotient(a: f64, t: f64) -> f64 {
    exp_remainder2(a * t).abs() / (0.5 * t * t)
}

/// Both scalar monotonicity inequalities over `samples` random triples
/// `a ∈ [−10, 10]`, `0 < t < t0 ≤ 10`. LHS counts violations.
pub fn verify_scalar_exponential(samples: usize, seed: u64) -> EstimateReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rel = 1e-12;
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let a: f64 = rng.gen_range(-10.0..=10.0);
        let t0: f64 = 10.0 * (1.0 - rng.gen::<f64>());
        let t: f64 = t0 * rng.gen_range(f64::EPSILON..1.0);
        let p = first_order_quotient(a, t);
        let p0 = first_order_quotient(a, t0);
        let q = second_order_quotient(a, t);
        let q0 = second_order_quotient(a, t0);
        let ok1 = p >= -rel * p0.abs() && p <= p0 * (1.0 + rel);
        let ok2 = q <= q0 * (1.0 + rel);
        if p0 > 0.0 {
            worst = worst.max(p / p0);
        }
        if !(ok1 && ok2) {
            violations += 1;
        }
    }
    EstimateReport::new("scalar_exponential", violations as f64, 0.0, 0.0)
        .param("samples", samples as f64)
        .param("seed", seed as f64)
        .param("max_ratio_first", worst)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 4.0 * PI) {
        return Err(Error::Hypothesis(format!("alpha = {alpha} must lie in (0, 4pi)")));
    }
    Ok(())
}

/// `(4π²R²/α) (2R)^{(2−α/2π)‖ω‖₁/ω_max} exp[(2−α/2π)(shift + L)/ω_max]`
pub fn exponential_bound(alpha: f64, r: f64, omega_l1: f64, omega_max: f64, l: f64, shift: f64) -> f64 {
    let kappa = 2.0 - alpha / (2.0 * PI);
    4.0 * PI * PI * r * r / alpha
        * (2.0 * r).powf(kappa * omega_l1 / omega_max)
        * (kappa * (shift + l) / omega_max).exp()
}

/// `-Δy = Σ ω_i δ_{x_i}` with homogeneous Dirichlet data.
pub fn solve_poisson_dirac(mesh: &Mesh, points: &SourcePoints, omega: &Control, tol: f64) -> Result<Vec<f64>> {
    let a = assemble_stiffness(mesh);
    let b = crate::fem::assemble_dirac_load(mesh, points, omega)?;
    solve_spd(&a, &b, mesh.boundary(), tol)
}

/// Green's function of `-Δ` on the disk `B(c, r)` with pole `xi`.
pub fn disk_green(x: Point, xi: Point, c: Point, r: f64) -> f64 {
    let q = [x[0] - c[0], x[1] - c[1]];
    let p = [xi[0] - c[0], xi[1] - c[1]];
    let pn2 = p[0] * p[0] + p[1] * p[1];
    let d = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
    if pn2 == 0.0 {
        return (r / d).ln() / (2.0 * PI);
    }
    let s = r * r / pn2;
    let star = [s * p[0], s * p[1]];
    let ds = ((q[0] - star[0]).powi(2) + (q[1] - star[1]).powi(2)).sqrt();
    (pn2.sqrt() * ds / (r * d)).ln() / (2.0 * PI)
}

fn exp_integral(mesh: &Mesh, y: &[f64], c: f64, points: &[Point]) -> f64 {
    integrate_nodal(mesh, y, |v| (c * v).exp(), |_| true, near_points_levels(mesh, points, 0.0))
}

/// `∫ exp[(4π − α)|y|/ω_max]` for the Poisson problem with positive weights,
/// against its explicit bound.
pub fn verify_poisson_exponential(
    points: &SourcePoints,
    omega: &Control,
    alpha: f64,
    mesh: &Mesh,
) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    if omega.len() != points.len() {
        return Err(Error::InvalidInput(format!("{} weights for {} points", omega.len(), points.len())));
    }
    if let Some(i) = omega.values().iter().position(|&w| !(w > 0.0)) {
        return Err(Error::Hypothesis(format!("omega[{i}] = {} must be positive", omega.values()[i])));
    }
    let y = solve_poisson_dirac(mesh, points, omega, 1e-12)?;
    let wmax = omega.max();
    let abs_y: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let lhs = exp_integral(mesh, &abs_y, (4.0 * PI - alpha) / wmax, points.points());
    let r = mesh.domain().half_diameter();
    let l = l_functional(omega, points)?;
    let bound = exponential_bound(alpha, r, omega.l1_norm(), wmax, l, 0.0);
    Ok(EstimateReport::new("poisson_exponential", lhs, bound, bound)
        .param("alpha", alpha)
        .param("R", r)
        .param("L", l)
        .param("h", mesh.h())
        .params_from("omega", omega.values())
        .params_from("rho", points.radii())
        .with_note("discrete integrand is bounded at the sources; necessary consistency check"))
}

/// Semilinear analogue with `g(t) = e^t − 1` and smooth source `f0`. The
/// proof's bound `y ≤ y0 + y1` enters through the computable shift
/// `2π‖y0‖_∞`, `y0` being the measure-free solution.
pub fn verify_semilinear_exponential(
    points: &SourcePoints,
    omega: &Control,
    alpha: f64,
    f0: &ScalarField,
    mesh: &Mesh,
) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    if omega.len() != points.len() {
        return Err(Error::InvalidInput(format!("{} weights for {} points", omega.len(), points.len())));
    }
    if let Some(i) = omega.values().iter().position(|&w| !(w >= 0.0)) {
        return Err(Error::Hypothesis(format!("omega[{i}] = {} must be nonnegative", omega.values()[i])));
    }
    let wmax = omega.max();
    if !(wmax > 0.0) {
        return Err(Error::Hypothesis("omega must not vanish".into()));
    }
    let bounds = BoundsPair::new(vec![0.0; omega.len()], omega.values().to_vec())?;
    let inst = ProblemInstance::new(
        mesh.domain().clone(),
        points.clone(),
        bounds,
        0.0,
        f0.clone(),
        Target::Field(ScalarField::Zero),
    )?;
    let disc = Discretization::new(&inst, mesh, SolverOptions::default())?;
    let y = disc.solve_state(omega)?.y.into_values();
    let y0 = disc.solve_state(&Control::zeros(omega.len()))?.y.into_values();
    let y0_inf = y0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let y_pos: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let lhs = exp_integral(mesh, &y_pos, (4.0 * PI - alpha) / wmax, points.points());
    let r = mesh.domain().half_diameter();
    let l = l_functional(omega, points)?;
    let shift = 2.0 * PI * y0_inf;
    let bound = exponential_bound(alpha, r, omega.l1_norm(), wmax, l, shift);
    Ok(EstimateReport::new("semilinear_exponential", lhs, bound, bound)
        .param("alpha", alpha)
        .param("R", r)
        .param("L", l)
        .param("y0_inf", y0_inf)
        .param("h", mesh.h())
        .params_from("omega", omega.values())
        .params_from("rho", points.radii()))
}

/// Slack `1 + ε_h` applied to the `L¹` bounds.
pub const LIPSCHITZ_SLACK: f64 = 1.05;

/// Absolute floor for bounds that vanish exactly, at the scale of the
/// nonlinear solver tolerance.
const SOLVER_FLOOR: f64 = 1e-9;

fn random_admissible(rng: &mut ChaCha8Rng, bounds: &BoundsPair) -> Control {
    let v = bounds
        .lower()
        .iter()
        .zip(bounds.upper())
        .map(|(&a, &b)| if a == b { a } else { rng.gen_range(a..=b) })
        .collect();
    Control::new(v).expect("finite bounds")
}

/// The three `L¹` bounds on `e^{S(u)}` for `trials` random admissible pairs.
/// Integrals use the lumped nodal rule that discretizes the nonlinearity.
pub fn verify_lipschitz_family(
    instance: &ProblemInstance,
    mesh: &Mesh,
    trials: usize,
    seed: u64,
) -> Result<Vec<EstimateReport>> {
    let disc = Discretization::new(instance, mesh, SolverOptions::default())?;
    verify_lipschitz_pairs(&disc, trials, seed)
}

pub fn verify_lipschitz_pairs(disc: &Discretization<'_>, trials: usize, seed: u64) -> Result<Vec<EstimateReport>> {
    let instance = disc.instance();
    let mesh = disc.mesh();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = instance.f0_p;
    let f0 = instance.f0.clone();
    let f0_norm = if f0.is_zero() { 0.0 } else { lp_norm(mesh, |x| f0.eval(x), p) };
    let area = mesh.total_area();
    let data_term = area.powf((p - 1.0) / p) * f0_norm;
    let mut out = Vec::with_capacity(3 * trials);
    let mut lip_max: f64 = 0.0;
    for trial in 0..trials {
        let u = random_admissible(&mut rng, &instance.bounds);
        let v = random_admissible(&mut rng, &instance.bounds);
        let (yu, yv) = match (disc.solve_state(&u), disc.solve_state(&v)) {
            (Ok(a), Ok(b)) => (a.y.into_values(), b.y.into_values()),
            (Err(e), _) | (_, Err(e)) if e.is_solver_failure() => {
                out.push(
                    EstimateReport::new("lipschitz_skipped", 0.0, 0.0, 0.0)
                        .param("trial", trial as f64)
                        .with_note(format!("skipped: {e}")),
                );
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let du = u.add_scaled(-1.0, &v);
        let l1 = du.l1_norm();
        let pos: f64 = du.values().iter().map(|d| d.max(0.0)).sum();

        let lhs_a = disc.lumped_integral(&yu, |y| y.exp_m1().abs());
        let bound_a = data_term + u.l1_norm();
        let mut lhs_b = 0.0;
        let mut lhs_c = 0.0;
        let mut l2 = 0.0;
        for (j, m) in disc.lumped_masses().iter().enumerate() {
            let diff = yu[j].exp() - yv[j].exp();
            lhs_b += m * diff.max(0.0);
            lhs_c += m * diff.abs();
            l2 += m * (yu[j] - yv[j]).powi(2);
        }
        if l1 > 0.0 {
            lip_max = lip_max.max(l2.sqrt() / l1);
        }
        let slack = |b: f64| b * LIPSCHITZ_SLACK + SOLVER_FLOOR;
        let tag = |r: EstimateReport| {
            r.param("trial", trial as f64).params_from("u", u.values()).params_from("v", v.values())
        };
        out.push(tag(EstimateReport::new("exp_state_l1", lhs_a, bound_a, slack(bound_a)).param("f0_norm", f0_norm)));
        out.push(tag(EstimateReport::new("exp_state_positive_part", lhs_b, pos, slack(pos))));
        out.push(tag(EstimateReport::new("exp_state_continuity", lhs_c, l1, slack(l1))));
    }
    for r in &mut out {
        r.params.push(("state_lipschitz_constant".into(), lip_max));
    }
    Ok(out)
}

/// Pointwise and in-ball bounds for Poisson's equation on the disk `B_R`
/// mesh with source `φ_ε(· − x0)`.
pub fn verify_mollified_poisson(
    x0: Point,
    rho0: f64,
    epsilon: f64,
    m: f64,
    mesh: &Mesh,
) -> Result<Vec<EstimateReport>> {
    let (center, r) = match mesh.domain().kind {
        DomainKind::Disk { center, radius } => (center, radius),
        _ => return Err(Error::Hypothesis("mollified check requires a disk domain".into())),
    };
    if !(epsilon > 0.0 && epsilon < rho0 && rho0 < r) {
        return Err(Error::Hypothesis(format!("need 0 < eps < rho0 < R, got {epsilon}, {rho0}, {r}")));
    }
    if dist(x0, center) + rho0 > r {
        return Err(Error::Hypothesis("ball B(x0, rho0) leaves the disk".into()));
    }
    if !(m > 0.0 && m < 4.0 * PI) {
        return Err(Error::Hypothesis(format!("m = {m} must lie in (0, 4pi)")));
    }
    let a = assemble_stiffness(mesh);
    let b = assemble_mollified_load(mesh, x0, epsilon)?;
    let y = solve_spd(&a, &b, mesh.boundary(), 1e-12)?;
    let rel = 1e-6;
    let q = m / (2.0 * PI);

    let outside = mesh
        .vertices()
        .iter()
        .zip(&y)
        .filter(|(x, _)| dist(**x, x0) > rho0)
        .map(|(_, v)| (m * v).exp())
        .fold(0.0f64, f64::max);
    let bound_pw = (2.0 * r / (rho0 - epsilon)).powf(q);
    let pointwise = EstimateReport::new("mollified_pointwise", outside, bound_pw, bound_pw * (1.0 + rel));

    let inside = |x: Point| dist(x, x0) < rho0;
    let levels = near_points_levels(mesh, std::slice::from_ref(&x0), rho0);
    let lhs = integrate_nodal(mesh, &y, |v| (m * v).exp(), inside, &levels);
    // quadrature estimate from one more subdivision level
    let finer = integrate_nodal(mesh, &y, |v| (m * v).exp(), inside, |t| levels(t) + 1);
    let disc_est = (finer - lhs).abs();
    let s = epsilon + rho0;
    let bound_ball = 2.0 * PI * s * s / (2.0 - q) * (2.0 * r / s).powf(q);
    let in_ball = EstimateReport::new("mollified_in_ball", lhs, bound_ball, bound_ball * (1.0 + rel) + disc_est)
        .param("discretization_estimate", disc_est);

    let tag = |rep: EstimateReport| {
        rep.param("R", r)
            .param("x0_x", x0[0])
            .param("x0_y", x0[1])
            .param("rho0", rho0)
            .param("epsilon", epsilon)
            .param("m", m)
            .param("h", mesh.h())
    };
    Ok(vec![tag(pointwise), tag(in_ball)])
}

/// Separation radii and weights for a random configuration of `count` points
/// in the domain, used by randomized batteries.
pub fn random_configuration(
    rng: &mut ChaCha8Rng,
    domain: &crate::mesh::Domain,
    count: usize,
    max_weight: f64,
) -> Result<(SourcePoints, Control)> {
    let mut pts: Vec<Point> = Vec::with_capacity(count);
    let (lo, hi) = match domain.kind {
        DomainKind::Rectangle { min, max } => (min, max),
        DomainKind::Disk { center, radius } => {
            ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius])
        }
    };
    while pts.len() < count {
        let x = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        let inner = domain.boundary_distance(x) > 0.05 * domain.half_diameter();
        if domain.contains_strictly(x) && inner && pts.iter().all(|&p| dist(p, x) > 0.1 * domain.half_diameter()) {
            pts.push(x);
        }
    }
    let w = (0..count).map(|_| max_weight * (1.0 - rng.gen::<f64>())).collect();
    Ok((compute_separation_radii(&pts, domain)?, Control::new(w)?))
}

/// Instance for the linear (`g = 0`) problem, used by the Green-function check.
pub fn linear_instance(domain: crate::mesh::Domain, points: SourcePoints) -> Result<ProblemInstance> {
    let k = points.len();
    let bounds = BoundsPair::new(vec![0.0; k], vec![1.0; k])?;
    Ok(ProblemInstance::new(domain, points, bounds, 0.0, ScalarField::Zero, Target::Field(ScalarField::Zero))?
        .with_nonlinearity(Nonlinearity::Linear))
}
