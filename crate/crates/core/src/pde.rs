//! Discrete state, linearized and adjoint equations.
//!
//! The state equation `-Δy + (e^y - 1) = f0 + Σ u_i δ_{x_i}` is discretized as
//!
//! ```text
//! F(Y) = A Y + M_L (e^Y - 1) - b(f0) - d(u) = 0
//! ```
//!
//! with P1 stiffness `A`, lumped mass `M_L` and point load `d`, and solved by
//! damped Newton. Both derived equations use the Newton Jacobian
//! `K = A + M_L diag(e^Y)`, so the discrete adjoint is exact for the discrete
//! functional.

use crate::error::{Error, Result};
use crate::fem::{
    self, assemble_load, assemble_mass, assemble_stiffness, dirac_load_at, locate_sources, norm2, solve_spd,
    FeFunction, ScalarField, SparseOperator,
};
use crate::mesh::{Domain, Mesh, PointLocation};
use crate::sequences::{BoundsPair, Control, SourcePoints, FOUR_PI_LIMIT};

/// Which nonlinearity `g` enters the state equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    /// `g(t) = e^t - 1`
    Exponential,
    /// `g = 0`: the linear Poisson problem, used for verification.
    Linear,
}

/// Tracking target `y_d`.
#[derive(Debug, Clone)]
pub enum Target {
    Field(ScalarField),
    /// The discrete state of the given control, for manufactured solutions.
    StateOf(Control),
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub domain: Domain,
    pub sources: SourcePoints,
    pub bounds: BoundsPair,
    pub nu: f64,
    pub f0: ScalarField,
    /// Integrability exponent declared for `f0`.
    pub f0_p: f64,
    pub y_d: Target,
    pub nonlinearity: Nonlinearity,
}

impl ProblemInstance {
    pub fn new(
        domain: Domain,
        sources: SourcePoints,
        bounds: BoundsPair,
        nu: f64,
        f0: ScalarField,
        y_d: Target,
    ) -> Result<Self> {
        let inst = Self { domain, sources, bounds, nu, f0, f0_p: 2.0, y_d, nonlinearity: Nonlinearity::Exponential };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_nonlinearity(mut self, g: Nonlinearity) -> Self {
        self.nonlinearity = g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(Error::InvalidInput(format!("nu = {} must be nonnegative", self.nu)));
        }
        if !(self.f0_p > 1.0) {
            return Err(Error::InvalidInput(format!("f0 exponent p = {} must exceed 1", self.f0_p)));
        }
        if self.bounds.len() != self.sources.len() {
            return Err(Error::InvalidInput(format!(
                "{} bounds for {} source points",
                self.bounds.len(),
                self.sources.len()
            )));
        }
        for (i, &x) in self.sources.points().iter().enumerate() {
            if !self.domain.contains_strictly(x) {
                return Err(Error::SourceNotInterior { index: i, x: x[0], y: x[1] });
            }
        }
        Ok(())
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Newton stops once `‖F‖ <= newton_tol (1 + ‖b + d‖)`.
    pub newton_tol: f64,
    /// Relative residual for every CG solve.
    pub linear_tol: f64,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { newton_tol: 1e-10, linear_tol: 1e-12, max_newton: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStep {
    pub iteration: usize,
    pub residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct StateSolution<'m> {
    pub y: FeFunction<'m>,
    pub converged: bool,
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub history: Vec<NewtonStep>,
}

impl StateSolution<'_> {
    pub fn values(&self) -> &[f64] {
        self.y.values()
    }
}

/// Rejects controls whose largest entry reaches `4π`.
pub fn check_solvable(u: &Control) -> Result<()> {
    for (i, &v) in u.values().iter().enumerate() {
        if v > FOUR_PI_LIMIT {
            return Err(Error::IllPosed { index: i, value: v });
        }
    }
    Ok(())
}

/// Operators and loads for one instance on one mesh.
pub struct Discretization<'a> {
    mesh: &'a Mesh,
    instance: &'a ProblemInstance,
    options: SolverOptions,
    stiffness: SparseOperator,
    mass: SparseOperator,
    lumped: Vec<f64>,
    f0_load: Vec<f64>,
    locations: Vec<PointLocation>,
    target: Vec<f64>,
}

impl<'a> Discretization<'a> {
    pub fn new(instance: &'a ProblemInstance, mesh: &'a Mesh, options: SolverOptions) -> Result<Self> {
        instance.validate()?;
        let f0 = instance.f0.clone();
        let f0_load = if f0.is_zero() { vec![0.0; mesh.num_vertices()] } else { assemble_load(mesh, |x| f0.eval(x)) };
        let mut disc = Self {
            mesh,
            instance,
            options,
            stiffness: assemble_stiffness(mesh),
            mass: assemble_mass(mesh),
            lumped: fem::lumped_masses(mesh),
            f0_load,
            locations: locate_sources(mesh, &instance.sources)?,
            target: vec![0.0; mesh.num_vertices()],
        };
        disc.target = match &instance.y_d {
            Target::Field(f) => mesh.vertices().iter().map(|&x| f.eval(x)).collect(),
            Target::StateOf(u) => disc.solve_state(u)?.y.into_values(),
        };
        Ok(disc)
    }

    pub fn mesh(&self) -> &'a Mesh {
        self.mesh
    }

    pub fn instance(&self) -> &'a ProblemInstance {
        self.instance
    }

    pub fn options(&self) -> SolverOptions {
        self.options
    }

    pub fn set_options(&mut self, options: SolverOptions) {
        self.options = options;
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseOperator {
        &self.mass
    }

    pub fn lumped_masses(&self) -> &[f64] {
        &self.lumped
    }

    pub fn source_locations(&self) -> &[PointLocation] {
        &self.locations
    }

    /// Nodal values of `y_d`.
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn set_target(&mut self, target: Vec<f64>) {
        assert_eq!(target.len(), self.mesh.num_vertices());
        self.target = target;
    }

    pub fn dirac_load(&self, u: &Control) -> Vec<f64> {
        dirac_load_at(self.mesh, &self.locations, u)
    }

    fn mask(&self, v: &mut [f64]) {
        for (vi, &b) in v.iter_mut().zip(self.mesh.boundary()) {
            if b {
                *vi = 0.0;
            }
        }
    }

    fn residual(&self, y: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut r = self.stiffness.matvec(y);
        for j in 0..r.len() {
            if self.instance.nonlinearity == Nonlinearity::Exponential {
                r[j] += self.lumped[j] * y[j].exp_m1();
            }
            r[j] -= rhs[j];
        }
        self.mask(&mut r);
        r
    }

    /// Diagonal `M_L g'(Y)` of the linearized operator.
    pub fn reaction_weights(&self, y: &[f64]) -> Vec<f64> {
        match self.instance.nonlinearity {
            Nonlinearity::Exponential => self.lumped.iter().zip(y).map(|(m, y)| m * y.exp()).collect(),
            Nonlinearity::Linear => vec![0.0; y.len()],
        }
    }

    pub fn jacobian(&self, y: &[f64]) -> SparseOperator {
        self.stiffness.plus_diagonal(&self.reaction_weights(y))
    }

    pub fn solve_state(&self, u: &Control) -> Result<StateSolution<'a>> {
        self.solve_state_tol(u, self.options.newton_tol)
    }

    /// Solves an additional smooth source `extra_load` together with `f0`.
    pub fn solve_state_tol(&self, u: &Control, tol: f64) -> Result<StateSolution<'a>> {
        self.solve_state_with_load(u, None, tol)
    }

    pub fn solve_state_with_load(
        &self,
        u: &Control,
        extra_load: Option<&[f64]>,
        tol: f64,
    ) -> Result<StateSolution<'a>> {
        check_solvable(u)?;
        let lin_tol = self.options.linear_tol;
        let mut rhs = self.dirac_load(u);
        for (r, f) in rhs.iter_mut().zip(&self.f0_load) {
            *r += f;
        }
        if let Some(extra) = extra_load {
            for (r, e) in rhs.iter_mut().zip(extra) {
                *r += e;
            }
        }
        self.mask(&mut rhs);
        let scale = 1.0 + norm2(&rhs);
        let boundary = self.mesh.boundary();
        let mut y = match self.instance.nonlinearity {
            Nonlinearity::Exponential => {
                let k0 = self.stiffness.plus_diagonal(&self.lumped);
                solve_spd(&k0, &rhs, boundary, lin_tol)?
            }
            Nonlinearity::Linear => solve_spd(&self.stiffness, &rhs, boundary, lin_tol)?,
        };
        let mut f = self.residual(&y, &rhs);
        let mut r = norm2(&f);
        let mut history = vec![NewtonStep { iteration: 0, residual: r, step: 0.0 }];
        for it in 1..=self.options.max_newton {
            if r <= tol * scale {
                return Ok(StateSolution {
                    y: FeFunction::new(self.mesh, y)?,
                    converged: true,
                    newton_iterations: it - 1,
                    final_residual: r,
                    history,
                });
            }
            let k = self.jacobian(&y);
            let minus_f: Vec<f64> = f.iter().map(|v| -v).collect();
            let delta = solve_spd(&k, &minus_f, boundary, lin_tol)?;
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = y.iter().zip(&delta).map(|(y, d)| y + t * d).collect();
                if trial.iter().all(|v| v.is_finite() && *v < 700.0) {
                    let ft = self.residual(&trial, &rhs);
                    let rt = norm2(&ft);
                    if rt <= (1.0 - 1e-4 * t) * r {
                        accepted = Some((trial, ft, rt));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((trial, ft, rt)) => {
                    y = trial;
                    f = ft;
                    r = rt;
                    history.push(NewtonStep { iteration: it, residual: r, step: t });
                }
                None => {
                    return Err(Error::StateSolveFailed { iterations: it, residual: r });
                }
            }
        }
        if r <= tol * scale {
            return Ok(StateSolution {
                y: FeFunction::new(self.mesh, y)?,
                converged: true,
                newton_iterations: self.options.max_newton,
                final_residual: r,
                history,
            });
        }
        Err(Error::StateSolveFailed { iterations: self.options.max_newton, residual: r })
    }

    /// `z = DS(u) h`: `(A + M_L diag(e^y)) z = d(h)`.
    pub fn solve_linearized(&self, state: &StateSolution<'_>, h: &Control) -> Result<FeFunction<'a>> {
        let k = self.jacobian(state.values());
        let rhs = self.dirac_load(h);
        let z = solve_spd(&k, &rhs, self.mesh.boundary(), self.options.linear_tol)?;
        FeFunction::new(self.mesh, z)
    }

    /// Adjoint `φ`: `(A + M_L diag(e^y)) φ = M (y - y_d)`.
    pub fn solve_adjoint(&self, state: &StateSolution<'_>) -> Result<FeFunction<'a>> {
        let e: Vec<f64> = state.values().iter().zip(&self.target).map(|(y, yd)| y - yd).collect();
        let rhs = self.mass.matvec(&e);
        let k = self.jacobian(state.values());
        let phi = solve_spd(&k, &rhs, self.mesh.boundary(), self.options.linear_tol)?;
        FeFunction::new(self.mesh, phi)
    }

    /// P1 values at the instance's source points.
    pub fn values_at_sources(&self, f: &FeFunction<'_>) -> Vec<f64> {
        self.locations.iter().map(|loc| f.at_location(loc)).collect()
    }

    /// `∫ g(e^y)` with the lumped rule that discretizes the nonlinear term.
    pub fn lumped_integral(&self, values: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        self.lumped.iter().zip(values).map(|(m, &v)| m * g(v)).sum()
    }
}

pub fn solve_state<'m>(instance: &ProblemInstance, u: &Control, mesh: &'m Mesh, tol: f64) -> Result<StateSolution<'m>> {
    let options = SolverOptions { newton_tol: tol, ..SolverOptions::default() };
    let disc = Discretization::new(instance, mesh, options)?;
    let s = disc.solve_state(u)?;
    Ok(StateSolution {
        y: FeFunction::new(mesh, s.y.into_values())?,
        converged: s.converged,
        newton_iterations: s.newton_iterations,
        final_residual: s.final_residual,
        history: s.history,
    })
}

pub fn evaluate_at_points(f: &FeFunction<'_>, points: &SourcePoints) -> Result<Vec<f64>> {
    let locs = locate_sources(f.mesh(), points)?;
    Ok(locs.iter().map(|l| f.at_location(l)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, dist};
    use crate::sequences::compute_separation_radii;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn two_point_instance(y_d: Target) -> ProblemInstance {
        let domain = Domain::unit_square();
        let sources = compute_separation_radii(&[[0.3, 0.5], [0.7, 0.5]], &domain).unwrap();
        let bounds = BoundsPair::new(vec![-2.0, -2.0], vec![6.0, 6.0]).unwrap();
        let f0 = ScalarField::Gaussian { center: [0.5, 0.3], width: 0.3, amplitude: 2.0 };
        ProblemInstance::new(domain, sources, bounds, 0.1, f0, y_d).unwrap()
    }

    fn c(v: &[f64]) -> Control {
        Control::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_state() {
        let domain = Domain::unit_square();
        let sources = compute_separation_radii(&[[0.4, 0.4]], &domain).unwrap();
        let bounds = BoundsPair::new(vec![0.0], vec![1.0]).unwrap();
        let inst =
            ProblemInstance::new(domain, sources, bounds, 0.0, ScalarField::Zero, Target::Field(ScalarField::Zero))
                .unwrap();
        let mesh = build_mesh(&inst.domain, 8, None, 0).unwrap();
        let s = solve_state(&inst, &Control::zeros(1), &mesh, 1e-10).unwrap();
        assert!(s.y.values().iter().all(|&v| v == 0.0));
        assert_eq!(s.newton_iterations, 0);
    }

    #[test]
    fn disk_green_function_linear_mode() {
        let domain = Domain::unit_disk();
        let sources = compute_separation_radii(&[[0.0, 0.0]], &domain).unwrap();
        let bounds = BoundsPair::new(vec![0.0], vec![1.0]).unwrap();
        let inst =
            ProblemInstance::new(domain, sources, bounds, 0.0, ScalarField::Zero, Target::Field(ScalarField::Zero))
                .unwrap()
                .with_nonlinearity(Nonlinearity::Linear);
        let mesh = build_mesh(&inst.domain, 32, None, 0).unwrap();
        let s = solve_state(&inst, &c(&[1.0]), &mesh, 1e-10).unwrap();
        let exact = (2.0f64).ln() / (2.0 * PI);
        assert!((exact - 0.110318).abs() < 1e-6);
        for k in 0..16 {
            let th = k as f64 * PI / 8.0;
            let v = s.y.evaluate([0.5 * th.cos(), 0.5 * th.sin()]).unwrap();
            assert!((v - exact).abs() < 5e-3);
        }
    }

    #[test]
    fn ill_posed_controls_rejected() {
        let inst = two_point_instance(Target::Field(ScalarField::Zero));
        let mesh = build_mesh(&inst.domain, 4, None, 0).unwrap();
        let disc = Discretization::new(&inst, &mesh, SolverOptions::default()).unwrap();
        assert!(matches!(disc.solve_state(&c(&[1.0, 4.0 * PI])), Err(Error::IllPosed { index: 1, .. })));
    }

    #[test]
    fn newton_residual_and_history() {
        let inst = two_point_instance(Target::Field(ScalarField::Zero));
        let mesh = build_mesh(&inst.domain, 16, None, 0).unwrap();
        let disc = Discretization::new(&inst, &mesh, SolverOptions::default()).unwrap();
        let s = disc.solve_state(&c(&[5.0, 11.0])).unwrap();
        assert!(s.converged);
        let rhs_norm = 1.0 + 16.0; // generous bound on 1 + ‖b + d‖
        assert!(s.final_residual <= 1e-10 * rhs_norm);
        assert!(s.history.windows(2).all(|w| w[1].residual < w[0].residual));
        assert!(s.values().iter().all(|v| v.exp().is_finite()));
    }

    #[test]
    fn comparison_principle_random_pairs() {
        let inst = two_point_instance(Target::Field(ScalarField::Zero));
        let mesh = build_mesh(&inst.domain, 16, None, 0).unwrap();
        let disc = Discretization::new(&inst, &mesh, SolverOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let u = c(&[rng.gen_range(-2.0..4.0), rng.gen_range(-2.0..4.0)]);
            let v = u.add_scaled(1.0, &c(&[rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)]));
            let yu = disc.solve_state(&u).unwrap();
            let yv = disc.solve_state(&v).unwrap();
            for (a, b) in yu.values().iter().zip(yv.values()) {
                assert!(*a <= b + 1e-8);
            }
        }
    }

    #[test]
    fn linearized_is_linear_and_vanishes_at_zero() {
        let inst = two_point_instance(Target::Field(ScalarField::Zero));
        let mesh = build_mesh(&inst.domain, 12, None, 0).unwrap();
        let disc = Discretization::new(&inst, &mesh, SolverOptions::default()).unwrap();
        let s = disc.solve_state(&c(&[2.0, 1.0])).unwrap();
        let z0 = disc.solve_linearized(&s, &Control::zeros(2)).unwrap();
        assert!(z0.values().iter().all(|&v| v == 0.0));
        let h1 = c(&[1.0, -0.5]);
        let h2 = c(&[0.3, 2.0]);
        let (a, b) = (1.7, -0.6);
        let z1 = disc.solve_linearized(&s, &h1).unwrap();
        let z2 = disc.solve_linearized(&s, &h2).unwrap();
        let z12 = disc.solve_linearized(&s, &h1.scaled(a).add_scaled(b, &h2)).unwrap();
        for j in 0..mesh.num_vertices() {
            let comb = a * z1.values()[j] + b * z2.values()[j];
            assert!((z12.values()[j] - comb).abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_zero_sign_and_duality() {
        let mut inst = two_point_instance(Target::StateOf(c(&[2.0, 1.0])));
        let mesh = build_mesh(&inst.domain, 12, None, 0).unwrap();
        let disc = Discretization::new(&inst, &mesh, SolverOptions::default()).unwrap();
        let s = disc.solve_state(&c(&[2.0, 1.0])).unwrap();
        let phi = disc.solve_adjoint(&s).unwrap();
        assert!(phi.max_abs() < 1e-12);

        // nonnegative tracking error gives nonnegative adjoint
        inst.y_d = Target::Field(ScalarField::Constant(-1.0));
        let disc = Discretization::new(&inst, &mesh, SolverOptions::default()).unwrap();
        let s = disc.solve_state(&c(&[2.0, 1.0])).unwrap();
        assert!(s.values().iter().zip(disc.target()).all(|(y, yd)| y - yd >= 0.0));
        let phi = disc.solve_adjoint(&s).unwrap();
        assert!(phi.values().iter().all(|&v| v >= -1e-10));

        let h = c(&[0.7, -1.3]);
        let z = disc.solve_linearized(&s, &h).unwrap();
        let lhs = fem::dot(&disc.dirac_load(&h), phi.values());
        let e: Vec<f64> = s.values().iter().zip(disc.target()).map(|(y, yd)| y - yd).collect();
        let rhs = disc.mass().bilinear(&e, z.values());
        assert!((lhs - rhs).abs() < 1e-8);
    }

    #[test]
    fn point_values_match_barycentric_oracle() {
        let inst = two_point_instance(Target::Field(ScalarField::Zero));
        let mesh = build_mesh(&inst.domain, 10, None, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vals: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = FeFunction::new(&mesh, vals.clone()).unwrap();
        let got = evaluate_at_points(&f, &inst.sources).unwrap();
        for (i, &x) in inst.sources.points().iter().enumerate() {
            // brute-force: any triangle with nonnegative barycentrics
            let t = (0..mesh.num_triangles()).find(|&t| mesh.barycentric(t, x).iter().all(|&l| l >= -1e-12)).unwrap();
            let l = mesh.barycentric(t, x);
            let tri = mesh.triangles()[t];
            let expect: f64 = (0..3).map(|k| l[k] * vals[tri[k]]).sum();
            assert!((got[i] - expect).abs() < 1e-12);
        }
        // linear field reproduced exactly
        let lin = FeFunction::interpolate(&mesh, |x| 3.0 * x[0] - x[1]);
        let got = evaluate_at_points(&lin, &inst.sources).unwrap();
        for (i, &x) in inst.sources.points().iter().enumerate() {
            assert!((got[i] - (3.0 * x[0] - x[1])).abs() < 1e-12);
        }
        // vertex
        let v = mesh.vertices()[13];
        let sp = SourcePoints::with_radii(vec![v], vec![0.1]).unwrap();
        assert!((evaluate_at_points(&f, &sp).unwrap()[0] - vals[13]).abs() < 1e-12);
        let _ = dist(v, v);
    }
}
