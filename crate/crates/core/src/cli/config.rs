//! JSON run configuration.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fem::ScalarField;
use crate::mesh::{build_mesh, Domain, Mesh, Point};
use crate::objective::default_rho_grid;
use crate::optimizer::DEFAULT_TOL_ACTIVE;
use crate::pde::{Nonlinearity, ProblemInstance, SolverOptions, Target};
use crate::sequences::{compute_separation_radii, BoundsPair, Control};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum DomainConfig {
    Rectangle {
        min: Point,
        max: Point,
    },
    Disk {
        #[serde(default)]
        center: Point,
        radius: f64,
    },
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig::Rectangle { min: [0.0, 0.0], max: [1.0, 1.0] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum FieldConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Gaussian {
        center: Point,
        width: f64,
        amplitude: f64,
    },
    /// Manufactured target: the discrete state of `control`.
    StateOf {
        control: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, Default, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityConfig {
    #[default]
    Exponential,
    None,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub refine_levels: usize,
}

fn default_resolution() -> usize {
    32
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { resolution: default_resolution(), refine_levels: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub linear_tol: f64,
    pub max_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self { newton_tol: d.newton_tol, linear_tol: d.linear_tol, max_newton: d.max_newton }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    /// Starting control; defaults to the projection of zero.
    pub initial: Option<Vec<f64>>,
    pub max_iters: usize,
    pub tol: f64,
    pub tol_active: f64,
    /// Gradient tolerance for critical-cone membership; defaults to `tol`.
    pub tol_grad: Option<f64>,
    pub directions: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            initial: None,
            max_iters: 200,
            tol: 1e-6,
            tol_active: DEFAULT_TOL_ACTIVE,
            tol_grad: None,
            directions: 64,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaylorConfig {
    pub direction: Vec<f64>,
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "check", rename_all = "snake_case")]
pub enum VerifyCheck {
    Scalar {
        #[serde(default = "default_samples")]
        samples: usize,
    },
    PoissonExponential {
        omega: Vec<f64>,
        alpha: f64,
    },
    SemilinearExponential {
        omega: Vec<f64>,
        alpha: f64,
    },
    Lipschitz {
        #[serde(default = "default_trials")]
        trials: usize,
    },
    MollifiedPoisson {
        x0: Point,
        rho0: f64,
        epsilon: f64,
        m: f64,
    },
}

fn default_samples() -> usize {
    10_000
}

fn default_trials() -> usize {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeRing {
    pub radius: f64,
    #[serde(default = "default_probe_count")]
    pub count: usize,
}

fn default_probe_count() -> usize {
    64
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub points: Vec<Point>,
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub nu: f64,
    #[serde(default)]
    pub f0: FieldConfig,
    #[serde(default = "default_p")]
    pub f0_p: f64,
    #[serde(default)]
    pub y_d: FieldConfig,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Control for `solve` and the base point for `taylor`.
    pub control: Option<Vec<f64>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    pub taylor: Option<TaylorConfig>,
    #[serde(default)]
    pub verify: Vec<VerifyCheck>,
    pub probe_ring: Option<ProbeRing>,
}

fn default_p() -> f64 {
    2.0
}

fn default_seed() -> u64 {
    42
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("solver.newton_tol", self.solver.newton_tol)?;
        positive("solver.linear_tol", self.solver.linear_tol)?;
        positive("optimize.tol", self.optimize.tol)?;
        positive("optimize.tol_active", self.optimize.tol_active)?;
        if let Some(t) = self.optimize.tol_grad {
            positive("optimize.tol_grad", t)?;
        }
        if let Some(t) = &self.taylor {
            for (i, &r) in t.rho_grid.iter().enumerate() {
                positive(&format!("taylor.rho_grid[{i}]"), r)?;
            }
        }
        if self.mesh.resolution == 0 {
            return Err(invalid("mesh.resolution must be at least 1"));
        }
        if self.solver.max_newton == 0 {
            return Err(invalid("solver.max_newton must be at least 1"));
        }
        if !(self.nu >= 0.0) {
            return Err(invalid(format!("nu must be nonnegative, got {}", self.nu)));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        match self.domain {
            DomainConfig::Rectangle { min, max } => Domain::rectangle(min, max),
            DomainConfig::Disk { center, radius } => Domain::disk(center, radius),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            newton_tol: self.solver.newton_tol,
            linear_tol: self.solver.linear_tol,
            max_newton: self.solver.max_newton,
        }
    }

    fn field(&self, name: &str, f: &FieldConfig) -> Result<ScalarField> {
        Ok(match f {
            FieldConfig::Zero => ScalarField::Zero,
            FieldConfig::Constant { value } => ScalarField::Constant(*value),
            FieldConfig::Gaussian { center, width, amplitude } => {
                if !(*width > 0.0) {
                    return Err(invalid(format!("{name}.width must be positive")));
                }
                ScalarField::Gaussian { center: *center, width: *width, amplitude: *amplitude }
            }
            FieldConfig::StateOf { .. } => {
                return Err(invalid(format!("{name}: state_of is only valid for y_d")));
            }
        })
    }

    pub fn f0(&self) -> Result<ScalarField> {
        self.field("f0", &self.f0)
    }

    pub fn instance(&self) -> Result<ProblemInstance> {
        let domain = self.domain()?;
        if self.points.is_empty() {
            return Err(invalid("points: at least one source point is required"));
        }
        let sources = compute_separation_radii(&self.points, &domain)?;
        let b = self.bounds.as_ref().ok_or_else(|| invalid("bounds: required for this command"))?;
        if b.lower.len() != self.points.len() || b.upper.len() != self.points.len() {
            return Err(invalid(format!(
                "bounds: lower/upper must have {} entries (one per point)",
                self.points.len()
            )));
        }
        let bounds = BoundsPair::new(b.lower.clone(), b.upper.clone())?;
        let y_d = match &self.y_d {
            FieldConfig::StateOf { control } => {
                if control.len() != self.points.len() {
                    return Err(invalid("y_d.control must have one entry per point"));
                }
                Target::StateOf(Control::new(control.clone())?)
            }
            f => Target::Field(self.field("y_d", f)?),
        };
        let mut inst = ProblemInstance::new(domain, sources, bounds, self.nu, self.f0()?, y_d)?;
        inst.f0_p = self.f0_p;
        inst.nonlinearity = match self.nonlinearity {
            NonlinearityConfig::Exponential => Nonlinearity::Exponential,
            NonlinearityConfig::None => Nonlinearity::Linear,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Mesh graded toward the instance's source points.
    pub fn mesh_for(&self, inst: &ProblemInstance) -> Result<Mesh> {
        build_mesh(&inst.domain, self.mesh.resolution, Some(&inst.sources), self.mesh.refine_levels)
    }

    pub fn control_or_zero(&self, k: usize, name: &str, v: &Option<Vec<f64>>) -> Result<Control> {
        match v {
            None => Ok(Control::zeros(k)),
            Some(v) if v.len() == k => Control::new(v.clone()),
            Some(v) => Err(invalid(format!("{name} has {} entries, expected {k}", v.len()))),
        }
    }
}
