//! P1 assembly on a [`Mesh`]: stiffness, mass, smooth loads, point loads and
//! mollified point loads.

pub mod quadrature;
pub mod sparse;

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::mesh::{dist, point_segment_distance, Mesh, Point, PointLocation};
use crate::sequences::{Control, SourcePoints};

pub use sparse::{dot, norm2, solve_spd, solve_spd_with_stats, CgStats, SparseOperator};

use quadrature::{Rule, MIDPOINT3, STRANG7};

/// Nodal P1 coefficients on a mesh.
#[derive(Debug, Clone)]
pub struct FeFunction<'m> {
    mesh: &'m Mesh,
    values: Vec<f64>,
}

impl<'m> FeFunction<'m> {
    pub fn new(mesh: &'m Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for {} vertices",
                values.len(),
                mesh.num_vertices()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("coefficient {i} is not finite")));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: &'m Mesh) -> Self {
        Self { mesh, values: vec![0.0; mesh.num_vertices()] }
    }

    pub fn interpolate(mesh: &'m Mesh, f: impl Fn(Point) -> f64) -> Self {
        Self { mesh, values: mesh.vertices().iter().map(|&x| f(x)).collect() }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at_location(&self, loc: &PointLocation) -> f64 {
        let tri = self.mesh.triangles()[loc.triangle];
        (0..3).map(|k| loc.barycentric[k] * self.values[tri[k]]).sum()
    }

    pub fn evaluate(&self, x: Point) -> Result<f64> {
        let loc = self.mesh.locate_from(x, 0)?;
        Ok(self.at_location(&loc))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A scalar field on the plane: data `f0` and targets `y_d`.
#[derive(Clone)]
pub enum ScalarField {
    Zero,
    Constant(f64),
    /// `amplitude * exp(-|x - center|^2 / width^2)`
    Gaussian {
        center: Point,
        width: f64,
        amplitude: f64,
    },
    Custom(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl ScalarField {
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant(c) => *c,
            ScalarField::Gaussian { center, width, amplitude } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                amplitude * (-r2 / (width * width)).exp()
            }
            ScalarField::Custom(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarField::Zero) || matches!(self, ScalarField::Constant(c) if *c == 0.0)
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Zero => write!(f, "Zero"),
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Gaussian { center, width, amplitude } => {
                write!(f, "Gaussian {{ center: {center:?}, width: {width}, amplitude: {amplitude} }}")
            }
            ScalarField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Gradients of the three barycentric coordinates of triangle `p`.
fn hat_gradients(p: &[Point; 3]) -> [[f64; 2]; 3] {
    let two_a = 2.0 * quadrature::area(p);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        g[k] = [(a[1] - b[1]) / two_a, (b[0] - a[0]) / two_a];
    }
    g
}

pub fn assemble_stiffness(mesh: &Mesh) -> SparseOperator {
    let mut trip = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.triangle_points(t);
        let area = quadrature::area(&p);
        let g = hat_gradients(&p);
        for i in 0..3 {
            for j in 0..3 {
                let v = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                trip.push((tri[i], tri[j], v));
            }
        }
    }
    SparseOperator::from_triplets(mesh.num_vertices(), trip)
}

/// Vertex patch areas divided by three; the entries sum to the mesh area.
pub fn lumped_masses(mesh: &Mesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(t) / 3.0;
        for &v in tri {
            m[v] += a;
        }
    }
    m
}

/// Mass matrix weighted by the nodal field `w`. The lumped form is diagonal
/// and meant for SPD solves, so it rejects negative weights.
pub fn assemble_weighted_mass(mesh: &Mesh, w: &[f64], lumped: bool) -> Result<SparseOperator> {
    if w.len() != mesh.num_vertices() {
        return Err(Error::InvalidInput("weight length differs from vertex count".into()));
    }
    if lumped {
        if let Some(i) = w.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidInput(format!("negative lumped mass weight {} at vertex {i}", w[i])));
        }
        let m = lumped_masses(mesh);
        let d: Vec<f64> = m.iter().zip(w).map(|(m, w)| m * w).collect();
        return Ok(SparseOperator::diagonal_matrix(&d));
    }
    let mut trip = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        let mut local = [[0.0; 3]; 3];
        for (l, &wq) in STRANG7.points.iter().zip(STRANG7.weights) {
            let wx: f64 = (0..3).map(|k| l[k] * w[tri[k]]).sum();
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += wq * area * wx * l[i] * l[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                trip.push((tri[i], tri[j], local[i][j]));
            }
        }
    }
    Ok(SparseOperator::from_triplets(mesh.num_vertices(), trip))
}

pub fn assemble_mass(mesh: &Mesh) -> SparseOperator {
    assemble_weighted_mass(mesh, &vec![1.0; mesh.num_vertices()], false).expect("unit weights have the right length")
}

fn assemble_load_with(mesh: &Mesh, rule: &Rule, f: impl Fn(Point) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.triangle_points(t);
        let area = quadrature::area(&p);
        for (l, &wq) in rule.points.iter().zip(rule.weights) {
            let fx = f(quadrature::map(&p, l));
            for k in 0..3 {
                b[tri[k]] += wq * area * fx * l[k];
            }
        }
    }
    b
}

/// `b_j = ∫ f φ_j` by the three-point midpoint rule.
pub fn assemble_load(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Vec<f64> {
    assemble_load_with(mesh, &MIDPOINT3, f)
}

pub fn locate_sources(mesh: &Mesh, points: &SourcePoints) -> Result<Vec<PointLocation>> {
    let mut out: Vec<PointLocation> = Vec::with_capacity(points.len());
    for &x in points.points() {
        let start = out.last().map_or(0, |l| l.triangle);
        out.push(mesh.locate_from(x, start)?);
    }
    Ok(out)
}

/// Point load `Σ_i u_i φ_j(x_i)` from precomputed source locations.
pub fn dirac_load_at(mesh: &Mesh, locations: &[PointLocation], weights: &Control) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_vertices()];
    for (i, loc) in locations.iter().enumerate() {
        let w = weights.get(i);
        if w == 0.0 {
            continue;
        }
        let tri = mesh.triangles()[loc.triangle];
        for k in 0..3 {
            b[tri[k]] += w * loc.barycentric[k];
        }
    }
    b
}

pub fn assemble_dirac_load(mesh: &Mesh, points: &SourcePoints, weights: &Control) -> Result<Vec<f64>> {
    let locations = locate_sources(mesh, points)?;
    Ok(dirac_load_at(mesh, &locations, weights))
}

/// Integral of the unnormalized bump `exp(-1 / (1 - |x|^2))` over the unit
/// disk, `π ∫_0^1 exp(-1/t) dt`, by composite Simpson.
fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| {
        let n = 20_000usize;
        let h = 1.0 / n as f64;
        let f = |t: f64| if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() };
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        std::f64::consts::PI * s * h / 3.0
    })
}

/// Normalization making the standard bump a unit-mass mollifier.
pub fn mollifier_constant() -> f64 {
    1.0 / bump_mass()
}

/// `φ_ε(x) = C ε^{-2} exp(-1 / (1 - |x/ε|^2))` on `|x| < ε`.
pub fn mollifier(x: Point, epsilon: f64) -> f64 {
    let s = (x[0] * x[0] + x[1] * x[1]) / (epsilon * epsilon);
    if s >= 1.0 {
        0.0
    } else {
        mollifier_constant() / (epsilon * epsilon) * (-1.0 / (1.0 - s)).exp()
    }
}

fn point_triangle_distance(mesh: &Mesh, t: usize, x: Point) -> f64 {
    let l = mesh.barycentric(t, x);
    if l.iter().all(|&v| v >= 0.0) {
        return 0.0;
    }
    let p = mesh.triangle_points(t);
    (0..3).map(|k| point_segment_distance(x, p[k], p[(k + 1) % 3])).fold(f64::INFINITY, f64::min)
}

fn triangle_diameter(p: &[Point; 3]) -> f64 {
    dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]))
}

/// Load vector of `φ_ε(· - x0)`. Triangles meeting the support are
/// subdivided until children are at most `ε/4` across (at least one level)
/// and integrated with the seven-point rule.
pub fn assemble_mollified_load(mesh: &Mesh, x0: Point, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("mollifier width must be positive".into()));
    }
    let domain = mesh.domain();
    let d = domain.boundary_distance(x0);
    if !domain.contains_strictly(x0) || d < epsilon {
        return Err(Error::SupportCrossesBoundary { distance: d, epsilon });
    }
    let mut b = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if point_triangle_distance(mesh, t, x0) >= epsilon {
            continue;
        }
        let p = mesh.triangle_points(t);
        let ratio = 4.0 * triangle_diameter(&p) / epsilon;
        let levels = (ratio.log2().ceil().max(1.0) as usize).min(8);
        let area = quadrature::area(&p) / 4f64.powi(levels as i32);
        for child in quadrature::subdivide(levels) {
            for (l, &wq) in STRANG7.points.iter().zip(STRANG7.weights) {
                let lam = quadrature::compose(&child, l);
                let x = quadrature::map(&p, &lam);
                let v = mollifier([x[0] - x0[0], x[1] - x0[1]], epsilon);
                if v == 0.0 {
                    continue;
                }
                for k in 0..3 {
                    b[tri[k]] += wq * area * v * lam[k];
                }
            }
        }
    }
    Ok(b)
}

/// `∫ g(u_h(x)) dx` over the part of the mesh where `region` holds, using
/// the seven-point rule on `4^levels(t)` children of each triangle `t`.
pub fn integrate_nodal(
    mesh: &Mesh,
    values: &[f64],
    g: impl Fn(f64) -> f64,
    region: impl Fn(Point) -> bool,
    levels: impl Fn(usize) -> usize,
) -> f64 {
    let mut cache: Vec<Vec<[[f64; 3]; 3]>> = Vec::new();
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.triangle_points(t);
        let lv = levels(t);
        while cache.len() <= lv {
            cache.push(quadrature::subdivide(cache.len()));
        }
        let area = quadrature::area(&p) / 4f64.powi(lv as i32);
        let mut local = 0.0;
        for child in &cache[lv] {
            for (l, &wq) in STRANG7.points.iter().zip(STRANG7.weights) {
                let lam = quadrature::compose(child, l);
                let x = quadrature::map(&p, &lam);
                if !region(x) {
                    continue;
                }
                let u: f64 = (0..3).map(|k| lam[k] * values[tri[k]]).sum();
                local += wq * g(u);
            }
        }
        total += area * local;
    }
    total
}

/// Triangles within `radius` of any of `points` get one subdivision level.
pub fn near_points_levels<'a>(mesh: &'a Mesh, points: &'a [Point], radius: f64) -> impl Fn(usize) -> usize + 'a {
    move |t| {
        let near = points.iter().any(|&x| point_triangle_distance(mesh, t, x) <= radius);
        usize::from(near)
    }
}

/// `‖f‖_{L^p}` by the seven-point rule.
pub fn lp_norm(mesh: &Mesh, f: impl Fn(Point) -> f64, p: f64) -> f64 {
    let mut s = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle_points(t);
        let area = quadrature::area(&tri);
        for (l, &wq) in STRANG7.points.iter().zip(STRANG7.weights) {
            s += wq * area * f(quadrature::map(&tri, l)).abs().powf(p);
        }
    }
    s.powf(1.0 / p)
}
