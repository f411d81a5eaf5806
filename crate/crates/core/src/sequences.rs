//! Finite-support sequences: controls, box bounds and source points.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::{dist, Domain, Point};

/// Largest admissible upper bound. Bounds must stay strictly below `4π`; the
/// comparison carries a `1e-12` guard against round-off.
pub const FOUR_PI_LIMIT: f64 = 4.0 * PI - 1e-12;

/// A real sequence with finite support `K`; entries past `K` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Control(Vec<f64>);

impl Control {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("control support must be at least 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("control entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k.max(1)])
    }

    pub fn unit(k: usize, i: usize) -> Self {
        let mut v = vec![0.0; k.max(1)];
        v[i] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Entry `i`, zero beyond the support.
    pub fn get(&self, i: usize) -> f64 {
        self.0.get(i).copied().unwrap_or(0.0)
    }

    pub fn l1_norm(&self) -> f64 {
        l1_norm(self)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn positive_part(&self) -> Self {
        Self(self.0.iter().map(|v| v.max(0.0)).collect())
    }

    /// `self + s * other`, with supports padded to the longer one.
    pub fn add_scaled(&self, s: f64, other: &Control) -> Self {
        let k = self.len().max(other.len());
        Self((0..k).map(|i| self.get(i) + s * other.get(i)).collect())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| s * v).collect())
    }

    pub fn dot(&self, other: &Control) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Pads with zeros (or drops trailing entries) to support `k`.
    pub fn resized(&self, k: usize) -> Self {
        Self((0..k.max(1)).map(|i| self.get(i)).collect())
    }
}

impl From<Control> for Vec<f64> {
    fn from(c: Control) -> Self {
        c.0
    }
}

pub fn truncate(h: &Control, k: usize) -> Control {
    Control(h.0.iter().enumerate().map(|(i, &v)| if i < k { v } else { 0.0 }).collect())
}

pub fn l1_norm(h: &Control) -> f64 {
    h.0.iter().map(|v| v.abs()).sum()
}

/// Componentwise box `lower <= u <= upper` with `upper < 4π`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsPair {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundsPair {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidBounds {
                index: 0,
                reason: format!("lower has {} entries, upper has {}", lower.len(), upper.len()),
            });
        }
        for (i, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidBounds { index: i, reason: "bounds must be finite".into() });
            }
            if a > b {
                return Err(Error::InvalidBounds { index: i, reason: format!("lower {a} exceeds upper {b}") });
            }
            if b > FOUR_PI_LIMIT {
                return Err(Error::InvalidBounds { index: i, reason: format!("upper {b} is not below 4*pi") });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, u: &Control) -> bool {
        (0..self.len()).all(|i| self.lower[i] <= u.get(i) && u.get(i) <= self.upper[i])
    }

    pub fn upper_positive_part(&self) -> Control {
        Control(self.upper.iter().map(|b| b.max(0.0)).collect())
    }
}

pub fn project_box(u: &Control, bounds: &BoundsPair) -> Control {
    Control((0..bounds.len()).map(|i| u.get(i).clamp(bounds.lower[i], bounds.upper[i])).collect())
}

/// Source locations with their separation radii.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePoints {
    points: Vec<Point>,
    radii: Vec<f64>,
}

impl SourcePoints {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sources with explicitly given radii, e.g. for the estimate checks.
    pub fn with_radii(points: Vec<Point>, radii: Vec<f64>) -> Result<Self> {
        if points.len() != radii.len() {
            return Err(Error::InvalidInput("points and radii lengths differ".into()));
        }
        if let Some(i) = radii.iter().position(|&r| !(r > 0.0)) {
            return Err(Error::InvalidInput(format!("radius {i} must be positive")));
        }
        Ok(Self { points, radii })
    }
}

/// `rho_i = min(min_{j != i} |x_i - x_j| / 2, dist(x_i, boundary))`.
pub fn compute_separation_radii(points: &[Point], domain: &Domain) -> Result<SourcePoints> {
    if points.is_empty() {
        return Err(Error::InvalidInput("at least one source point is required".into()));
    }
    for (i, &x) in points.iter().enumerate() {
        if !domain.contains_strictly(x) {
            return Err(Error::SourceNotInterior { index: i, x: x[0], y: x[1] });
        }
    }
    let mut radii = Vec::with_capacity(points.len());
    for (i, &x) in points.iter().enumerate() {
        let mut rho = domain.boundary_distance(x);
        for (j, &other) in points.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = dist(x, other);
            if d == 0.0 {
                return Err(Error::CoincidentSources { first: i.min(j), second: i.max(j) });
            }
            rho = rho.min(0.5 * d);
        }
        radii.push(rho);
    }
    Ok(SourcePoints { points: points.to_vec(), radii })
}

/// `L(omega, rho) = sum_i omega_i^+ ln(1 / rho_i)`.
pub fn l_functional(omega: &Control, sources: &SourcePoints) -> Result<f64> {
    if sources.radii.len() < omega.len() {
        return Err(Error::InvalidInput(format!(
            "{} radii for a control of support {}",
            sources.radii.len(),
            omega.len()
        )));
    }
    let mut sum = 0.0;
    for (i, &w) in omega.values().iter().enumerate() {
        let rho = sources.radii[i];
        if !(rho > 0.0) {
            return Err(Error::InvalidInput(format!("radius {i} is not positive")));
        }
        sum += w.max(0.0) * (1.0 / rho).ln();
    }
    Ok(sum)
}
