//! Conforming P1 triangulations of rectangles and disks.
//!
//! Rectangles are split into `n x n` cells, each cut along the same
//! diagonal, so every triangle is right-angled and the stiffness matrix is an
//! M-matrix. Disks use a hexagonal lattice bent onto concentric circles: ring
//! `k` sits at radius `R k / n` and carries `6k` vertices, with the center as
//! a vertex.
//!
//! Local refinement is red refinement of marked triangles followed by a
//! red/green closure that removes hanging nodes.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::sequences::SourcePoints;

pub type Point = [f64; 2];

/// Absolute slack used when deciding whether a point lies inside a triangle.
const LOCATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    Rectangle { min: Point, max: Point },
    Disk { center: Point, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub kind: DomainKind,
    pub name: String,
}

impl Domain {
    pub fn rectangle(min: Point, max: Point) -> Result<Self> {
        let w = max[0] - min[0];
        let h = max[1] - min[1];
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::DegenerateDomain(format!(
                "rectangle [{}, {}] x [{}, {}] has no area",
                min[0], max[0], min[1], max[1]
            )));
        }
        Ok(Self { kind: DomainKind::Rectangle { min, max }, name: "rectangle".to_string() })
    }

    pub fn unit_square() -> Self {
        Self { kind: DomainKind::Rectangle { min: [0.0, 0.0], max: [1.0, 1.0] }, name: "unit square".to_string() }
    }

    pub fn disk(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::DegenerateDomain(format!("disk radius {radius} must be positive")));
        }
        Ok(Self { kind: DomainKind::Disk { center, radius }, name: "disk".to_string() })
    }

    pub fn unit_disk() -> Self {
        Self { kind: DomainKind::Disk { center: [0.0, 0.0], radius: 1.0 }, name: "unit disk".to_string() }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn area(&self) -> f64 {
        match self.kind {
            DomainKind::Rectangle { min, max } => (max[0] - min[0]) * (max[1] - min[1]),
            DomainKind::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            DomainKind::Rectangle { min, max } => (max[0] - min[0]).hypot(max[1] - min[1]),
            DomainKind::Disk { radius, .. } => 2.0 * radius,
        }
    }

    /// `R = diam / 2`, the radius appearing in the exponential estimates.
    pub fn half_diameter(&self) -> f64 {
        0.5 * self.diameter()
    }

    pub fn contains_strictly(&self, x: Point) -> bool {
        match self.kind {
            DomainKind::Rectangle { min, max } => x[0] > min[0] && x[0] < max[0] && x[1] > min[1] && x[1] < max[1],
            DomainKind::Disk { center, radius } => dist(x, center) < radius,
        }
    }

    /// Euclidean distance from `x` to the boundary curve.
    pub fn boundary_distance(&self, x: Point) -> f64 {
        match self.kind {
            DomainKind::Rectangle { min, max } => {
                let corners = [min, [max[0], min[1]], max, [min[0], max[1]]];
                (0..4)
                    .map(|k| point_segment_distance(x, corners[k], corners[(k + 1) % 4]))
                    .fold(f64::INFINITY, f64::min)
            }
            DomainKind::Disk { center, radius } => (radius - dist(x, center)).abs(),
        }
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn point_segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist(x, [a[0] + t * d[0], a[1] + t * d[1]])
}

/// Twice the signed area of `(a, b, c)`.
fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLocation {
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    domain: Domain,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    h: f64,
    /// `neighbors[t][k]` is the triangle across the edge opposite local vertex `k`.
    neighbors: Vec<[Option<usize>; 3]>,
    vertex_triangles: Vec<Vec<usize>>,
}

impl Mesh {
    /// Builds a mesh from raw connectivity. Triangles must be counterclockwise.
    pub fn from_parts(domain: Domain, vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidInput(format!("triangle {t} references a missing vertex")));
            }
            let a = cross(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(a > 0.0) {
                return Err(Error::InvalidInput(format!("triangle {t} has nonpositive signed area {}", 0.5 * a)));
            }
        }
        let mut mesh = Self {
            domain,
            vertices,
            triangles,
            boundary: Vec::new(),
            h: 0.0,
            neighbors: Vec::new(),
            vertex_triangles: Vec::new(),
        };
        mesh.rebuild_topology();
        Ok(mesh)
    }

    fn rebuild_topology(&mut self) {
        let nv = self.vertices.len();
        let mut edge_owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        let mut neighbors = vec![[None; 3]; self.triangles.len()];
        let mut boundary = vec![false; nv];
        let mut h: f64 = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                h = h.max(dist(self.vertices[a], self.vertices[b]));
                let key = (a.min(b), a.max(b));
                if let Some(&(s, j)) = edge_owner.get(&key) {
                    neighbors[t][k] = Some(s);
                    neighbors[s][j] = Some(t);
                } else {
                    edge_owner.insert(key, (t, k));
                }
            }
        }
        for (t, nb) in neighbors.iter().enumerate() {
            for k in 0..3 {
                if nb[k].is_none() {
                    let tri = self.triangles[t];
                    boundary[tri[(k + 1) % 3]] = true;
                    boundary[tri[(k + 2) % 3]] = true;
                }
            }
        }
        let mut vertex_triangles = vec![Vec::new(); nv];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                vertex_triangles[v].push(t);
            }
        }
        self.neighbors = neighbors;
        self.boundary = boundary;
        self.vertex_triangles = vertex_triangles;
        self.h = h;
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary(&self) -> &[bool] {
        &self.boundary
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Longest edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn neighbors(&self) -> &[[Option<usize>; 3]] {
        &self.neighbors
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * cross(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn num_edges(&self) -> usize {
        let interior_halves: usize = self.neighbors.iter().map(|nb| nb.iter().filter(|n| n.is_some()).count()).sum();
        let boundary_edges: usize = self.neighbors.iter().map(|nb| nb.iter().filter(|n| n.is_none()).count()).sum();
        interior_halves / 2 + boundary_edges
    }

    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        let det = cross(a, b, c);
        let l0 = cross(x, b, c) / det;
        let l1 = cross(a, x, c) / det;
        [l0, l1, 1.0 - l0 - l1]
    }

    pub fn from_barycentric(&self, t: usize, l: [f64; 3]) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [l[0] * a[0] + l[1] * b[0] + l[2] * c[0], l[0] * a[1] + l[1] * b[1] + l[2] * c[1]]
    }

    fn contains(&self, t: usize, x: Point) -> Option<[f64; 3]> {
        let l = self.barycentric(t, x);
        if l.iter().all(|&v| v >= -LOCATE_TOL) {
            Some(l)
        } else {
            None
        }
    }

    /// Finds the triangle containing `x` by walking from `start`, falling back
    /// to a full scan. Points on shared edges go to the lowest-index triangle.
    pub fn locate_from(&self, x: Point, start: usize) -> Result<PointLocation> {
        let mut found = None;
        if start < self.num_triangles() {
            let mut t = start;
            for _ in 0..(4 * self.num_triangles()).max(16) {
                let l = self.barycentric(t, x);
                let (k, &min) = l.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("three coordinates");
                if min >= -LOCATE_TOL {
                    found = Some(t);
                    break;
                }
                match self.neighbors[t][k] {
                    Some(next) => t = next,
                    None => break,
                }
            }
        }
        let t = match found {
            Some(t) => t,
            None => (0..self.num_triangles())
                .find(|&t| self.contains(t, x).is_some())
                .ok_or(Error::PointNotLocated { x: x[0], y: x[1] })?,
        };
        // Any other triangle containing x shares a vertex with t.
        let mut best = t;
        for &v in &self.triangles[t] {
            for &s in &self.vertex_triangles[v] {
                if s < best && self.contains(s, x).is_some() {
                    best = s;
                }
            }
        }
        let mut l = self.barycentric(best, x).map(|v| v.max(0.0));
        let sum: f64 = l.iter().sum();
        for v in &mut l {
            *v /= sum;
        }
        Ok(PointLocation { triangle: best, barycentric: l })
    }
}

pub fn locate_point(mesh: &Mesh, x: Point) -> Result<PointLocation> {
    mesh.locate_from(x, 0)
}

/// Builds a conforming mesh of `domain`. When `refine_levels > 0`, level `l`
/// red-refines every triangle whose circumcenter lies within `rho_i / 2^l` of
/// a source point `x_i`, plus the triangles containing the sources.
pub fn build_mesh(
    domain: &Domain,
    resolution: usize,
    refine_points: Option<&SourcePoints>,
    refine_levels: usize,
) -> Result<Mesh> {
    if resolution == 0 {
        return Err(Error::InvalidInput("mesh resolution must be at least 1".into()));
    }
    let mut mesh = match domain.kind {
        DomainKind::Rectangle { min, max } => structured_rectangle(domain, min, max, resolution)?,
        DomainKind::Disk { center, radius } => ring_disk(domain, center, radius, resolution)?,
    };
    if let Some(points) = refine_points {
        for level in 1..=refine_levels {
            let scale = 0.5f64.powi(level as i32);
            let marked = mark_near_sources(&mesh, points, scale);
            if marked.iter().any(|&m| m) {
                mesh = refine_marked(&mesh, &marked)?;
            }
        }
    }
    Ok(mesh)
}

fn structured_rectangle(domain: &Domain, min: Point, max: Point, n: usize) -> Result<Mesh> {
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        let y = if j == n { max[1] } else { min[1] + (max[1] - min[1]) * j as f64 / n as f64 };
        for i in 0..=n {
            let x = if i == n { max[0] } else { min[0] + (max[0] - min[0]) * i as f64 / n as f64 };
            vertices.push([x, y]);
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh::from_parts(domain.clone(), vertices, triangles)
}

fn ring_disk(domain: &Domain, center: Point, radius: f64, n: usize) -> Result<Mesh> {
    use std::f64::consts::PI;
    // ring_start[k] is the index of the first vertex on ring k
    let mut ring_start = vec![0usize; n + 1];
    let mut vertices = vec![center];
    for k in 1..=n {
        ring_start[k] = vertices.len();
        let r = if k == n { radius } else { radius * k as f64 / n as f64 };
        let m = 6 * k;
        for j in 0..m {
            let theta = 2.0 * PI * j as f64 / m as f64;
            vertices.push([center[0] + r * theta.cos(), center[1] + r * theta.sin()]);
        }
    }
    let ring_vertex = |k: usize, j: usize| -> usize {
        if k == 0 {
            0
        } else {
            ring_start[k] + j % (6 * k)
        }
    };
    let mut triangles = Vec::with_capacity(6 * n * n);
    for k in 1..=n {
        for s in 0..6 {
            for q in 0..k {
                let o0 = ring_vertex(k, s * k + q);
                let o1 = ring_vertex(k, s * k + q + 1);
                let i0 = ring_vertex(k - 1, s * (k - 1) + q);
                triangles.push([o0, o1, i0]);
                if q + 1 < k {
                    let i1 = ring_vertex(k - 1, s * (k - 1) + q + 1);
                    triangles.push([i0, o1, i1]);
                }
            }
        }
    }
    Mesh::from_parts(domain.clone(), vertices, triangles)
}

fn circumcenter(p: [Point; 3]) -> Point {
    let [a, b, c] = p;
    let d = 2.0 * cross(a, b, c);
    let a2 = a[0] * a[0] + a[1] * a[1];
    let b2 = b[0] * b[0] + b[1] * b[1];
    let c2 = c[0] * c[0] + c[1] * c[1];
    [
        (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d,
        (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d,
    ]
}

fn mark_near_sources(mesh: &Mesh, points: &SourcePoints, scale: f64) -> Vec<bool> {
    let mut marked: Vec<bool> = (0..mesh.num_triangles())
        .map(|t| {
            let cc = circumcenter(mesh.triangle_points(t));
            points.points().iter().zip(points.radii()).any(|(&x, &rho)| dist(cc, x) <= rho * scale)
        })
        .collect();
    for &x in points.points() {
        for t in 0..mesh.num_triangles() {
            if mesh.contains(t, x).is_some() {
                marked[t] = true;
            }
        }
    }
    marked
}

/// One red/green refinement pass. Existing vertices keep their indices and
/// coordinates; new boundary midpoints on a disk are projected onto the circle.
fn refine_marked(mesh: &Mesh, marked: &[bool]) -> Result<Mesh> {
    let tris = mesh.triangles();
    let edge_key = |a: usize, b: usize| (a.min(b), a.max(b));
    // split[t][k]: edge opposite local vertex k is bisected
    let mut split = vec![[false; 3]; tris.len()];
    let mut queue: Vec<usize> = Vec::new();
    for t in 0..tris.len() {
        if marked[t] {
            split[t] = [true; 3];
            queue.push(t);
        }
    }
    // Propagate splits until every triangle has 0, 1 or 3 split edges.
    while let Some(t) = queue.pop() {
        for k in 0..3 {
            if !split[t][k] {
                continue;
            }
            if let Some(s) = mesh.neighbors[t][k] {
                let j = (0..3).find(|&j| mesh.neighbors[s][j] == Some(t)).expect("neighbor relation is symmetric");
                if !split[s][j] {
                    split[s][j] = true;
                    let count = split[s].iter().filter(|&&b| b).count();
                    if count == 2 {
                        split[s] = [true; 3];
                    }
                    queue.push(s);
                }
            }
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut new_boundary_mid: Vec<usize> = Vec::new();
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            if !split[t][k] {
                continue;
            }
            let a = tri[(k + 1) % 3];
            let b = tri[(k + 2) % 3];
            midpoint.entry(edge_key(a, b)).or_insert_with(|| {
                let pa = vertices[a];
                let pb = vertices[b];
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                if mesh.neighbors[t][k].is_none() {
                    new_boundary_mid.push(vertices.len() - 1);
                }
                vertices.len() - 1
            });
        }
    }
    if let DomainKind::Disk { center, radius } = mesh.domain.kind {
        for &v in &new_boundary_mid {
            let p = vertices[v];
            let r = dist(p, center);
            vertices[v] = [center[0] + (p[0] - center[0]) * radius / r, center[1] + (p[1] - center[1]) * radius / r];
        }
    }

    let mut triangles = Vec::with_capacity(tris.len() * 2);
    for (t, &[a, b, c]) in tris.iter().enumerate() {
        let count = split[t].iter().filter(|&&s| s).count();
        match count {
            0 => triangles.push([a, b, c]),
            3 => {
                let mab = midpoint[&edge_key(a, b)];
                let mbc = midpoint[&edge_key(b, c)];
                let mca = midpoint[&edge_key(c, a)];
                triangles.push([a, mab, mca]);
                triangles.push([mab, b, mbc]);
                triangles.push([mca, mbc, c]);
                triangles.push([mab, mbc, mca]);
            }
            1 => {
                let k = (0..3).find(|&k| split[t][k]).expect("one split edge");
                let v = [a, b, c];
                let apex = v[k];
                let p = v[(k + 1) % 3];
                let q = v[(k + 2) % 3];
                let m = midpoint[&edge_key(p, q)];
                triangles.push([apex, p, m]);
                triangles.push([apex, m, q]);
            }
            _ => unreachable!("closure leaves no triangle with two split edges"),
        }
    }
    Mesh::from_parts(mesh.domain.clone(), vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::compute_separation_radii;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_square_resolution_one() {
        let mesh = build_mesh(&Domain::unit_square(), 1, None, 0).unwrap();
        assert_eq!(mesh.num_vertices(), 4);
        assert_eq!(mesh.num_triangles(), 2);
        for t in 0..2 {
            assert!((mesh.triangle_area(t) - 0.5).abs() < 1e-15);
        }
        assert!(mesh.boundary().iter().all(|&b| b));
    }

    #[test]
    fn square_triangle_count_and_area() {
        for n in [2, 5, 16] {
            let mesh = build_mesh(&Domain::unit_square(), n, None, 0).unwrap();
            assert_eq!(mesh.num_triangles(), 2 * n * n);
            assert!((mesh.total_area() - 1.0).abs() < 1e-12);
            let interior = mesh.boundary().iter().filter(|&&b| !b).count();
            assert_eq!(interior, (n - 1) * (n - 1));
        }
    }

    #[test]
    fn disk_area_converges_quadratically() {
        let mut prev_err = f64::INFINITY;
        for n in [4, 8, 16, 32] {
            let mesh = build_mesh(&Domain::unit_disk(), n, None, 0).unwrap();
            let err = (std::f64::consts::PI - mesh.total_area()).abs();
            // inscribed 6n-gon deficit
            let m = 6.0 * n as f64;
            let polygon = 0.5 * m * (2.0 * std::f64::consts::PI / m).sin();
            assert!((mesh.total_area() - polygon).abs() < 1e-12);
            assert!(err < prev_err / 3.5);
            prev_err = err;
        }
    }

    #[test]
    fn disk_boundary_vertices_on_circle() {
        let mesh = build_mesh(&Domain::disk([0.2, -0.1], 2.0).unwrap(), 10, None, 0).unwrap();
        for (v, &b) in mesh.boundary().iter().enumerate() {
            let r = dist(mesh.vertices()[v], [0.2, -0.1]);
            if b {
                assert!((r - 2.0).abs() < 1e-12 * 2.0);
            } else {
                assert!(r < 2.0 - 1e-6);
            }
        }
    }

    #[test]
    fn euler_relation() {
        for mesh in [
            build_mesh(&Domain::unit_square(), 7, None, 0).unwrap(),
            build_mesh(&Domain::unit_disk(), 9, None, 0).unwrap(),
        ] {
            let v = mesh.num_vertices() as i64;
            let e = mesh.num_edges() as i64;
            let t = mesh.num_triangles() as i64;
            assert_eq!(v - e + t, 1);
        }
    }

    fn check_conforming(mesh: &Mesh) {
        // every interior edge is shared by exactly two triangles, boundary edges have endpoints on the boundary
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in mesh.triangles() {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        assert!(count.values().all(|&c| c == 1 || c == 2));
        for (&(a, b), &c) in &count {
            if c == 1 {
                assert!(mesh.domain().boundary_distance(mesh.vertices()[a]) < 1e-12);
                assert!(mesh.domain().boundary_distance(mesh.vertices()[b]) < 1e-12);
            }
        }
        // no vertex lies in the interior of an edge it does not belong to (no hanging nodes)
        for tri in mesh.triangles() {
            for k in 0..3 {
                let a = mesh.vertices()[tri[k]];
                let b = mesh.vertices()[tri[(k + 1) % 3]];
                let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                let key = (tri[k].min(tri[(k + 1) % 3]), tri[k].max(tri[(k + 1) % 3]));
                if count[&key] == 1 {
                    continue;
                }
                for (v, p) in mesh.vertices().iter().enumerate() {
                    if v != tri[k] && v != tri[(k + 1) % 3] && dist(*p, mid) < 1e-14 {
                        panic!("hanging node {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn refinement_is_conforming_and_keeps_vertices() {
        let domain = Domain::unit_square();
        let points = compute_separation_radii(&[[0.3, 0.5], [0.7, 0.5]], &domain).unwrap();
        let coarse = build_mesh(&domain, 8, None, 0).unwrap();
        let fine = build_mesh(&domain, 8, Some(&points), 3).unwrap();
        assert!(fine.num_triangles() > coarse.num_triangles());
        assert_eq!(&fine.vertices()[..coarse.num_vertices()], coarse.vertices());
        assert!((fine.total_area() - 1.0).abs() < 1e-12);
        check_conforming(&fine);
        let v = fine.num_vertices() as i64;
        assert_eq!(v - fine.num_edges() as i64 + fine.num_triangles() as i64, 1);
        // local mesh size shrinks at the sources
        for &x in points.points() {
            let loc = locate_point(&fine, x).unwrap();
            let p = fine.triangle_points(loc.triangle);
            assert!(dist(p[0], p[1]).max(dist(p[1], p[2])) < coarse.h() / 4.0);
        }
    }

    #[test]
    fn refined_disk_stays_on_circle() {
        let domain = Domain::unit_disk();
        let points = compute_separation_radii(&[[0.0, 0.0]], &domain).unwrap();
        let mesh = build_mesh(&domain, 4, Some(&points), 2).unwrap();
        check_conforming(&mesh);
        for (v, &b) in mesh.boundary().iter().enumerate() {
            if b {
                assert!((dist(mesh.vertices()[v], [0.0, 0.0]) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn locate_vertex_and_barycenter() {
        let mesh = build_mesh(&Domain::unit_square(), 4, None, 0).unwrap();
        let v = mesh.vertices()[7];
        let loc = locate_point(&mesh, v).unwrap();
        let tri = mesh.triangles()[loc.triangle];
        let k = tri.iter().position(|&w| w == 7).unwrap();
        for j in 0..3 {
            let expect = if j == k { 1.0 } else { 0.0 };
            assert!((loc.barycentric[j] - expect).abs() < 1e-12);
        }
        let p = mesh.triangle_points(5);
        let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        let loc = locate_point(&mesh, c).unwrap();
        assert_eq!(loc.triangle, 5);
        for l in loc.barycentric {
            assert!((l - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_edge_goes_to_lowest_index() {
        let mesh = build_mesh(&Domain::unit_square(), 4, None, 0).unwrap();
        // the cell diagonal shared by triangles 0 and 1
        let loc = mesh.locate_from([0.1, 0.1], 1).unwrap();
        assert_eq!(loc.triangle, 0);
    }

    #[test]
    fn random_points_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mesh = build_mesh(&Domain::unit_disk(), 12, None, 0).unwrap();
        for _ in 0..200 {
            let r = 0.95 * rng.gen::<f64>().sqrt();
            let th = rng.gen::<f64>() * std::f64::consts::TAU;
            let x = [r * th.cos(), r * th.sin()];
            let loc = mesh.locate_from(x, rng.gen_range(0..mesh.num_triangles())).unwrap();
            assert!(loc.barycentric.iter().all(|&l| l >= 0.0));
            assert!((loc.barycentric.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let back = mesh.from_barycentric(loc.triangle, loc.barycentric);
            assert!(dist(back, x) < 1e-10 * 2.0);
        }
    }

    #[test]
    fn outside_point_is_an_error() {
        let mesh = build_mesh(&Domain::unit_square(), 3, None, 0).unwrap();
        assert!(matches!(locate_point(&mesh, [1.5, 0.5]), Err(Error::PointNotLocated { .. })));
    }

    #[test]
    fn degenerate_domains_rejected() {
        assert!(Domain::rectangle([0.0, 0.0], [0.0, 1.0]).is_err());
        assert!(Domain::disk([0.0, 0.0], 0.0).is_err());
        assert!(build_mesh(&Domain::unit_square(), 0, None, 0).is_err());
    }
}
