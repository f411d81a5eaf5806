//! Triangle quadrature rules in barycentric form. Weights sum to one and are
//! scaled by the triangle area at the call site.

use crate::mesh::Point;

pub struct Rule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

/// Edge-midpoint rule, exact for quadratics.
pub const MIDPOINT3: Rule =
    Rule { points: &[[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]], weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0] };

const S15: f64 = 3.872_983_346_207_417;
const A1: f64 = (6.0 - S15) / 21.0;
const B1: f64 = (9.0 + 2.0 * S15) / 21.0;
const A2: f64 = (6.0 + S15) / 21.0;
const B2: f64 = (9.0 - 2.0 * S15) / 21.0;
const W1: f64 = (155.0 - S15) / 1200.0;
const W2: f64 = (155.0 + S15) / 1200.0;

/// Seven-point rule, exact for polynomials of degree five.
pub const STRANG7: Rule = Rule {
    points: &[
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [A1, A1, B1],
        [A1, B1, A1],
        [B1, A1, A1],
        [A2, A2, B2],
        [A2, B2, A2],
        [B2, A2, A2],
    ],
    weights: &[9.0 / 40.0, W1, W1, W1, W2, W2, W2],
};

pub fn map(tri: &[Point; 3], l: &[f64; 3]) -> Point {
    [l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0], l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1]]
}

pub fn area(tri: &[Point; 3]) -> f64 {
    let [a, b, c] = tri;
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Splits a triangle (given by barycentric corners of the parent) into
/// `4^levels` congruent children.
pub fn subdivide(levels: usize) -> Vec<[[f64; 3]; 3]> {
    let mut tris = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let mid = |p: [f64; 3], q: [f64; 3]| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])];
            let ab = mid(a, b);
            let bc = mid(b, c);
            let ca = mid(c, a);
            next.push([a, ab, ca]);
            next.push([ab, b, bc]);
            next.push([ca, bc, c]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    tris
}

/// Composes a child triangle (barycentric corners) with a rule point.
pub fn compose(child: &[[f64; 3]; 3], l: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = l[0] * child[0][k] + l[1] * child[1][k] + l[2] * child[2][k];
    }
    out
}
