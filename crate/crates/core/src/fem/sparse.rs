//! Compressed sparse row storage and a Jacobi-preconditioned CG solver.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Sums duplicate `(row, col, value)` entries. Columns are sorted within
    /// each row, so accumulation order only depends on the triplet order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn diagonal_matrix(diag: &[f64]) -> Self {
        let n = diag.len();
        Self { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: diag.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// `A + diag(d)`; the sparsity pattern must already contain the diagonal.
    pub fn plus_diagonal(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate() {
            let k =
                (out.row_ptr[i]..out.row_ptr[i + 1]).find(|&k| out.col_idx[k] == i).expect("diagonal entry present");
            out.values[k] += di;
        }
        out
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` on the unmasked (interior) unknowns with homogeneous
/// Dirichlet values on masked entries, by Jacobi-preconditioned CG.
pub fn solve_spd(a: &SparseOperator, b: &[f64], dirichlet: &[bool], tol: f64) -> Result<Vec<f64>> {
    solve_spd_with_stats(a, b, dirichlet, tol).map(|(x, _)| x)
}

pub fn solve_spd_with_stats(
    a: &SparseOperator,
    b: &[f64],
    dirichlet: &[bool],
    tol: f64,
) -> Result<(Vec<f64>, CgStats)> {
    let n = a.dim();
    assert_eq!(b.len(), n, "right-hand side length");
    assert_eq!(dirichlet.len(), n, "mask length");
    let mask = |v: &mut [f64]| {
        for (vi, &d) in v.iter_mut().zip(dirichlet) {
            if d {
                *vi = 0.0;
            }
        }
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    mask(&mut r);
    let bnorm = norm2(&r);
    if bnorm == 0.0 {
        return Ok((x, CgStats { iterations: 0, relative_residual: 0.0 }));
    }
    let inv_diag: Vec<f64> =
        a.diagonal().iter().zip(dirichlet).map(|(&d, &m)| if m || d == 0.0 { 0.0 } else { 1.0 / d }).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = 10 * n.max(1);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        mask(&mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolveStagnated { iterations: it, residual: rel });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm2(&r) / bnorm;
        if rel <= tol {
            return Ok((x, CgStats { iterations: it, relative_residual: rel }));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolveStagnated { iterations: max_iter, residual: rel })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SparseOperator {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseOperator::from_triplets(n, t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SparseOperator::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, 2.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.symmetry_defect(), 0.0);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = laplace_1d(5);
        let x = solve_spd(&a, &[0.0; 5], &[false; 5], 1e-10).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prescribed_solution_is_recovered() {
        let n = 40;
        let a = laplace_1d(n);
        let mut mask = vec![false; n];
        mask[0] = true;
        mask[n - 1] = true;
        let exact: Vec<f64> = (0..n).map(|i| if mask[i] { 0.0 } else { (i as f64 * 0.37).sin() }).collect();
        let mut b = a.matvec(&exact);
        b[0] = 123.0; // masked rows are ignored
        let x = solve_spd(&a, &b, &mask, 1e-12).unwrap();
        assert_eq!(x[0], 0.0);
        assert_eq!(x[n - 1], 0.0);
        for i in 0..n {
            assert!((x[i] - exact[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn indefinite_reports_stagnation() {
        let a = SparseOperator::diagonal_matrix(&[1.0, -1.0]);
        let err = solve_spd(&a, &[1.0, 1.0], &[false, false], 1e-12).unwrap_err();
        assert!(matches!(err, Error::LinearSolveStagnated { .. }));
    }
}
