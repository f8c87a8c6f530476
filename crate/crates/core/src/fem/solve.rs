use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::CsrMatrix;

pub const DEFAULT_TOL: f64 = 1e-8;

/// How the reduced SPD system is solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveMethod {
    /// Skyline (profile) Cholesky factorization.
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients, capped at `10 · n` iterations.
    Pcg { tol: f64 },
}

/// `K u = b` with some DOFs prescribed.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// `(dof, value)` pairs.
    pub fixed: Vec<(usize, f64)>,
}

/// Solves with preconditioned CG to relative residual `tol` on the free block.
pub fn solve_spd(system: &LinearSystem, tol: f64) -> Result<Vec<f64>> {
    solve_system(system, SolveMethod::Pcg { tol })
}

pub fn solve_system(system: &LinearSystem, method: SolveMethod) -> Result<Vec<f64>> {
    let dofs: Vec<usize> = system.fixed.iter().map(|&(d, _)| d).collect();
    let values: Vec<f64> = system.fixed.iter().map(|&(_, v)| v).collect();
    SpdSolver::new(system.matrix.clone(), &dofs, method)?.solve_prescribed(&system.rhs, &values)
}

/// `‖K_ff u_f − b_f‖ / ‖b_f‖` where `b_f` includes the lifted prescribed values.
pub fn relative_residual(system: &LinearSystem, u: &[f64]) -> f64 {
    let n = system.matrix.n();
    let mut is_fixed = vec![false; n];
    for &(d, _) in &system.fixed {
        is_fixed[d] = true;
    }
    let mut lifted = vec![0.0; n];
    for &(d, v) in &system.fixed {
        lifted[d] = v;
    }
    let k_lift = system.matrix.mul_vec(&lifted);
    let mut u_free = u.to_vec();
    for &(d, _) in &system.fixed {
        u_free[d] = 0.0;
    }
    let ku = system.matrix.mul_vec(&u_free);
    let (mut r2, mut b2) = (0.0, 0.0);
    for i in (0..n).filter(|&i| !is_fixed[i]) {
        let b = system.rhs[i] - k_lift[i];
        r2 += (ku[i] - b).powi(2);
        b2 += b * b;
    }
    if b2 == 0.0 {
        r2.sqrt()
    } else {
        (r2 / b2).sqrt()
    }
}

/// A symmetric positive-definite operator with Dirichlet DOFs eliminated,
/// ready for repeated solves.
pub struct SpdSolver {
    full: CsrMatrix,
    fixed: Vec<usize>,
    free: Vec<usize>,
    backend: Backend,
}

enum Backend {
    Direct { factor: Skyline, reduced: CsrMatrix },
    Pcg {
        reduced: CsrMatrix,
        inv_diag: Vec<f64>,
        tol: f64,
    },
}

impl SpdSolver {
    pub fn new(matrix: CsrMatrix, fixed: &[usize], method: SolveMethod) -> Result<Self> {
        let n = matrix.n();
        let mut is_fixed = vec![false; n];
        for &d in fixed {
            if d >= n {
                return Err(Error::shape(format!("fixed dof below {n}"), d));
            }
            is_fixed[d] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
        let reduced = matrix.submatrix(&free);
        let backend = match method {
            SolveMethod::Direct => Backend::Direct {
                factor: Skyline::factor(&reduced)?,
                reduced,
            },
            SolveMethod::Pcg { tol } => {
                let inv_diag = reduced
                    .diagonal()
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| {
                        if d > 0.0 {
                            Ok(1.0 / d)
                        } else {
                            Err(Error::NotPositiveDefinite { pivot: i, value: d })
                        }
                    })
                    .collect::<Result<_>>()?;
                Backend::Pcg {
                    reduced,
                    inv_diag,
                    tol,
                }
            }
        };
        Ok(Self {
            full: matrix,
            fixed: fixed.to_vec(),
            free,
            backend,
        })
    }

    pub fn n(&self) -> usize {
        self.full.n()
    }

    /// Solve with all prescribed DOFs at zero.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b: Vec<f64> = self.free.iter().map(|&i| rhs[i]).collect();
        let uf = self.solve_reduced(&b)?;
        let mut u = vec![0.0; self.n()];
        for (&i, v) in self.free.iter().zip(uf) {
            u[i] = v;
        }
        Ok(u)
    }

    /// Solve with prescribed DOFs set to `values` (aligned with `fixed`).
    pub fn solve_prescribed(&self, rhs: &[f64], values: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n() {
            return Err(Error::shape(format!("rhs of length {}", self.n()), rhs.len()));
        }
        if values.len() != self.fixed.len() {
            return Err(Error::shape(
                format!("{} prescribed values", self.fixed.len()),
                values.len(),
            ));
        }
        let mut lifted = vec![0.0; self.n()];
        for (&d, &v) in self.fixed.iter().zip(values) {
            lifted[d] = v;
        }
        let k_lift = self.full.mul_vec(&lifted);
        let b: Vec<f64> = self.free.iter().map(|&i| rhs[i] - k_lift[i]).collect();
        let uf = self.solve_reduced(&b)?;
        for (&i, v) in self.free.iter().zip(uf) {
            lifted[i] = v;
        }
        Ok(lifted)
    }

    fn solve_reduced(&self, b: &[f64]) -> Result<Vec<f64>> {
        match &self.backend {
            Backend::Direct { factor, reduced } => Ok(refine(factor, reduced, b)),
            Backend::Pcg {
                reduced,
                inv_diag,
                tol,
            } => pcg(reduced, inv_diag, b, *tol, 10 * reduced.n().max(1)),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky solve plus a few steps of iterative refinement, which recover
/// the residual lost to SIMP stiffness contrast.
fn refine(factor: &Skyline, a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    let mut x = factor.solve(b);
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return x;
    }
    let mut ax = vec![0.0; b.len()];
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        a.mul_vec_into(&x, &mut ax);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
        let res = dot(&r, &r).sqrt() / b_norm;
        if res <= 1e-2 * DEFAULT_TOL || res >= 0.5 * best {
            break;
        }
        best = res;
        for (xi, d) in x.iter_mut().zip(factor.solve(&r)) {
            *xi += d;
        }
    }
    x
}

fn pcg(a: &CsrMatrix, inv_diag: &[f64], b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut residual = 1.0;
    for _ in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: 0, value: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        let mut restart = false;
        if residual <= tol {
            // the recurrence drifts on high-contrast systems; confirm
            a.mul_vec_into(&x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            residual = dot(&r, &r).sqrt() / b_norm;
            if residual <= tol {
                return Ok(x);
            }
            restart = true;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = if restart { 0.0 } else { rz_new / rz };
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure {
        iterations: max_iter,
        residual,
    })
}

/// Lower Cholesky factor in skyline storage: row `i` holds columns
/// `first[i]..=i` contiguously.
struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl Skyline {
    fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let first: Vec<usize> = (0..n)
            .map(|i| {
                let (cols, _) = a.row(i);
                cols.first().copied().unwrap_or(i).min(i)
            })
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    data[start[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let s = {
                    let ri = &data[start[i] + k0 - fi..start[i] + j - fi];
                    let rj = &data[start[j] + k0 - fj..start[j] + j - fj];
                    dot(ri, rj)
                };
                let idx = start[i] + j - fi;
                let v = data[idx] - s;
                if j < i {
                    data[idx] = v / data[start[j + 1] - 1];
                } else {
                    if !(v > 0.0) {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: v });
                    }
                    data[idx] = v.sqrt();
                }
            }
        }
        Ok(Self { first, start, data })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.first.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s = dot(&row[..i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (yk, l) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yk -= l * xi;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn direct_and_pcg_agree() {
        let a = laplace_1d(30);
        let b: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let d = SpdSolver::new(a.clone(), &[], SolveMethod::Direct)
            .unwrap()
            .solve(&b)
            .unwrap();
        let c = SpdSolver::new(a.clone(), &[], SolveMethod::Pcg { tol: 1e-12 })
            .unwrap()
            .solve(&b)
            .unwrap();
        for (x, y) in d.iter().zip(&c) {
            assert!((x - y).abs() < 1e-9);
        }
        let r = a.mul_vec(&d);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn prescribed_values_lifted() {
        // 1-D Laplace with u(0)=1, u(end)=0 is linear.
        let n = 11;
        let a = laplace_1d(n);
        let sys = LinearSystem {
            matrix: a,
            rhs: vec![0.0; n],
            fixed: vec![(0, 1.0), (n - 1, 0.0)],
        };
        for method in [SolveMethod::Direct, SolveMethod::Pcg { tol: 1e-12 }] {
            let u = solve_system(&sys, method).unwrap();
            for (i, v) in u.iter().enumerate() {
                assert!((v - (1.0 - i as f64 / 10.0)).abs() < 1e-12);
            }
            assert!(relative_residual(&sys, &u) < 1e-12);
        }
    }

    #[test]
    fn indefinite_rejected() {
        let a = CsrMatrix::dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            SpdSolver::new(a, &[], SolveMethod::Direct),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn pcg_reports_failure_with_residual() {
        let a = laplace_1d(200);
        let b: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
        match pcg(&a, &vec![0.5; 200], &b, 1e-8, 3) {
            Err(Error::SolverFailure { residual, iterations }) => {
                assert_eq!(iterations, 3);
                assert!(residual.is_finite() && residual > 1e-8);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
