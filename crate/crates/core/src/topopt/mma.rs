//! Method of moving asymptotes for one inequality constraint.
//!
//! Each call builds the separable convex approximation
//! `Σ p_j / (U_j − x_j) + q_j / (x_j − L_j)` of the objective and the
//! constraint around the current point and solves it through its
//! one-dimensional dual, bisecting on the constraint multiplier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmaParams {
    /// Initial asymptote distance as a fraction of the variable range.
    pub asy_init: f64,
    /// Contraction factor after an oscillation.
    pub asy_decr: f64,
    /// Expansion factor after a monotone step.
    pub asy_incr: f64,
    /// Fraction of the asymptote distance kept as a safety margin.
    pub albefa: f64,
    /// Largest step as a fraction of the variable range.
    pub move_limit: f64,
    /// Regularization of the objective approximation.
    pub raa0: f64,
    /// Linear cost of the elastic constraint slack.
    pub infeasibility_cost: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        Self {
            asy_init: 0.5,
            asy_decr: 0.7,
            asy_incr: 1.2,
            albefa: 0.1,
            move_limit: 0.5,
            raa0: 1e-5,
            infeasibility_cost: 1000.0,
        }
    }
}

/// Iteration history and asymptotes carried between MMA steps.
#[derive(Clone, Debug)]
pub struct MmaState {
    params: MmaParams,
    iter: usize,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    last_kkt: f64,
    last_multiplier: f64,
    last_slack: f64,
}

/// Variable bounds shared by every design variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self { min: 0.0, max: 1.0 }
    }
}

impl MmaState {
    pub fn new(n: usize, params: MmaParams) -> Self {
        Self {
            params,
            iter: 0,
            xold1: vec![0.0; n],
            xold2: vec![0.0; n],
            low: vec![0.0; n],
            upp: vec![0.0; n],
            last_kkt: 0.0,
            last_multiplier: 0.0,
            last_slack: 0.0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn lower_asymptotes(&self) -> &[f64] {
        &self.low
    }

    pub fn upper_asymptotes(&self) -> &[f64] {
        &self.upp
    }

    /// KKT residual of the last subproblem solve.
    pub fn last_kkt_residual(&self) -> f64 {
        self.last_kkt
    }

    pub fn last_multiplier(&self) -> f64 {
        self.last_multiplier
    }

    /// Slack needed to satisfy the approximated constraint; zero when feasible.
    pub fn last_slack(&self) -> f64 {
        self.last_slack
    }

    /// One MMA step for `min f(x)` s.t. `g(x) ≤ 0`, `bounds.min ≤ x ≤ bounds.max`.
    pub fn update(
        &mut self,
        x: &[f64],
        obj_grad: &[f64],
        constraint_value: f64,
        constraint_grad: &[f64],
        bounds: Bounds,
    ) -> Result<Vec<f64>> {
        let n = x.len();
        if obj_grad.len() != n || constraint_grad.len() != n || self.low.len() != n {
            return Err(Error::shape(
                format!("{} variables", self.low.len()),
                format!("x {n}, df {}, dg {}", obj_grad.len(), constraint_grad.len()),
            ));
        }
        if obj_grad.iter().chain(constraint_grad).any(|v| !v.is_finite()) || !constraint_value.is_finite() {
            return Err(Error::NonFinite("MMA gradient or constraint value".into()));
        }
        if !(bounds.max > bounds.min) {
            return Err(Error::InvalidInput("empty variable bounds".into()));
        }
        let p = self.params;
        let range = bounds.max - bounds.min;
        self.iter += 1;

        for j in 0..n {
            if self.iter <= 2 {
                self.low[j] = x[j] - p.asy_init * range;
                self.upp[j] = x[j] + p.asy_init * range;
            } else {
                let trend = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let gamma = if trend < 0.0 {
                    p.asy_decr
                } else if trend > 0.0 {
                    p.asy_incr
                } else {
                    1.0
                };
                self.low[j] = x[j] - gamma * (self.xold1[j] - self.low[j]);
                self.upp[j] = x[j] + gamma * (self.upp[j] - self.xold1[j]);
                self.low[j] = self.low[j].clamp(x[j] - 10.0 * range, x[j] - 0.01 * range);
                self.upp[j] = self.upp[j].clamp(x[j] + 0.01 * range, x[j] + 10.0 * range);
            }
        }

        let mut alpha = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut p1 = vec![0.0; n];
        let mut q1 = vec![0.0; n];
        let mut r1 = constraint_value;
        for j in 0..n {
            let (l, u) = (self.low[j], self.upp[j]);
            alpha[j] = bounds
                .min
                .max(l + p.albefa * (x[j] - l))
                .max(x[j] - p.move_limit * range);
            beta[j] = bounds
                .max
                .min(u - p.albefa * (u - x[j]))
                .min(x[j] + p.move_limit * range);
            let (ux, xl) = ((u - x[j]).powi(2), (x[j] - l).powi(2));
            let (gp, gm) = (obj_grad[j].max(0.0), (-obj_grad[j]).max(0.0));
            let reg = p.raa0 / range;
            p0[j] = ux * (1.001 * gp + 0.001 * gm + reg);
            q0[j] = xl * (0.001 * gp + 1.001 * gm + reg);
            let (hp, hm) = (constraint_grad[j].max(0.0), (-constraint_grad[j]).max(0.0));
            p1[j] = ux * (1.001 * hp + 0.001 * hm);
            q1[j] = xl * (0.001 * hp + 1.001 * hm);
            r1 -= p1[j] / (u - x[j]) + q1[j] / (x[j] - l);
        }

        let primal = |lambda: f64, out: &mut [f64]| {
            for j in 0..n {
                let sp = (p0[j] + lambda * p1[j]).sqrt();
                let sq = (q0[j] + lambda * q1[j]).sqrt();
                let xj = (sp * self.low[j] + sq * self.upp[j]) / (sp + sq);
                out[j] = xj.clamp(alpha[j], beta[j]);
            }
        };
        let constraint = |xs: &[f64]| -> f64 {
            r1 + (0..n)
                .map(|j| p1[j] / (self.upp[j] - xs[j]) + q1[j] / (xs[j] - self.low[j]))
                .sum::<f64>()
        };

        // elastic slack y = max(0, λ − c) keeps the subproblem feasible
        let slack = |lambda: f64| (lambda - p.infeasibility_cost).max(0.0);
        let mut xnew = vec![0.0; n];
        primal(0.0, &mut xnew);
        let g0 = constraint(&xnew);
        let mut lambda = 0.0;
        let mut g = g0;
        if g0 > 0.0 {
            // the dual derivative g̃(x(λ)) − y(λ) is non-increasing in λ
            let dual_slope = |lambda: f64, xs: &mut [f64]| {
                primal(lambda, xs);
                constraint(xs) - slack(lambda)
            };
            let mut hi = 1.0;
            while dual_slope(hi, &mut xnew) > 0.0 && hi < 1e100 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if dual_slope(mid, &mut xnew) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lambda = hi;
            g = dual_slope(lambda, &mut xnew);
        }
        self.last_multiplier = lambda;
        self.last_slack = slack(lambda);
        self.last_kkt = g.max(0.0).max((lambda * g).abs());

        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        Ok(xnew)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_stationary() {
        let x = vec![0.3, 0.6, 0.5];
        let mut s = MmaState::new(3, MmaParams::default());
        let out = s
            .update(&x, &[0.0; 3], -0.1, &[1.0 / 3.0; 3], Bounds::default())
            .unwrap();
        for (a, b) in out.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.last_multiplier(), 0.0);
    }

    #[test]
    fn one_variable_descends_within_bounds() {
        let mut s = MmaState::new(1, MmaParams::default());
        let out = s.update(&[0.5], &[-1.0], -10.0, &[1.0], Bounds::default()).unwrap();
        assert!(out[0] > 0.5);
        assert!(out[0] <= 1.0);
        // asymptote safety margin: x ≤ U − albefa (U − x0) = 1.0 − 0.1 · 0.5
        assert!(out[0] <= s.upper_asymptotes()[0] - 0.1 * (s.upper_asymptotes()[0] - 0.5) + 1e-15);
        // the 1-D rational subproblem with dominant q0 sits at the beta bound
        assert!((out[0] - 0.95).abs() < 1e-12, "{out:?}");
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut s = MmaState::new(1, MmaParams::default());
        assert!(s.update(&[0.5], &[f64::NAN], 0.0, &[1.0], Bounds::default()).is_err());
    }
}
