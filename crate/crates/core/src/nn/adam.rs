use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub params: AdamParams,
    m: Vec<f32>,
    v: Vec<f32>,
    step: u64,
}

impl AdamState {
    pub fn new(n: usize, params: AdamParams) -> Self {
        Self {
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f32] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f32] {
        &self.v
    }

    /// One update of `x` against gradient `g`.
    pub fn step(&mut self, x: &mut [f32], g: &[f32]) -> Result<()> {
        if x.len() != self.m.len() || g.len() != self.m.len() {
            return Err(Error::shape(
                format!("{} parameters and gradients", self.m.len()),
                format!("{} and {}", x.len(), g.len()),
            ));
        }
        self.step += 1;
        let AdamParams { lr, beta1, beta2, eps } = self.params;
        let t = self.step as i32;
        let c1 = 1.0 - (beta1 as f64).powi(t);
        let c2 = 1.0 - (beta2 as f64).powi(t);
        let (c1, c2) = (c1 as f32, c2 as f32);
        for i in 0..x.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            x[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(1, AdamParams::default());
        let mut x = [0.5f32];
        s.step(&mut x, &[1.0]).unwrap();
        let expected = 0.5 - 1e-4 / (1.0 + 1e-8);
        assert!((x[0] - expected as f32).abs() < 1e-7, "{}", x[0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = AdamState::new(3, AdamParams::default());
        let mut x = [1.0f32, -2.0, 3.0];
        s.step(&mut x, &[0.0; 3]).unwrap();
        assert_eq!(x, [1.0, -2.0, 3.0]);
    }
}
