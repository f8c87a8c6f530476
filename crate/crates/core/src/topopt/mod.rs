//! Filtering, density updates and projection shared by the three generators.

mod filter;
mod mma;
mod oc;

pub use filter::{sensitivity_filter, FilterKernel, FILTER_DENSITY_FLOOR};
pub use mma::{Bounds, MmaParams, MmaState};
pub use oc::oc_update;

/// Smoothed Heaviside step and its derivative with respect to `rho`.
///
/// `H(0) = 0` and `H(1) = 1` hold exactly.
pub fn heaviside(rho: f64, eta: f64, beta: f64) -> (f64, f64) {
    let a = (beta * eta).tanh();
    let denom = a + (beta * (1.0 - eta)).tanh();
    let t = (beta * (rho - eta)).tanh();
    ((a + t) / denom, beta * (1.0 - t * t) / denom)
}
