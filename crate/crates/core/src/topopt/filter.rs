use crate::error::{Error, Result};
use crate::fem::Grid;

/// Floor on the density in the sensitivity-filter denominator.
pub const FILTER_DENSITY_FLOOR: f64 = 1e-3;

/// Linear hat filter `w = rmin − dist` over element centers closer than `rmin`.
#[derive(Clone, Debug)]
pub struct FilterKernel {
    grid: Grid,
    rmin: f64,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    weight_sums: Vec<f64>,
}

impl FilterKernel {
    /// Neighborhoods clipped at the grid boundary.
    pub fn new(grid: Grid, rmin: f64) -> Result<Self> {
        Self::build(grid, rmin, false)
    }

    /// Neighborhoods wrapped around opposite edges, for periodic unit cells.
    pub fn periodic(grid: Grid, rmin: f64) -> Result<Self> {
        Self::build(grid, rmin, true)
    }

    fn build(grid: Grid, rmin: f64, wrap: bool) -> Result<Self> {
        if !(rmin > 0.0) || !rmin.is_finite() {
            return Err(Error::InvalidInput(format!("rmin must be positive, got {rmin}")));
        }
        let reach = rmin.ceil() as isize;
        let (nelx, nely) = (grid.nelx() as isize, grid.nely() as isize);
        let mut offsets = vec![0];
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        let mut weight_sums = Vec::with_capacity(grid.n_elements());
        for (ex, ey) in grid.element_coords() {
            let mut sum = 0.0;
            let mut found: Vec<(usize, f64)> = Vec::new();
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let dist = ((dx * dx + dy * dy) as f64).sqrt();
                    if dist >= rmin {
                        continue;
                    }
                    let (mut jx, mut jy) = (ex as isize + dx, ey as isize + dy);
                    if wrap {
                        jx = jx.rem_euclid(nelx);
                        jy = jy.rem_euclid(nely);
                    } else if jx < 0 || jy < 0 || jx >= nelx || jy >= nely {
                        continue;
                    }
                    let j = grid.element_index(jx as usize, jy as usize);
                    let w = rmin - dist;
                    // a small periodic cell can reach the same element twice
                    match found.iter_mut().find(|(k, _)| *k == j) {
                        Some(entry) => entry.1 += w,
                        None => found.push((j, w)),
                    }
                    sum += w;
                }
            }
            found.sort_by_key(|&(j, _)| j);
            for (j, w) in found {
                neighbors.push(j);
                weights.push(w);
            }
            offsets.push(neighbors.len());
            weight_sums.push(sum);
        }
        Ok(Self {
            grid,
            rmin,
            offsets,
            neighbors,
            weights,
            weight_sums,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn rmin(&self) -> f64 {
        self.rmin
    }

    /// `(neighbor, weight)` pairs of element `e` in row-major order.
    pub fn neighbors(&self, e: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[e]..self.offsets[e + 1];
        self.neighbors[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn weight_sum(&self, e: usize) -> f64 {
        self.weight_sums[e]
    }
}

/// Density-weighted sensitivity filter.
pub fn sensitivity_filter(rho: &[f64], dc: &[f64], kernel: &FilterKernel) -> Result<Vec<f64>> {
    let n = kernel.grid().n_elements();
    if rho.len() != n || dc.len() != n {
        return Err(Error::shape(
            format!("{n} densities and sensitivities"),
            format!("{} and {}", rho.len(), dc.len()),
        ));
    }
    Ok((0..n)
        .map(|e| {
            let s: f64 = kernel.neighbors(e).map(|(j, w)| w * rho[j] * dc[j]).sum();
            s / (rho[e].max(FILTER_DENSITY_FLOOR) * kernel.weight_sum(e))
        })
        .collect())
}
