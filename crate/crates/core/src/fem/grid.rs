use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular grid of unit-square elements.
///
/// Nodes are numbered column by column, `id = col * (nely + 1) + row`, with
/// `row` counted from the top edge. Node `id` owns DOFs `2 id` (x) and
/// `2 id + 1` (y, positive upward). Elements are indexed row-major from the
/// top-left corner, which is also the pixel order of the density images.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    nelx: usize,
    nely: usize,
}

impl Grid {
    pub fn new(nelx: usize, nely: usize) -> Result<Self> {
        if nelx == 0 || nely == 0 {
            return Err(Error::InvalidInput(format!(
                "grid must have at least one element per side, got {nelx}x{nely}"
            )));
        }
        Ok(Self { nelx, nely })
    }

    pub fn nelx(&self) -> usize {
        self.nelx
    }

    pub fn nely(&self) -> usize {
        self.nely
    }

    pub fn n_elements(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn n_nodes(&self) -> usize {
        (self.nelx + 1) * (self.nely + 1)
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn node(&self, col: usize, row: usize) -> usize {
        debug_assert!(col <= self.nelx && row <= self.nely);
        col * (self.nely + 1) + row
    }

    /// `(col, row)` of a node id.
    pub fn node_position(&self, node: usize) -> (usize, usize) {
        (node / (self.nely + 1), node % (self.nely + 1))
    }

    /// Physical coordinates of a node, origin at the bottom-left corner.
    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let (col, row) = self.node_position(node);
        (col as f64, (self.nely - row) as f64)
    }

    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        ey * self.nelx + ex
    }

    /// Corner nodes of element `(ex, ey)` in counter-clockwise order starting
    /// at the bottom-left corner.
    pub fn element_nodes(&self, ex: usize, ey: usize) -> [usize; 4] {
        let left = ex * (self.nely + 1);
        let right = (ex + 1) * (self.nely + 1);
        [left + ey + 1, right + ey + 1, right + ey, left + ey]
    }

    pub fn element_dofs(&self, ex: usize, ey: usize) -> [usize; 8] {
        let n = self.element_nodes(ex, ey);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    /// Element DOF table in element-index order.
    pub fn connectivity(&self) -> Vec<[usize; 8]> {
        self.element_coords().map(|(ex, ey)| self.element_dofs(ex, ey)).collect()
    }

    /// Element node table in element-index order.
    pub fn node_connectivity(&self) -> Vec<[usize; 4]> {
        self.element_coords().map(|(ex, ey)| self.element_nodes(ex, ey)).collect()
    }

    /// `(ex, ey)` pairs in element-index order.
    pub fn element_coords(&self) -> impl Iterator<Item = (usize, usize)> {
        let nelx = self.nelx;
        (0..self.nely).flat_map(move |ey| (0..nelx).map(move |ex| (ex, ey)))
    }
}

/// Isotropic linear-elastic material with a SIMP stiffness floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub e0: f64,
    pub emin: f64,
    pub nu: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            e0: 1.0,
            emin: 1e-9,
            nu: 0.3,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::InvalidMaterial(format!(
                "Poisson ratio {} outside [0, 0.5)",
                self.nu
            )));
        }
        if !(self.emin > 0.0 && self.emin < self.e0) || !self.e0.is_finite() {
            return Err(Error::InvalidMaterial(format!(
                "need 0 < Emin < E0, got Emin = {}, E0 = {}",
                self.emin, self.e0
            )));
        }
        Ok(())
    }

    /// SIMP-interpolated modulus `Emin + rho^p (E0 - Emin)`.
    pub fn simp(&self, rho: f64, penal: f64) -> f64 {
        self.emin + rho.powf(penal) * (self.e0 - self.emin)
    }

    /// Derivative of [`Material::simp`] with respect to `rho`.
    pub fn simp_derivative(&self, rho: f64, penal: f64) -> f64 {
        penal * rho.powf(penal - 1.0) * (self.e0 - self.emin)
    }
}

/// Per-element densities in `[0, 1]` on a grid, row-major from the top-left.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    grid: Grid,
    rho: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Grid, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.n_elements() {
            return Err(Error::shape(
                format!("{} densities", grid.n_elements()),
                rho.len(),
            ));
        }
        if let Some((i, v)) = rho
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidInput(format!(
                "density {v} at element {i} outside [0, 1]"
            )));
        }
        Ok(Self { grid, rho })
    }

    /// Clamps every entry into `[0, 1]`; rejects non-finite values.
    pub fn clamped(grid: Grid, mut rho: Vec<f64>) -> Result<Self> {
        if let Some(i) = rho.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("density at element {i}")));
        }
        for v in &mut rho {
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(grid, rho)
    }

    pub fn uniform(grid: Grid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_elements()])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn into_values(self) -> Vec<f64> {
        self.rho
    }

    pub fn get(&self, ex: usize, ey: usize) -> f64 {
        self.rho[self.grid.element_index(ex, ey)]
    }

    /// Volume fraction.
    pub fn mean(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }
}
