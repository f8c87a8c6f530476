//! Plane-stress finite elements on a regular grid of unit squares.

mod element;
mod grid;
mod solve;
mod sparse;

pub use element::{
    element_stiffness, flow_matrix, mass_matrix, plane_stress_tensor, pressure_coupling, Coupling,
    Matrix4, Matrix8,
};
pub use grid::{DensityField, Grid, Material};
pub use solve::{
    relative_residual, solve_spd, solve_system, LinearSystem, SolveMethod, SpdSolver, DEFAULT_TOL,
};
pub use sparse::{AssemblyPattern, CsrMatrix};

use crate::error::{Error, Result};

pub(crate) fn flatten8(ke: &Matrix8) -> Vec<f64> {
    ke.iter().flatten().copied().collect()
}

/// Connectivity and assembly pattern of the structural problem on one grid.
#[derive(Clone, Debug)]
pub struct StructuralMesh {
    grid: Grid,
    edofs: Vec<[usize; 8]>,
    pattern: AssemblyPattern,
}

impl StructuralMesh {
    pub fn new(grid: Grid) -> Self {
        let edofs = grid.connectivity();
        let pattern = AssemblyPattern::new(grid.n_dofs(), 8, edofs.iter().map(|d| &d[..]));
        Self {
            grid,
            edofs,
            pattern,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn edofs(&self) -> &[[usize; 8]] {
        &self.edofs
    }

    /// `Σ_e (Emin + rho_e^p (E0 − Emin)) · ke` scattered into the global matrix.
    pub fn assemble(&self, rho: &[f64], penal: f64, material: &Material, ke: &Matrix8) -> Result<CsrMatrix> {
        if rho.len() != self.grid.n_elements() {
            return Err(Error::shape(
                format!("{} densities", self.grid.n_elements()),
                rho.len(),
            ));
        }
        if penal < 1.0 {
            return Err(Error::InvalidInput(format!("penal must be >= 1, got {penal}")));
        }
        let factors: Vec<f64> = rho.iter().map(|&r| material.simp(r, penal)).collect();
        Ok(self.pattern.assemble_scaled(&factors, &flatten8(ke)))
    }

    /// Unit-modulus element energies `u_e^T ke u_e`.
    pub fn element_energies(&self, u: &[f64], ke: &Matrix8) -> Vec<f64> {
        self.edofs
            .iter()
            .map(|dofs| {
                let ue = dofs.map(|d| u[d]);
                quad_form(ke, &ue, &ue)
            })
            .collect()
    }

    /// Compliance `Σ_e E_e(rho) ce_e` and the unit-modulus energies `ce`.
    pub fn compliance(
        &self,
        u: &[f64],
        rho: &[f64],
        penal: f64,
        material: &Material,
        ke: &Matrix8,
    ) -> Result<(f64, Vec<f64>)> {
        if u.len() != self.grid.n_dofs() {
            return Err(Error::shape(format!("{} dofs", self.grid.n_dofs()), u.len()));
        }
        if rho.len() != self.grid.n_elements() {
            return Err(Error::shape(
                format!("{} densities", self.grid.n_elements()),
                rho.len(),
            ));
        }
        let ce = self.element_energies(u, ke);
        let c = ce
            .iter()
            .zip(rho)
            .map(|(&e, &r)| material.simp(r, penal) * e)
            .sum();
        Ok((c, ce))
    }
}

/// `a^T M b` for an 8×8 element matrix.
pub(crate) fn quad_form(m: &Matrix8, a: &[f64; 8], b: &[f64; 8]) -> f64 {
    let mut s = 0.0;
    for i in 0..8 {
        let row: f64 = (0..8).map(|j| m[i][j] * b[j]).sum();
        s += a[i] * row;
    }
    s
}

/// Global SIMP stiffness matrix for `rho` on its grid.
pub fn assemble(rho: &DensityField, penal: f64, material: &Material, ke: &Matrix8) -> Result<CsrMatrix> {
    StructuralMesh::new(rho.grid()).assemble(rho.values(), penal, material, ke)
}

/// Compliance and unit-modulus element energies of displacement `u`.
pub fn compliance(
    u: &[f64],
    rho: &DensityField,
    penal: f64,
    material: &Material,
    ke: &Matrix8,
) -> Result<(f64, Vec<f64>)> {
    StructuralMesh::new(rho.grid()).compliance(u, rho.values(), penal, material, ke)
}
