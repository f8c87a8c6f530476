//! Bulk-modulus maximization of a periodic unit cell.
//!
//! The homogenized tensor comes from three unit test strains: each imposes
//! an affine displacement, a periodic fluctuation is solved for, and the
//! tensor entries are mutual strain energies of the resulting fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{element_stiffness, flatten8, quad_form, AssemblyPattern, DensityField, Grid, Material, Matrix8, SolveMethod, SpdSolver};
use crate::problems::compliance::{max_change, mean};
use crate::problems::{IterationRecord, Solution};
use crate::topopt::{oc_update, sensitivity_filter, FilterKernel};

/// Unit test strains `(ε_xx, ε_yy, γ_xy)`.
const TEST_STRAINS: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroConfig {
    pub nelx: usize,
    pub nely: usize,
    pub vf_target: f64,
    pub penal: f64,
    pub rmin: f64,
    pub move_limit: f64,
    pub max_iters: usize,
    pub change_tol: f64,
    /// Seed disk radius as a fraction of `nelx`.
    pub seed_radius_fraction: f64,
    /// Seed disk density as a fraction of `vf_target`.
    pub seed_density_fraction: f64,
    pub material: Material,
    pub solver: SolveMethod,
}

impl Default for MicroConfig {
    fn default() -> Self {
        Self {
            nelx: 100,
            nely: 100,
            vf_target: 0.5,
            penal: 3.0,
            rmin: 2.4,
            move_limit: 0.2,
            max_iters: 200,
            change_tol: 0.01,
            seed_radius_fraction: 1.0 / 6.0,
            seed_density_fraction: 0.5,
            material: Material::default(),
            solver: SolveMethod::Direct,
        }
    }
}

impl MicroConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nelx, self.nely)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if grid.nelx() < 2 || grid.nely() < 2 {
            return Err(Error::InvalidInput("periodic cell needs at least 2x2 elements".into()));
        }
        self.material.validate()?;
        super::check_common(self.vf_target, self.penal, self.rmin)?;
        if !(self.move_limit > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidInput(
                "move limit and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn boundary_conditions(&self) -> String {
        format!(
            "periodic cell, one node anchored; initial design uniform with a centered disk \
             of radius {:.4}·nelx at {:.4}·vf, rescaled to mean vf",
            self.seed_radius_fraction, self.seed_density_fraction
        )
    }

    /// Uniform field with a centered low-density disk, rescaled to mean `vf`.
    pub fn initial_design(&self) -> Result<Vec<f64>> {
        let grid = self.grid()?;
        let vf = self.vf_target;
        let radius = self.seed_radius_fraction * grid.nelx() as f64;
        let (cx, cy) = (grid.nelx() as f64 / 2.0, grid.nely() as f64 / 2.0);
        let mut rho: Vec<f64> = grid
            .element_coords()
            .map(|(ex, ey)| {
                let (x, y) = (ex as f64 + 0.5 - cx, ey as f64 + 0.5 - cy);
                if (x * x + y * y).sqrt() < radius {
                    vf * self.seed_density_fraction
                } else {
                    vf
                }
            })
            .collect();
        let scale = vf / mean(&rho);
        for r in &mut rho {
            *r = (*r * scale).clamp(0.0, 1.0);
        }
        Ok(rho)
    }
}

/// Identification of opposite cell edges.
#[derive(Clone, Debug)]
pub struct PeriodicCell {
    grid: Grid,
    /// Full DOF → independent DOF.
    reduced: Vec<usize>,
}

impl PeriodicCell {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n_independent(&self) -> usize {
        2 * self.grid.n_elements()
    }

    /// Independent DOF index of a full DOF.
    pub fn reduced_dof(&self, dof: usize) -> usize {
        self.reduced[dof]
    }

    /// Master DOF of a full DOF; interior DOFs map to themselves.
    pub fn master_dof(&self, dof: usize) -> usize {
        let node = dof / 2;
        let (col, row) = self.grid.node_position(node);
        let m = self.grid.node(col % self.grid.nelx(), row % self.grid.nely());
        2 * m + dof % 2
    }
}

pub fn periodic_dof_map(grid: Grid) -> Result<PeriodicCell> {
    if grid.nelx() < 2 || grid.nely() < 2 {
        return Err(Error::InvalidInput("periodic cell needs at least 2x2 elements".into()));
    }
    let reduced = (0..grid.n_dofs())
        .map(|dof| {
            let (col, row) = grid.node_position(dof / 2);
            let idx = (col % grid.nelx()) * grid.nely() + row % grid.nely();
            2 * idx + dof % 2
        })
        .collect();
    Ok(PeriodicCell { grid, reduced })
}

/// Homogenized tensor and per-element mutual energies
/// `q_e(i, j) = χⁱ_eᵀ ke χʲ_e / |Y|` (unit modulus).
#[derive(Clone, Debug)]
pub struct Homogenization {
    pub c_h: [[f64; 3]; 3],
    pub mutual: Vec<[[f64; 3]; 3]>,
}

impl Homogenization {
    /// 2D bulk modulus `(C11 + C12 + C21 + C22) / 4`.
    pub fn bulk_modulus(&self) -> f64 {
        (self.c_h[0][0] + self.c_h[0][1] + self.c_h[1][0] + self.c_h[1][1]) / 4.0
    }
}

struct CellModel {
    cell: PeriodicCell,
    edofs: Vec<[usize; 8]>,
    redofs: Vec<[usize; 8]>,
    pattern: AssemblyPattern,
    ke: Matrix8,
    /// Affine displacement of each element for each test strain.
    affine: Vec<[[f64; 8]; 3]>,
}

impl CellModel {
    fn new(grid: Grid, material: &Material) -> Result<Self> {
        let cell = periodic_dof_map(grid)?;
        let edofs = grid.connectivity();
        let redofs: Vec<[usize; 8]> = edofs.iter().map(|d| d.map(|x| cell.reduced_dof(x))).collect();
        let pattern = AssemblyPattern::new(cell.n_independent(), 8, redofs.iter().map(|d| &d[..]));
        let affine = edofs
            .iter()
            .map(|dofs| {
                TEST_STRAINS.map(|[exx, eyy, gxy]| {
                    let mut ue = [0.0; 8];
                    for a in 0..4 {
                        let (x, y) = grid.node_coords(dofs[2 * a] / 2);
                        ue[2 * a] = exx * x + 0.5 * gxy * y;
                        ue[2 * a + 1] = 0.5 * gxy * x + eyy * y;
                    }
                    ue
                })
            })
            .collect();
        Ok(Self {
            cell,
            edofs,
            redofs,
            pattern,
            ke: element_stiffness(material)?,
            affine,
        })
    }

    fn homogenize(&self, rho: &[f64], penal: f64, material: &Material, method: SolveMethod) -> Result<Homogenization> {
        let grid = self.cell.grid();
        if rho.len() != grid.n_elements() {
            return Err(Error::shape(format!("{} densities", grid.n_elements()), rho.len()));
        }
        let moduli: Vec<f64> = rho.iter().map(|&r| material.simp(r, penal)).collect();
        let k = self.pattern.assemble_scaled(&moduli, &flatten8(&self.ke));
        // anchor one node against rigid translation
        let solver = SpdSolver::new(k, &[0, 1], method)?;

        let n_red = self.cell.n_independent();
        let mut chi: Vec<[[f64; 8]; 3]> = self.affine.clone();
        for s in 0..3 {
            let mut rhs = vec![0.0; n_red];
            for (e, rdofs) in self.redofs.iter().enumerate() {
                let ue = &self.affine[e][s];
                for i in 0..8 {
                    let v: f64 = (0..8).map(|j| self.ke[i][j] * ue[j]).sum();
                    rhs[rdofs[i]] -= moduli[e] * v;
                }
            }
            let fluct = solver.solve(&rhs)?;
            for (e, rdofs) in self.redofs.iter().enumerate() {
                for i in 0..8 {
                    chi[e][s][i] += fluct[rdofs[i]];
                }
            }
        }

        let area = grid.n_elements() as f64;
        let mut c_h = [[0.0; 3]; 3];
        let mutual: Vec<[[f64; 3]; 3]> = chi
            .iter()
            .zip(&moduli)
            .map(|(x, &m)| {
                let mut q = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in i..3 {
                        let v = quad_form(&self.ke, &x[i], &x[j]) / area;
                        q[i][j] = v;
                        q[j][i] = v;
                    }
                }
                for i in 0..3 {
                    for j in 0..3 {
                        c_h[i][j] += m * q[i][j];
                    }
                }
                q
            })
            .collect();
        debug_assert_eq!(self.edofs.len(), mutual.len());
        Ok(Homogenization { c_h, mutual })
    }
}

pub fn homogenize(rho: &DensityField, penal: f64, material: &Material, cell: &PeriodicCell) -> Result<Homogenization> {
    homogenize_with(rho, penal, material, cell, SolveMethod::Direct)
}

pub fn homogenize_with(
    rho: &DensityField,
    penal: f64,
    material: &Material,
    cell: &PeriodicCell,
    method: SolveMethod,
) -> Result<Homogenization> {
    if rho.grid() != cell.grid() {
        return Err(Error::shape("density on the cell grid", "different grid"));
    }
    CellModel::new(cell.grid(), material)?.homogenize(rho.values(), penal, material, method)
}

/// Negative bulk stiffness `−(C11 + C12 + C21 + C22)` and its sensitivities.
pub fn bulk_objective(h: &Homogenization, rho: &[f64], penal: f64, material: &Material) -> Result<(f64, Vec<f64>)> {
    if rho.len() != h.mutual.len() {
        return Err(Error::shape(format!("{} densities", h.mutual.len()), rho.len()));
    }
    let obj = -(h.c_h[0][0] + h.c_h[0][1] + h.c_h[1][0] + h.c_h[1][1]);
    let dc = rho
        .iter()
        .zip(&h.mutual)
        .map(|(&r, q)| -material.simp_derivative(r, penal) * (q[0][0] + q[0][1] + q[1][0] + q[1][1]))
        .collect();
    Ok((obj, dc))
}

pub fn solve_micro(cfg: &MicroConfig) -> Result<Solution> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let model = CellModel::new(grid, &cfg.material)?;
    let kernel = FilterKernel::periodic(grid, cfg.rmin)?;
    let dv = vec![1.0; grid.n_elements()];
    let mut rho = cfg.initial_design()?;
    let mut history = Vec::new();
    for _ in 0..cfg.max_iters {
        let h = model.homogenize(&rho, cfg.penal, &cfg.material, cfg.solver)?;
        let (_, dc) = bulk_objective(&h, &rho, cfg.penal, &cfg.material)?;
        let dc = sensitivity_filter(&rho, &dc, &kernel)?;
        let next = oc_update(&rho, &dc, &dv, cfg.vf_target, cfg.move_limit)?;
        let change = max_change(&rho, &next);
        rho = next;
        history.push(IterationRecord {
            objective: h.bulk_modulus(),
            change,
            volume: mean(&rho),
        });
        if change < cfg.change_tol {
            break;
        }
    }
    let density = DensityField::new(grid, rho)?;
    let objective = evaluate_micro_design(&density, cfg)?;
    Ok(Solution {
        density,
        objective,
        iterations: history.len(),
        history,
    })
}

/// Bulk modulus `K_H` of a possibly gray cell design.
pub fn evaluate_micro_design(rho: &DensityField, cfg: &MicroConfig) -> Result<f64> {
    cfg.validate()?;
    if rho.grid() != cfg.grid()? {
        return Err(Error::shape(
            format!("{}x{} design", cfg.nelx, cfg.nely),
            format!("{}x{}", rho.grid().nelx(), rho.grid().nely()),
        ));
    }
    let model = CellModel::new(cfg.grid()?, &cfg.material)?;
    Ok(model
        .homogenize(rho.values(), cfg.penal, &cfg.material, cfg.solver)?
        .bulk_modulus())
}
