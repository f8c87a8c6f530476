//! Cantilever compliance minimization with optimality-criteria updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{element_stiffness, DensityField, Grid, Material, SolveMethod, SpdSolver, StructuralMesh};
use crate::problems::{IterationRecord, Solution};
use crate::topopt::{oc_update, sensitivity_filter, FilterKernel};

/// Cantilever: left edge clamped, downward point load of `load_magnitude` at
/// the mid-height node of the right edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplianceConfig {
    pub nelx: usize,
    pub nely: usize,
    pub vf_target: f64,
    pub penal: f64,
    pub rmin: f64,
    pub move_limit: f64,
    pub max_iters: usize,
    pub change_tol: f64,
    pub load_magnitude: f64,
    pub material: Material,
    pub solver: SolveMethod,
}

impl Default for ComplianceConfig {
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
            load_magnitude: 1.0,
            material: Material::default(),
            solver: SolveMethod::Direct,
        }
    }
}

impl ComplianceConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nelx, self.nely)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
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
            "left edge clamped (x and y at every left-edge node); downward point load {} at right-edge node row {} of {}",
            self.load_magnitude,
            self.nely / 2,
            self.nely
        )
    }

    fn fixed_dofs(&self, grid: Grid) -> Vec<usize> {
        (0..=grid.nely())
            .flat_map(|row| {
                let n = grid.node(0, row);
                [2 * n, 2 * n + 1]
            })
            .collect()
    }

    fn load(&self, grid: Grid) -> Vec<f64> {
        let mut f = vec![0.0; grid.n_dofs()];
        f[2 * grid.node(grid.nelx(), grid.nely() / 2) + 1] = -self.load_magnitude;
        f
    }
}

struct Analysis {
    mesh: StructuralMesh,
    ke: crate::fem::Matrix8,
    fixed: Vec<usize>,
    load: Vec<f64>,
}

impl Analysis {
    fn new(cfg: &ComplianceConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        Ok(Self {
            mesh: StructuralMesh::new(grid),
            ke: element_stiffness(&cfg.material)?,
            fixed: cfg.fixed_dofs(grid),
            load: cfg.load(grid),
        })
    }

    /// Compliance and unit-modulus element energies.
    fn run(&self, cfg: &ComplianceConfig, rho: &[f64]) -> Result<(f64, Vec<f64>)> {
        let k = self.mesh.assemble(rho, cfg.penal, &cfg.material, &self.ke)?;
        let u = SpdSolver::new(k, &self.fixed, cfg.solver)?.solve(&self.load)?;
        self.mesh.compliance(&u, rho, cfg.penal, &cfg.material, &self.ke)
    }
}

pub fn solve_cantilever(cfg: &ComplianceConfig) -> Result<Solution> {
    let analysis = Analysis::new(cfg)?;
    let grid = cfg.grid()?;
    let kernel = FilterKernel::new(grid, cfg.rmin)?;
    let n = grid.n_elements();
    let dv = vec![1.0; n];
    let mut rho = vec![cfg.vf_target; n];
    let mut history = Vec::new();
    for _ in 0..cfg.max_iters {
        let (c, ce) = analysis.run(cfg, &rho)?;
        let dc: Vec<f64> = rho
            .iter()
            .zip(&ce)
            .map(|(&r, &e)| -cfg.material.simp_derivative(r, cfg.penal) * e)
            .collect();
        let dc = sensitivity_filter(&rho, &dc, &kernel)?;
        let next = oc_update(&rho, &dc, &dv, cfg.vf_target, cfg.move_limit)?;
        let change = max_change(&rho, &next);
        rho = next;
        history.push(IterationRecord {
            objective: c,
            change,
            volume: mean(&rho),
        });
        if change < cfg.change_tol {
            break;
        }
    }
    let density = DensityField::new(grid, rho)?;
    let objective = evaluate_compliance_design(&density, cfg)?;
    Ok(Solution {
        density,
        objective,
        iterations: history.len(),
        history,
    })
}

/// Compliance `f^T u` of an arbitrary (possibly gray) design.
pub fn evaluate_compliance_design(rho: &DensityField, cfg: &ComplianceConfig) -> Result<f64> {
    if rho.grid() != cfg.grid()? {
        return Err(Error::shape(
            format!("{}x{} design", cfg.nelx, cfg.nely),
            format!("{}x{}", rho.grid().nelx(), rho.grid().nely()),
        ));
    }
    Ok(Analysis::new(cfg)?.run(cfg, rho.values())?.0)
}

pub(crate) fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
