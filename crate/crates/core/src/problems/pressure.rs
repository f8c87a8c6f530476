//! Compliance minimization under design-dependent pressure loads.
//!
//! Pressure is carried by a Darcy flow whose conductivity drops and whose
//! drainage rises with the element density, both through a smoothed
//! Heaviside step. The nodal pressure field is turned into consistent
//! structural loads, so the load moves with the evolving design.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    element_stiffness, flow_matrix, mass_matrix, pressure_coupling, AssemblyPattern, Coupling, CsrMatrix,
    DensityField, Grid, Material, Matrix4, Matrix8, SolveMethod, SpdSolver, StructuralMesh,
};
use crate::problems::compliance::{max_change, mean};
use crate::problems::{IterationRecord, Solution};
use crate::topopt::{heaviside, sensitivity_filter, Bounds, FilterKernel, MmaParams, MmaState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureConfig {
    pub nelx: usize,
    pub nely: usize,
    pub vf_target: f64,
    pub penal: f64,
    pub rmin: f64,
    /// Heaviside threshold of the flow and drainage interpolation.
    pub etaf: f64,
    /// Heaviside sharpness of the flow and drainage interpolation.
    pub betaf: f64,
    /// Include the load-sensitivity term.
    pub lst: bool,
    pub maxit: usize,
    /// Inlet pressure.
    pub p0: f64,
    /// Void flow coefficient.
    pub k_max: f64,
    /// Solid-to-void flow coefficient ratio.
    pub eps_k: f64,
    /// Pressure drop ratio reached at `drainage_distance` inside solid.
    pub drainage_ratio: f64,
    /// Penetration depth of the pressure into solid, in elements.
    pub drainage_distance: f64,
    /// Supported bottom-edge nodes per corner, in elements.
    pub support_width: usize,
    pub move_limit: f64,
    pub material: Material,
    pub solver: SolveMethod,
}

impl Default for PressureConfig {
    fn default() -> Self {
        Self {
            nelx: 100,
            nely: 100,
            vf_target: 0.25,
            penal: 3.0,
            rmin: 2.4,
            etaf: 0.2,
            betaf: 8.0,
            lst: true,
            maxit: 100,
            p0: 1.0,
            k_max: 1.0,
            eps_k: 1e-7,
            drainage_ratio: 0.1,
            drainage_distance: 2.0,
            support_width: 5,
            move_limit: 0.1,
            material: Material::default(),
            solver: SolveMethod::Direct,
        }
    }
}

impl PressureConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nelx, self.nely)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.material.validate()?;
        super::check_common(self.vf_target, self.penal, self.rmin)?;
        if !(self.etaf > 0.0 && self.etaf < 1.0) || !(self.betaf > 0.0) {
            return Err(Error::InvalidInput(format!(
                "need 0 < etaf < 1 and betaf > 0, got {} and {}",
                self.etaf, self.betaf
            )));
        }
        if !(self.eps_k > 0.0 && self.eps_k < 1.0) || !(self.k_max > 0.0) {
            return Err(Error::InvalidInput("need k_max > 0 and 0 < eps_k < 1".into()));
        }
        if !(self.drainage_ratio > 0.0 && self.drainage_ratio < 1.0) || !(self.drainage_distance > 0.0) {
            return Err(Error::InvalidInput(
                "need 0 < drainage_ratio < 1 and drainage_distance > 0".into(),
            ));
        }
        if self.maxit == 0 || !(self.move_limit > 0.0) || !self.p0.is_finite() {
            return Err(Error::InvalidInput("maxit, move limit and p0 must be valid".into()));
        }
        Ok(())
    }

    /// Drainage coefficient `K_s (ln r / Δs)²` with `K_s` the solid flow
    /// coefficient, so pressure falls to `drainage_ratio · p0` about
    /// `drainage_distance` elements into solid.
    pub fn drainage_coefficient(&self) -> f64 {
        let solid = self.eps_k * self.k_max;
        solid * (self.drainage_ratio.ln() / self.drainage_distance).powi(2)
    }

    /// `(K(ρ), K'(ρ), D(ρ), D'(ρ))`.
    pub fn coefficients(&self, rho: f64) -> (f64, f64, f64, f64) {
        let (h, dh) = heaviside(rho, self.etaf, self.betaf);
        let span = self.k_max * (1.0 - self.eps_k);
        let ds = self.drainage_coefficient();
        (self.k_max - span * h, -span * dh, ds * h, ds * dh)
    }

    pub fn boundary_conditions(&self) -> String {
        format!(
            "pressure {} on the bottom edge, zero on the top edge, sealed sides; \
             x and y fixed at bottom-edge nodes within {} elements of each bottom corner",
            self.p0, self.support_width
        )
    }

    fn inlet_nodes(grid: Grid) -> Vec<usize> {
        (0..=grid.nelx()).map(|c| grid.node(c, grid.nely())).collect()
    }

    fn outlet_nodes(grid: Grid) -> Vec<usize> {
        (0..=grid.nelx()).map(|c| grid.node(c, 0)).collect()
    }

    fn fixed_dofs(&self, grid: Grid) -> Vec<usize> {
        (0..=grid.nelx())
            .filter(|&c| c <= self.support_width || c + self.support_width >= grid.nelx())
            .flat_map(|c| {
                let n = grid.node(c, grid.nely());
                [2 * n, 2 * n + 1]
            })
            .collect()
    }
}

/// Nodal pressures, one value per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureField {
    pub p: Vec<f64>,
}

struct FlowMesh {
    nodes: Vec<[usize; 4]>,
    pattern: AssemblyPattern,
    dirichlet: Vec<usize>,
    values: Vec<f64>,
}

impl FlowMesh {
    fn new(grid: Grid, p0: f64) -> Self {
        let nodes = grid.node_connectivity();
        let pattern = AssemblyPattern::new(grid.n_nodes(), 4, nodes.iter().map(|n| &n[..]));
        let inlet = PressureConfig::inlet_nodes(grid);
        let outlet = PressureConfig::outlet_nodes(grid);
        let values = inlet.iter().map(|_| p0).chain(outlet.iter().map(|_| 0.0)).collect();
        let dirichlet = inlet.into_iter().chain(outlet).collect();
        Self {
            nodes,
            pattern,
            dirichlet,
            values,
        }
    }

    fn assemble(&self, rho: &[f64], cfg: &PressureConfig) -> CsrMatrix {
        let (flow, mass) = (flow_matrix(), mass_matrix());
        self.pattern.assemble(|e, buf| {
            let (k, _, d, _) = cfg.coefficients(rho[e]);
            for a in 0..4 {
                for b in 0..4 {
                    buf[4 * a + b] = k * flow[a][b] + d * mass[a][b];
                }
            }
        })
    }
}

fn check_density(rho: &[f64], grid: Grid) -> Result<()> {
    if rho.len() != grid.n_elements() {
        return Err(Error::shape(format!("{} densities", grid.n_elements()), rho.len()));
    }
    Ok(())
}

/// Flow matrix `Σ_e K(ρ_e) A_flow + D(ρ_e) A_mass` over grid nodes.
pub fn assemble_darcy(rho: &DensityField, cfg: &PressureConfig) -> Result<CsrMatrix> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    check_density(rho.values(), grid)?;
    Ok(FlowMesh::new(grid, cfg.p0).assemble(rho.values(), cfg))
}

/// Pressure with `p0` on the bottom edge and zero on the top edge.
pub fn solve_pressure_field(a: &CsrMatrix, cfg: &PressureConfig) -> Result<PressureField> {
    let grid = cfg.grid()?;
    if a.n() != grid.n_nodes() {
        return Err(Error::shape(format!("{} nodes", grid.n_nodes()), a.n()));
    }
    let mesh = FlowMesh::new(grid, cfg.p0);
    let solver = SpdSolver::new(a.clone(), &mesh.dirichlet, cfg.solver)?;
    let p = solver.solve_prescribed(&vec![0.0; a.n()], &mesh.values)?;
    Ok(PressureField { p })
}

/// Consistent nodal forces `f = −T p` from the pressure gradient.
pub fn pressure_to_loads(p: &PressureField, grid: Grid) -> Result<Vec<f64>> {
    if p.p.len() != grid.n_nodes() {
        return Err(Error::shape(format!("{} nodal pressures", grid.n_nodes()), p.p.len()));
    }
    let t = pressure_coupling();
    let mut f = vec![0.0; grid.n_dofs()];
    for (ex, ey) in grid.element_coords() {
        let nodes = grid.element_nodes(ex, ey);
        let dofs = grid.element_dofs(ex, ey);
        let pe = nodes.map(|n| p.p[n]);
        for (i, &d) in dofs.iter().enumerate() {
            f[d] -= (0..4).map(|b| t[i][b] * pe[b]).sum::<f64>();
        }
    }
    Ok(f)
}

/// Everything one analysis of a design produces.
struct ArchState {
    flow_solver: SpdSolver,
    p: Vec<f64>,
    u: Vec<f64>,
    compliance: f64,
    energies: Vec<f64>,
}

struct ArchModel {
    grid: Grid,
    flow: FlowMesh,
    structure: StructuralMesh,
    ke: Matrix8,
    coupling: Coupling,
    fixed: Vec<usize>,
}

impl ArchModel {
    fn new(cfg: &PressureConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        Ok(Self {
            grid,
            flow: FlowMesh::new(grid, cfg.p0),
            structure: StructuralMesh::new(grid),
            ke: element_stiffness(&cfg.material)?,
            coupling: pressure_coupling(),
            fixed: cfg.fixed_dofs(grid),
        })
    }

    fn analyze(&self, cfg: &PressureConfig, rho: &[f64]) -> Result<ArchState> {
        check_density(rho, self.grid)?;
        let a = self.flow.assemble(rho, cfg);
        let flow_solver = SpdSolver::new(a, &self.flow.dirichlet, cfg.solver)?;
        let p = flow_solver.solve_prescribed(&vec![0.0; self.grid.n_nodes()], &self.flow.values)?;
        let f = pressure_to_loads(&PressureField { p: p.clone() }, self.grid)?;
        let k = self.structure.assemble(rho, cfg.penal, &cfg.material, &self.ke)?;
        let u = SpdSolver::new(k, &self.fixed, cfg.solver)?.solve(&f)?;
        let (compliance, energies) = self.structure.compliance(&u, rho, cfg.penal, &cfg.material, &self.ke)?;
        Ok(ArchState {
            flow_solver,
            p,
            u,
            compliance,
            energies,
        })
    }

    /// Total derivative of the compliance: stiffness term plus, when `lst`
    /// is on, the adjoint term from the design-dependent loads.
    fn sensitivities(&self, cfg: &PressureConfig, rho: &[f64], state: &ArchState) -> Result<Vec<f64>> {
        let mut dc: Vec<f64> = rho
            .iter()
            .zip(&state.energies)
            .map(|(&r, &e)| -cfg.material.simp_derivative(r, cfg.penal) * e)
            .collect();
        if !cfg.lst {
            return Ok(dc);
        }
        // adjoint of the flow problem: A μ = 2 Tᵀ u, μ = 0 on Dirichlet nodes
        let mut rhs = vec![0.0; self.grid.n_nodes()];
        for (e, nodes) in self.flow.nodes.iter().enumerate() {
            let dofs = self.structure.edofs()[e];
            for (b, &node) in nodes.iter().enumerate() {
                rhs[node] += 2.0 * (0..8).map(|i| self.coupling[i][b] * state.u[dofs[i]]).sum::<f64>();
            }
        }
        let mu = state.flow_solver.solve(&rhs)?;
        let (flow, mass) = (flow_matrix(), mass_matrix());
        for (e, nodes) in self.flow.nodes.iter().enumerate() {
            let (_, dk, _, dd) = cfg.coefficients(rho[e]);
            let me = nodes.map(|n| mu[n]);
            let pe = nodes.map(|n| state.p[n]);
            dc[e] += dk * bilinear(&flow, &me, &pe) + dd * bilinear(&mass, &me, &pe);
        }
        Ok(dc)
    }
}

fn bilinear(m: &Matrix4, a: &[f64; 4], b: &[f64; 4]) -> f64 {
    (0..4)
        .map(|i| a[i] * (0..4).map(|j| m[i][j] * b[j]).sum::<f64>())
        .sum()
}

/// Compliance sensitivities for a solved state `(u, p)` of design `rho`.
pub fn arch_sensitivities(u: &[f64], p: &PressureField, rho: &DensityField, cfg: &PressureConfig) -> Result<Vec<f64>> {
    let model = ArchModel::new(cfg)?;
    let grid = model.grid;
    if u.len() != grid.n_dofs() || p.p.len() != grid.n_nodes() {
        return Err(Error::shape(
            format!("{} dofs and {} nodes", grid.n_dofs(), grid.n_nodes()),
            format!("{} and {}", u.len(), p.p.len()),
        ));
    }
    check_density(rho.values(), grid)?;
    let a = model.flow.assemble(rho.values(), cfg);
    let flow_solver = SpdSolver::new(a, &model.flow.dirichlet, cfg.solver)?;
    let energies = model.structure.element_energies(u, &model.ke);
    let compliance = energies
        .iter()
        .zip(rho.values())
        .map(|(&e, &r)| cfg.material.simp(r, cfg.penal) * e)
        .sum();
    let state = ArchState {
        flow_solver,
        p: p.p.clone(),
        u: u.to_vec(),
        compliance,
        energies,
    };
    model.sensitivities(cfg, rho.values(), &state)
}

/// Solved pressure, displacement and compliance of a design.
pub struct ArchAnalysis {
    pub pressure: PressureField,
    pub displacement: Vec<f64>,
    pub compliance: f64,
}

pub fn analyze_arch(rho: &DensityField, cfg: &PressureConfig) -> Result<ArchAnalysis> {
    let model = ArchModel::new(cfg)?;
    let s = model.analyze(cfg, rho.values())?;
    Ok(ArchAnalysis {
        pressure: PressureField { p: s.p },
        displacement: s.u,
        compliance: s.compliance,
    })
}

pub fn solve_arch(cfg: &PressureConfig) -> Result<Solution> {
    let model = ArchModel::new(cfg)?;
    let grid = model.grid;
    let n = grid.n_elements();
    let kernel = FilterKernel::new(grid, cfg.rmin)?;
    let mut mma = MmaState::new(
        n,
        MmaParams {
            move_limit: cfg.move_limit,
            ..MmaParams::default()
        },
    );
    let dg = vec![1.0 / (n as f64 * cfg.vf_target); n];
    let mut rho = vec![cfg.vf_target; n];
    let mut scale = None;
    let mut history = Vec::new();
    for _ in 0..cfg.maxit {
        let state = model.analyze(cfg, &rho)?;
        let dc = model.sensitivities(cfg, &rho, &state)?;
        let dc = sensitivity_filter(&rho, &dc, &kernel)?;
        let s = *scale.get_or_insert(state.compliance.abs().max(f64::MIN_POSITIVE));
        let df: Vec<f64> = dc.iter().map(|v| v / s).collect();
        let g = mean(&rho) / cfg.vf_target - 1.0;
        let next = mma.update(&rho, &df, g, &dg, Bounds::default())?;
        let change = max_change(&rho, &next);
        rho = next;
        history.push(IterationRecord {
            objective: state.compliance,
            change,
            volume: mean(&rho),
        });
    }
    let density = DensityField::new(grid, rho)?;
    let objective = evaluate_arch_design(&density, cfg)?;
    Ok(Solution {
        density,
        objective,
        iterations: history.len(),
        history,
    })
}

/// Full re-analysis (flow, loads, elasticity) of a possibly gray design.
pub fn evaluate_arch_design(rho: &DensityField, cfg: &PressureConfig) -> Result<f64> {
    if rho.grid() != cfg.grid()? {
        return Err(Error::shape(
            format!("{}x{} design", cfg.nelx, cfg.nely),
            format!("{}x{}", rho.grid().nelx(), rho.grid().nely()),
        ));
    }
    Ok(analyze_arch(rho, cfg)?.compliance)
}
