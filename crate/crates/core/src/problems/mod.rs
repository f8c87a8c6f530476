//! The three data generators and their design evaluators.

pub mod compliance;
pub mod homog;
pub mod pressure;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{DensityField, Grid};

pub use compliance::{evaluate_compliance_design, solve_cantilever, ComplianceConfig};
pub use homog::{
    bulk_objective, evaluate_micro_design, homogenize, periodic_dof_map, solve_micro, Homogenization, MicroConfig,
    PeriodicCell,
};
pub use pressure::{
    analyze_arch, arch_sensitivities, assemble_darcy, evaluate_arch_design, pressure_to_loads, solve_arch,
    solve_pressure_field, ArchAnalysis, PressureConfig, PressureField,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Cantilever,
    Arch,
    Micro,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [ProblemKind::Cantilever, ProblemKind::Arch, ProblemKind::Micro];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Cantilever => "cantilever",
            ProblemKind::Arch => "arch",
            ProblemKind::Micro => "micro",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cantilever" => Ok(ProblemKind::Cantilever),
            "arch" => Ok(ProblemKind::Arch),
            "micro" => Ok(ProblemKind::Micro),
            other => Err(Error::InvalidInput(format!(
                "unknown problem `{other}` (expected cantilever, arch or micro)"
            ))),
        }
    }
}

/// Physics, discretization and optimizer settings of one generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum ProblemConfig {
    Cantilever(ComplianceConfig),
    Arch(PressureConfig),
    Micro(MicroConfig),
}

/// One optimizer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub objective: f64,
    pub change: f64,
    pub volume: f64,
}

/// Result of an optimization run.
#[derive(Clone, Debug)]
pub struct Solution {
    pub density: DensityField,
    /// Compliance for the cantilever and arch, bulk modulus `K_H` for the cell.
    pub objective: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

impl ProblemConfig {
    /// Defaults for `kind` on an `nelx × nely` grid at volume fraction `vf`.
    pub fn new(kind: ProblemKind, nelx: usize, nely: usize, vf: f64) -> Self {
        match kind {
            ProblemKind::Cantilever => ProblemConfig::Cantilever(ComplianceConfig {
                nelx,
                nely,
                vf_target: vf,
                ..ComplianceConfig::default()
            }),
            ProblemKind::Arch => ProblemConfig::Arch(PressureConfig {
                nelx,
                nely,
                vf_target: vf,
                ..PressureConfig::default()
            }),
            ProblemKind::Micro => ProblemConfig::Micro(MicroConfig {
                nelx,
                nely,
                vf_target: vf,
                ..MicroConfig::default()
            }),
        }
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            ProblemConfig::Cantilever(_) => ProblemKind::Cantilever,
            ProblemConfig::Arch(_) => ProblemKind::Arch,
            ProblemConfig::Micro(_) => ProblemKind::Micro,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        match self {
            ProblemConfig::Cantilever(c) => c.grid(),
            ProblemConfig::Arch(c) => c.grid(),
            ProblemConfig::Micro(c) => c.grid(),
        }
    }

    pub fn vf_target(&self) -> f64 {
        match self {
            ProblemConfig::Cantilever(c) => c.vf_target,
            ProblemConfig::Arch(c) => c.vf_target,
            ProblemConfig::Micro(c) => c.vf_target,
        }
    }

    pub fn set_vf_target(&mut self, vf: f64) {
        match self {
            ProblemConfig::Cantilever(c) => c.vf_target = vf,
            ProblemConfig::Arch(c) => c.vf_target = vf,
            ProblemConfig::Micro(c) => c.vf_target = vf,
        }
    }

    pub fn with_vf_target(&self, vf: f64) -> Self {
        let mut c = self.clone();
        c.set_vf_target(vf);
        c
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProblemConfig::Cantilever(c) => c.validate(),
            ProblemConfig::Arch(c) => c.validate(),
            ProblemConfig::Micro(c) => c.validate(),
        }
    }

    pub fn boundary_conditions(&self) -> String {
        match self {
            ProblemConfig::Cantilever(c) => c.boundary_conditions(),
            ProblemConfig::Arch(c) => c.boundary_conditions(),
            ProblemConfig::Micro(c) => c.boundary_conditions(),
        }
    }

    /// Name of the value reported as the objective.
    pub fn objective_name(&self) -> &'static str {
        match self {
            ProblemConfig::Micro(_) => "bulk_modulus",
            _ => "compliance",
        }
    }

    /// Runs the matching optimizer.
    pub fn solve(&self) -> Result<Solution> {
        match self {
            ProblemConfig::Cantilever(c) => solve_cantilever(c),
            ProblemConfig::Arch(c) => solve_arch(c),
            ProblemConfig::Micro(c) => solve_micro(c),
        }
    }

    /// Objective of an arbitrary design under this configuration's physics.
    pub fn evaluate(&self, rho: &DensityField) -> Result<f64> {
        match self {
            ProblemConfig::Cantilever(c) => evaluate_compliance_design(rho, c),
            ProblemConfig::Arch(c) => evaluate_arch_design(rho, c),
            ProblemConfig::Micro(c) => evaluate_micro_design(rho, c),
        }
    }
}

pub(crate) fn check_common(vf: f64, penal: f64, rmin: f64) -> Result<()> {
    if !(vf > 0.0 && vf < 1.0) {
        return Err(Error::InvalidInput(format!(
            "volume fraction must lie in (0, 1), got {vf}"
        )));
    }
    if !(penal >= 1.0) {
        return Err(Error::InvalidInput(format!("penal must be >= 1, got {penal}")));
    }
    if !(rmin > 0.0) {
        return Err(Error::InvalidInput(format!("rmin must be positive, got {rmin}")));
    }
    Ok(())
}
