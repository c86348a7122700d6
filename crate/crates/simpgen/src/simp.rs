use serde::{Deserialize, Serialize};
use voxfem::{
    element_energies, solve_with, strain_energy_field, DensityField, DisplacementField, FemProblem, SolverOptions,
    StrainEnergyField,
};

use crate::{oc_update, SensitivityFilter, SimpConfig, SimpError};

/// Per-iteration trace. Entry `i` holds the compliance of the design that
/// entered iteration `i`, and the volume fraction and largest density
/// change of the design it produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimpHistory {
    pub compliance: Vec<f64>,
    pub volume_fraction: Vec<f64>,
    pub max_change: Vec<f64>,
}

impl SimpHistory {
    pub fn iterations(&self) -> usize {
        self.compliance.len()
    }
}

#[derive(Debug, Clone)]
pub struct SimpOutcome {
    /// Normalized strain energy of the unoptimized domain at uniform
    /// density `volfrac`.
    pub initial_energy: StrainEnergyField,
    pub density: DensityField,
    pub history: SimpHistory,
    /// Compliance of the returned density.
    pub compliance: f64,
}

/// Minimizes compliance at fixed volume: solve, sensitivities, filter,
/// optimality-criteria step, until the largest density change drops below
/// the tolerance or the iteration budget runs out.
pub fn run_simp(problem: &FemProblem, cfg: &SimpConfig) -> Result<SimpOutcome, SimpError> {
    cfg.validate()?;
    problem.validate()?;
    let dims = problem.dims;
    let material = problem.material;
    let opts = SolverOptions {
        rel_tol: cfg.cg_tol,
        max_iters: None,
        preconditioner: cfg.preconditioner,
    };
    let filter = SensitivityFilter::new(dims, cfg.filter_radius);

    let mut density = DensityField::uniform(dims, cfg.volfrac);
    let (mut u, _) = solve_with(problem, &density, &opts, None)?;
    let initial_energy = strain_energy_field(problem, &density, &u);

    let mut history = SimpHistory::default();
    for it in 0..cfg.max_iters {
        if it > 0 {
            u = solve_with(problem, &density, &opts, Some(&u))?.0;
        }
        let energies = element_energies(problem, &u);
        let rho = density.values();
        let c: f64 = energies.iter().zip(rho).map(|(w, &r)| material.youngs(r) * w).sum();
        let sens: Vec<f64> = energies
            .iter()
            .zip(rho)
            .map(|(w, &r)| -material.youngs_derivative(r) * w)
            .collect();
        let filtered = filter.apply(&sens, rho);
        let next = oc_update(rho, &filtered, cfg)?;
        let change = next
            .iter()
            .zip(rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        history.compliance.push(c);
        history
            .volume_fraction
            .push(next.iter().sum::<f64>() / next.len() as f64);
        history.max_change.push(change);
        density = DensityField::new(dims, next)?;
        log::trace!("simp it {it}: c = {c:.6e}, change = {change:.4}");
        if change < cfg.convergence_tol {
            break;
        }
    }

    let (u, _) = solve_with(problem, &density, &opts, Some(&u))?;
    let compliance = final_compliance(problem, &density, &u);
    Ok(SimpOutcome {
        initial_energy,
        density,
        history,
        compliance,
    })
}

fn final_compliance(problem: &FemProblem, density: &DensityField, u: &DisplacementField) -> f64 {
    voxfem::compliance(problem, density, u)
}
