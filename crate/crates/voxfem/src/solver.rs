use serde::{Deserialize, Serialize};

use crate::multigrid::{Multigrid, StencilMatrix};
use crate::{
    element_stiffness, DensityField, DisplacementField, ElementMatrix, FemError, FemProblem,
    GridDims, StrainEnergyField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    /// Inverse of the operator diagonal.
    #[default]
    Jacobi,
    /// One geometric multigrid V-cycle. Falls back to Jacobi smoothing on
    /// grids with odd element counts.
    Multigrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once `‖f - Ku‖ / ‖f‖` drops to this value.
    pub rel_tol: f64,
    /// Iteration cap; `None` means ten times the number of DOFs.
    pub max_iters: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_iters: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

enum Precond {
    Jacobi(Vec<f64>),
    Multigrid(Multigrid),
}

impl Precond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Jacobi(inv_diag) => {
                for i in 0..r.len() {
                    z[i] = r[i] * inv_diag[i];
                }
            }
            Precond::Multigrid(mg) => mg.precondition(r, z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Matrix-free global stiffness `K(ρ)` with fixed DOFs replaced by identity
/// rows and columns.
pub struct StiffnessOperator {
    dims: GridDims,
    ke: Box<ElementMatrix>,
    moduli: Vec<f64>,
    fixed: Vec<bool>,
}

impl StiffnessOperator {
    pub fn new(problem: &FemProblem, density: &DensityField) -> Result<Self, FemError> {
        problem.validate()?;
        if density.dims() != problem.dims {
            return Err(FemError::DimensionMismatch {
                expected: problem.dims.to_string(),
                found: density.dims().to_string(),
            });
        }
        let m = &problem.material;
        Ok(Self {
            dims: problem.dims,
            ke: Box::new(element_stiffness(m)),
            moduli: density.values().iter().map(|&r| m.youngs(r)).collect(),
            fixed: problem.fixed_dof_mask(),
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.fixed.len()
    }

    /// `out = K u`. Elements are visited in index order so the result is
    /// bitwise reproducible.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let d = &self.dims;
        let ke = &*self.ke;
        let mut ue = [0.0; 24];
        let mut dofs = [0usize; 24];
        for k in 0..d.nz {
            for j in 0..d.ny {
                for i in 0..d.nx {
                    let e = d.element_index(i, j, k);
                    let modulus = self.moduli[e];
                    for (a, &n) in d.element_nodes(i, j, k).iter().enumerate() {
                        for c in 0..3 {
                            let dof = 3 * n + c;
                            dofs[3 * a + c] = dof;
                            ue[3 * a + c] = if self.fixed[dof] { 0.0 } else { u[dof] };
                        }
                    }
                    // K_e is symmetric, so accumulate columns: an axpy per
                    // DOF vectorizes where a row dot product would not.
                    let mut acc = [0.0; 24];
                    for c in 0..24 {
                        let col = &ke[c];
                        let uc = ue[c];
                        for r in 0..24 {
                            acc[r] += col[r] * uc;
                        }
                    }
                    for r in 0..24 {
                        out[dofs[r]] += modulus * acc[r];
                    }
                }
            }
        }
        for (dof, &fixed) in self.fixed.iter().enumerate() {
            if fixed {
                out[dof] = u[dof];
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let d = &self.dims;
        let mut diag = vec![0.0; self.n_dofs()];
        for k in 0..d.nz {
            for j in 0..d.ny {
                for i in 0..d.nx {
                    let modulus = self.moduli[d.element_index(i, j, k)];
                    for (a, &n) in d.element_nodes(i, j, k).iter().enumerate() {
                        for c in 0..3 {
                            diag[3 * n + c] += modulus * self.ke[3 * a + c][3 * a + c];
                        }
                    }
                }
            }
        }
        for (dof, &fixed) in self.fixed.iter().enumerate() {
            if fixed {
                diag[dof] = 1.0;
            }
        }
        diag
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `K(ρ) u = f` with default options.
pub fn solve(problem: &FemProblem, density: &DensityField) -> Result<DisplacementField, FemError> {
    solve_with(problem, density, &SolverOptions::default(), None).map(|(u, _)| u)
}

/// Jacobi-preconditioned conjugate gradients, optionally warm-started.
pub fn solve_with(
    problem: &FemProblem,
    density: &DensityField,
    opts: &SolverOptions,
    initial: Option<&DisplacementField>,
) -> Result<(DisplacementField, SolveStats), FemError> {
    let op = StiffnessOperator::new(problem, density)?;
    let n = op.n_dofs();
    let f = problem.load_vector();
    let f_norm = dot(&f, &f).sqrt();
    if f_norm == 0.0 {
        return Ok((
            DisplacementField::zeros(&problem.dims),
            SolveStats { iterations: 0, residual: 0.0 },
        ));
    }
    let mut x = match initial {
        Some(u) if u.values.len() == n => {
            let mut x = u.values.clone();
            for (v, &fixed) in x.iter_mut().zip(&op.fixed) {
                if fixed {
                    *v = 0.0;
                }
            }
            x
        }
        _ => vec![0.0; n],
    };
    let precond = match opts.preconditioner {
        Preconditioner::Jacobi => Precond::Jacobi(op.diagonal().iter().map(|d| 1.0 / d).collect()),
        Preconditioner::Multigrid => {
            let stencil = StencilMatrix::assemble(op.dims, &op.ke, &op.moduli, &op.fixed);
            Precond::Multigrid(Multigrid::new(stencil, &op.fixed))
        }
    };
    let mut q = vec![0.0; n];
    op.apply(&x, &mut q);
    let mut r: Vec<f64> = f.iter().zip(&q).map(|(a, b)| a - b).collect();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iters = opts.max_iters.unwrap_or(10 * n);
    let mut residual = dot(&r, &r).sqrt() / f_norm;
    let mut it = 0;
    while residual > opts.rel_tol {
        if it >= max_iters {
            return Err(FemError::NonConvergence {
                iterations: it,
                residual,
            });
        }
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(FemError::SingularSystem(format!(
                "non-positive curvature pᵀKp = {pq:e} at iteration {it}"
            )));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        precond.apply(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        residual = dot(&r, &r).sqrt() / f_norm;
        it += 1;
    }
    Ok((
        DisplacementField { values: x },
        SolveStats {
            iterations: it,
            residual,
        },
    ))
}

/// `u_eᵀ K_e u_e` per element at unit Young's modulus.
pub fn element_energies(problem: &FemProblem, displacements: &DisplacementField) -> Vec<f64> {
    let d = &problem.dims;
    let ke = element_stiffness(&problem.material);
    let u = &displacements.values;
    let mut out = vec![0.0; d.n_elements()];
    let mut ue = [0.0; 24];
    for k in 0..d.nz {
        for j in 0..d.ny {
            for i in 0..d.nx {
                for (a, &n) in d.element_nodes(i, j, k).iter().enumerate() {
                    ue[3 * a..3 * a + 3].copy_from_slice(&u[3 * n..3 * n + 3]);
                }
                let mut acc = 0.0;
                for r in 0..24 {
                    let mut row = 0.0;
                    for c in 0..24 {
                        row += ke[r][c] * ue[c];
                    }
                    acc += ue[r] * row;
                }
                out[d.element_index(i, j, k)] = acc;
            }
        }
    }
    out
}

/// Compliance `c = fᵀu`.
pub fn compliance(problem: &FemProblem, _density: &DensityField, displacements: &DisplacementField) -> f64 {
    dot(&problem.load_vector(), &displacements.values)
}

/// Compliance as `Σ_e E(ρ_e) u_eᵀ K_e u_e`.
pub fn compliance_element_sum(
    problem: &FemProblem,
    density: &DensityField,
    displacements: &DisplacementField,
) -> f64 {
    element_energies(problem, displacements)
        .iter()
        .zip(density.values())
        .map(|(w, &r)| problem.material.youngs(r) * w)
        .sum()
}

/// Element strain energies `½ E(ρ_e) u_eᵀ K_e u_e`, clipped and normalized.
pub fn strain_energy_field(
    problem: &FemProblem,
    density: &DensityField,
    displacements: &DisplacementField,
) -> StrainEnergyField {
    let raw: Vec<f64> = element_energies(problem, displacements)
        .iter()
        .zip(density.values())
        .map(|(w, &r)| 0.5 * problem.material.youngs(r) * w)
        .collect();
    StrainEnergyField::from_raw(problem.dims, &raw)
}
