//! Stationary problems with zero Dirichlet data: centered differences for
//! `-Laplace u + f u = g`, finite volumes with harmonic face averages for
//! `-div(f grad u) = g`.

use super::grid::{Grid, GridFunction};
use super::linsolve::SymmetricStencil;
use super::{ForwardProblem, ProblemKind, SolveOutput};
use crate::error::{LabError, Result};

fn check(problem: &ForwardProblem, kind: ProblemKind, f: &GridFunction) -> Result<Grid> {
    if problem.kind != kind {
        return Err(LabError::Argument(format!("expected a {kind:?} problem, got {:?}", problem.kind)));
    }
    let grid = problem.grid()?;
    if *f.grid() != grid {
        return Err(LabError::Argument("coefficient is not on the problem grid".into()));
    }
    Ok(grid)
}

/// Interior neighbour offsets as (axis, +1) steps: east then north.
fn neighbours(grid: &Grid, node: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let a = grid.node_axes(node);
    (0..grid.dim()).flat_map(move |axis| {
        [false, true].into_iter().map(move |up| {
            let mut b = a;
            if up {
                b[axis] += 1;
            } else {
                b[axis] -= 1;
            }
            (axis, grid.node_index(b))
        })
    })
}

/// `-Laplace + f` on the interior unknowns.
pub(crate) fn potential_operator(grid: &Grid, f: &GridFunction) -> SymmetricStencil {
    let (n, dim) = (grid.n(), grid.dim());
    let ih2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut a = SymmetricStencil::zeros(dim, n);
    for k in 0..a.len() {
        a.diag[k] = 2.0 * dim as f64 * ih2 + f.values()[grid.interior_to_node(k)];
        if (k + 1) % n != 0 {
            a.east[k] = -ih2;
        }
        if dim == 2 {
            a.north[k] = -ih2;
        }
    }
    a
}

fn harmonic(p: f64, q: f64) -> f64 {
    2.0 * p * q / (p + q)
}

/// `-div(f grad .)` with harmonic face coefficients.
fn diffusion_operator(grid: &Grid, f: &GridFunction) -> SymmetricStencil {
    let n = grid.n();
    let ih2 = 1.0 / (grid.spacing() * grid.spacing());
    let fv = f.values();
    let mut a = SymmetricStencil::zeros(grid.dim(), n);
    for k in 0..a.len() {
        let p = grid.interior_to_node(k);
        for (axis, q) in neighbours(grid, p) {
            let coef = harmonic(fv[p], fv[q]) * ih2;
            a.diag[k] += coef;
            let ax = grid.node_axes(q);
            let forward = ax[axis] == grid.node_axes(p)[axis] + 1;
            if forward && !grid.is_boundary(q) {
                if axis == 0 {
                    a.east[k] = -coef;
                } else {
                    a.north[k] = -coef;
                }
            }
        }
    }
    a
}

fn interior_values(grid: &Grid, g: &GridFunction) -> Vec<f64> {
    (0..grid.interior_count()).map(|k| g.values()[grid.interior_to_node(k)]).collect()
}

pub(crate) fn embed(grid: &Grid, interior: &[f64], boundary: f64) -> GridFunction {
    let mut values = vec![boundary; grid.node_count()];
    for (k, v) in interior.iter().enumerate() {
        values[grid.interior_to_node(k)] = *v;
    }
    GridFunction::new(*grid, values).expect("node count matches")
}

pub fn solve_potential(problem: &ForwardProblem, f: &GridFunction) -> Result<SolveOutput> {
    let grid = check(problem, ProblemKind::EllipticPotential, f)?;
    let rhs = interior_values(&grid, &problem.source.on_grid(grid));
    let u = potential_operator(&grid, f).solve(&rhs, None)?;
    Ok(SolveOutput::new(embed(&grid, &u, 0.0)))
}

pub fn solve_diffusion(problem: &ForwardProblem, f: &GridFunction) -> Result<SolveOutput> {
    let grid = check(problem, ProblemKind::DiffusionCoefficient, f)?;
    let rhs = interior_values(&grid, &problem.source.on_grid(grid));
    let u = diffusion_operator(&grid, f).solve(&rhs, None)?;
    Ok(SolveOutput::new(embed(&grid, &u, 0.0)))
}

/// Gradient of `v . u(f)` with respect to the node values of `f`.
pub(crate) fn potential_adjoint(f: &GridFunction, u: &GridFunction, v: &[f64]) -> Result<Vec<f64>> {
    let grid = *f.grid();
    let lambda = potential_operator(&grid, f).solve(&interior_values(&grid, &GridFunction::new(grid, v.to_vec())?), None)?;
    let mut grad = vec![0.0; grid.node_count()];
    for (k, l) in lambda.iter().enumerate() {
        let p = grid.interior_to_node(k);
        grad[p] = -l * u.values()[p];
    }
    Ok(grad)
}

pub(crate) fn diffusion_adjoint(f: &GridFunction, u: &GridFunction, v: &[f64]) -> Result<Vec<f64>> {
    let grid = *f.grid();
    let lambda = diffusion_operator(&grid, f).solve(&interior_values(&grid, &GridFunction::new(grid, v.to_vec())?), None)?;
    let lam = embed(&grid, &lambda, 0.0);
    let (fv, uv, lv) = (f.values(), u.values(), lam.values());
    let ih2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut grad = vec![0.0; grid.node_count()];
    for k in 0..grid.interior_count() {
        let p = grid.interior_to_node(k);
        for (_, q) in neighbours(&grid, p) {
            // interior faces are visited from both sides
            if !grid.is_boundary(q) && q < p {
                continue;
            }
            let s = (fv[p] + fv[q]) * (fv[p] + fv[q]);
            let dj_da = -(lv[p] - lv[q]) * (uv[p] - uv[q]) * ih2;
            grad[p] += dj_da * 2.0 * fv[q] * fv[q] / s;
            grad[q] += dj_da * 2.0 * fv[p] * fv[p] / s;
        }
    }
    Ok(grad)
}
