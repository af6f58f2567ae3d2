//! Caputo subdiffusion `D_t^a u - Laplace u + f u = h` with constant
//! boundary value `m_g`, discretized by the L1 scheme on a uniform time mesh.

use statrs::function::gamma::gamma;

use super::elliptic::{embed, potential_operator};
use super::grid::GridFunction;
use super::{ForwardProblem, ProblemKind, SolveOutput};
use crate::error::{LabError, Result};

/// Terminal slice `u(., T)`.
pub fn solve_subdiffusion(problem: &ForwardProblem, f: &GridFunction) -> Result<SolveOutput> {
    if problem.kind != ProblemKind::SubdiffusionPotential {
        return Err(LabError::Argument(format!(
            "expected a SubdiffusionPotential problem, got {:?}",
            problem.kind
        )));
    }
    problem.validate()?;
    let data = problem.subdiffusion.as_ref().expect("validated");
    let grid = problem.grid()?;
    if *f.grid() != grid {
        return Err(LabError::Argument("coefficient is not on the problem grid".into()));
    }
    let a = data.frac_order;
    let steps = data.time_steps;
    let m_g = data.boundary_value;
    let tau = data.final_time / steps as f64;

    // w = u - m_g solves the same equation with source h - f m_g and w = 0 on the boundary
    let source = problem.source.on_grid(grid);
    let u0 = data.u0.on_grid(grid);
    let m = grid.interior_count();
    let nodes: Vec<usize> = (0..m).map(|k| grid.interior_to_node(k)).collect();
    let rhs_src: Vec<f64> = nodes.iter().map(|&p| source.values()[p] - f.values()[p] * m_g).collect();
    let mut w: Vec<f64> = nodes.iter().map(|&p| u0.values()[p] - m_g).collect();

    let c0 = tau.powf(-a) / gamma(2.0 - a);
    let weights: Vec<f64> = (0..steps)
        .map(|j| ((j + 1) as f64).powf(1.0 - a) - (j as f64).powf(1.0 - a))
        .collect();
    let system = potential_operator(&grid, f).shifted(c0);

    let mut increments: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut hist = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for n in 1..=steps {
        hist.iter_mut().for_each(|h| *h = 0.0);
        for j in 1..n {
            let b = weights[j];
            for (h, d) in hist.iter_mut().zip(&increments[n - j - 1]) {
                *h += b * d;
            }
        }
        for k in 0..m {
            rhs[k] = rhs_src[k] + c0 * (w[k] - hist[k]);
        }
        let next = system.solve(&rhs, Some(&w))?;
        increments.push(next.iter().zip(&w).map(|(x, y)| x - y).collect());
        w = next;
    }
    let u: Vec<f64> = w.iter().map(|v| v + m_g).collect();
    Ok(SolveOutput::new(embed(&grid, &u, m_g)))
}
