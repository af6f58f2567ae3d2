//! Forward maps `F -> G(phi o F)` for the three PDE problems and a linear
//! surrogate, with observation operators and likelihood pullbacks.

mod elliptic;
pub mod grid;
pub mod linsolve;
mod subdiffusion;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::link::LinkSpec;
use crate::spectral::{check_points, BasisSpec, SpectralField};

pub use elliptic::{solve_diffusion, solve_potential};
pub use grid::{Grid, GridFunction};
pub use subdiffusion::solve_subdiffusion;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// `-div(f grad u) = g`, `u = 0` on the boundary, `d = 2`.
    DiffusionCoefficient,
    /// `-Laplace u + f u = g`, `u = 0` on the boundary.
    EllipticPotential,
    /// `D_t^a u - Laplace u + f u = h`, `u = m_g` on the boundary, observed at `T`.
    SubdiffusionPotential,
}

/// Closed-form or spectral description of a data function on the cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `offset + amplitude * prod_i sin(pi x_i)`.
    SineBump { offset: f64, amplitude: f64 },
    Field { field: SpectralField },
}

impl Profile {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::SineBump { offset, amplitude } => {
                offset + amplitude * x.iter().map(|&t| (std::f64::consts::PI * t).sin()).product::<f64>()
            }
            Profile::Field { field } => {
                let mut buf = vec![0.0; field.basis().len()];
                field.basis().eval_all(x, &mut buf);
                crate::spectral::dot(field.coeffs(), &buf)
            }
        }
    }

    pub fn on_grid(&self, grid: Grid) -> GridFunction {
        GridFunction::from_fn(grid, |x| self.eval(x))
    }
}

/// Fractional-in-time data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdiffusionData {
    pub frac_order: f64,
    #[serde(rename = "T", default = "default_final_time")]
    pub final_time: f64,
    pub u0: Profile,
    #[serde(default)]
    pub boundary_value: f64,
    #[serde(default = "default_time_steps")]
    pub time_steps: usize,
}

fn default_final_time() -> f64 {
    1.0
}

fn default_time_steps() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardProblem {
    pub kind: ProblemKind,
    #[serde(rename = "d")]
    pub dim: usize,
    pub grid_n: usize,
    /// `g` for the elliptic problems, `h` for subdiffusion.
    pub source: Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subdiffusion: Option<SubdiffusionData>,
    /// Configured uniform bound `U` on `|G(F)|`, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_bound: Option<f64>,
}

impl ForwardProblem {
    pub fn potential(dim: usize, grid_n: usize, source: Profile) -> Self {
        Self {
            kind: ProblemKind::EllipticPotential,
            dim,
            grid_n,
            source,
            subdiffusion: None,
            u_bound: None,
        }
    }

    pub fn diffusion(grid_n: usize, source: Profile) -> Self {
        Self {
            kind: ProblemKind::DiffusionCoefficient,
            dim: 2,
            grid_n,
            source,
            subdiffusion: None,
            u_bound: None,
        }
    }

    pub fn subdiffusion(dim: usize, grid_n: usize, source: Profile, data: SubdiffusionData) -> Self {
        Self {
            kind: ProblemKind::SubdiffusionPotential,
            dim,
            grid_n,
            source,
            subdiffusion: Some(data),
            u_bound: None,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.grid_n)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        match self.kind {
            ProblemKind::DiffusionCoefficient => {
                if self.dim != 2 {
                    return Err(LabError::Argument("the diffusion-coefficient problem is posed on d = 2".into()));
                }
                let g = self.source.on_grid(grid);
                let interior_min = (0..grid.interior_count())
                    .map(|k| g.values()[grid.interior_to_node(k)])
                    .fold(f64::INFINITY, f64::min);
                if !(interior_min > 0.0) {
                    return Err(LabError::Argument(format!(
                        "diffusion source g must be strictly positive inside the domain (min {interior_min})"
                    )));
                }
            }
            ProblemKind::EllipticPotential => {}
            ProblemKind::SubdiffusionPotential => {
                let data = self
                    .subdiffusion
                    .as_ref()
                    .ok_or_else(|| LabError::Argument("subdiffusion problem needs frac_order, T, u0".into()))?;
                if !(data.frac_order > 0.0 && data.frac_order < 1.0) {
                    return Err(LabError::Argument(format!(
                        "fractional order a = {} must lie in (0, 1)",
                        data.frac_order
                    )));
                }
                if !(data.final_time > 0.0 && data.final_time.is_finite()) {
                    return Err(LabError::Argument(format!("final time T = {} must be positive", data.final_time)));
                }
                if data.time_steps == 0 {
                    return Err(LabError::Argument("time_steps must be at least 1".into()));
                }
                if !(data.boundary_value >= 0.0) {
                    return Err(LabError::Argument("boundary value m_g must be nonnegative".into()));
                }
                let u0 = data.u0.on_grid(grid);
                let mismatch = (0..grid.node_count())
                    .filter(|&k| grid.is_boundary(k))
                    .map(|k| (u0.values()[k] - data.boundary_value).abs())
                    .fold(0.0, f64::max);
                if mismatch > 1e-12 * data.boundary_value.max(1.0) {
                    return Err(LabError::Argument(format!(
                        "u0 must equal m_g = {} on the boundary (mismatch {mismatch:.3e})",
                        data.boundary_value
                    )));
                }
            }
        }
        Ok(())
    }

    /// Positive-data regime `0 < m_g <= u0`, `h >= 0` of the subdiffusion
    /// problem, under which the terminal slice stays bounded away from zero.
    pub fn has_positive_subdiffusion_data(&self) -> bool {
        let (Ok(grid), Some(data)) = (self.grid(), self.subdiffusion.as_ref()) else {
            return false;
        };
        data.boundary_value > 0.0
            && data.u0.on_grid(grid).min() >= data.boundary_value
            && self.source.on_grid(grid).min() >= 0.0
    }
}

/// Terminal or stationary PDE solution on the node grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutput {
    pub u: GridFunction,
    pub sup_norm: f64,
}

impl SolveOutput {
    pub fn new(u: GridFunction) -> Self {
        let sup_norm = u.max_abs();
        Self { u, sup_norm }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.u.interpolate(x)
    }

    pub fn within_bound(&self, bound: f64) -> bool {
        self.sup_norm <= bound
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.u.write_csv(out)
    }
}

/// Dispatches to the solver matching `problem.kind`.
pub fn solve(problem: &ForwardProblem, f: &GridFunction) -> Result<SolveOutput> {
    match problem.kind {
        ProblemKind::DiffusionCoefficient => solve_diffusion(problem, f),
        ProblemKind::EllipticPotential => solve_potential(problem, f),
        ProblemKind::SubdiffusionPotential => solve_subdiffusion(problem, f),
    }
}

/// `G(phi o F)` on the problem grid.
pub fn forward_apply(problem: &ForwardProblem, link: &LinkSpec, field: &SpectralField) -> Result<SolveOutput> {
    let map = PdeForward::new(problem.clone(), *link, field.basis().clone())?;
    map.solve_field(field)
}

/// Value of a forward map: node values of a PDE solution or, for the linear
/// surrogate, the field itself.
#[derive(Clone, Debug, PartialEq)]
pub enum ForwardState {
    Grid(GridFunction),
    Spectral(SpectralField),
}

/// Midpoint points per axis used to integrate spectral states.
const SPECTRAL_QUAD_1D: usize = 512;
const SPECTRAL_QUAD_2D: usize = 96;

impl ForwardState {
    /// Coordinates the observation operator acts on.
    pub fn values(&self) -> &[f64] {
        match self {
            ForwardState::Grid(g) => g.values(),
            ForwardState::Spectral(f) => f.coeffs(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            ForwardState::Grid(g) => g.interpolate(x),
            ForwardState::Spectral(f) => Profile::Field { field: f.clone() }.eval(x),
        }
    }

    /// `int f(self(x), other(x)) dx` over the unit cube.
    pub fn integrate_with(&self, other: &ForwardState, mut f: impl FnMut(f64, f64) -> f64) -> Result<f64> {
        match (self, other) {
            (ForwardState::Grid(a), ForwardState::Grid(b)) => a.integrate_with(b, f),
            (ForwardState::Spectral(a), ForwardState::Spectral(b)) => {
                let (va, vb) = (spectral_samples(a), spectral_samples(b));
                if va.len() != vb.len() || a.basis().dim() != b.basis().dim() {
                    return Err(LabError::Argument("states live on different bases".into()));
                }
                Ok(va.iter().zip(&vb).map(|(x, y)| f(*x, *y)).sum::<f64>() / va.len() as f64)
            }
            _ => Err(LabError::Argument("cannot compare grid and spectral states".into())),
        }
    }

    pub fn l2_distance(&self, other: &ForwardState) -> Result<f64> {
        Ok(self.integrate_with(other, |a, b| (a - b) * (a - b))?.sqrt())
    }

    pub fn l2_norm(&self) -> f64 {
        self.integrate_with(self, |a, _| a * a).expect("same state").sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            ForwardState::Grid(g) => g.max_abs(),
            ForwardState::Spectral(f) => spectral_samples(f).iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

fn spectral_samples(f: &SpectralField) -> Vec<f64> {
    let d = f.basis().dim();
    let q = if d == 1 { SPECTRAL_QUAD_1D } else { SPECTRAL_QUAD_2D };
    let pts: Vec<f64> = if d == 1 {
        (0..q).map(|i| (i as f64 + 0.5) / q as f64).collect()
    } else {
        (0..q * q)
            .flat_map(|k| [((k % q) as f64 + 0.5) / q as f64, ((k / q) as f64 + 0.5) / q as f64])
            .collect()
    };
    f.evaluate(&pts).expect("midpoints lie in the cube")
}

/// Sparse linear map from state values to values at design points.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationOperator {
    rows: Vec<Vec<(usize, f64)>>,
    state_len: usize,
}

impl ObservationOperator {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply(&self, state: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, w)| w * state[k]).sum())
            .collect()
    }

    /// `sum_k A[i][k]^2 var[k]` for each row: the variance of an observation
    /// under independent state coordinates with variances `var`.
    pub fn propagate_variance(&self, var: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, w)| w * w * var[k]).sum())
            .collect()
    }

    /// Transpose applied to per-observation weights.
    pub fn adjoint(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_len];
        for (row, &w) in self.rows.iter().zip(weights) {
            for &(k, a) in row {
                out[k] += a * w;
            }
        }
        out
    }
}

/// A forward map on spectral coefficients.
pub trait ForwardMap: Sync {
    fn basis(&self) -> &BasisSpec;

    fn apply(&self, field: &SpectralField) -> Result<ForwardState>;

    /// True when the state values are the coefficients themselves.
    fn is_linear(&self) -> bool {
        false
    }

    /// Operator taking [`ForwardState::values`] to values at `coords`
    /// (flat, `d` entries per point).
    fn observation_operator(&self, coords: &[f64]) -> Result<ObservationOperator>;

    /// Gradient with respect to the coefficients of `v . state(F)`, where
    /// `state` is the already computed `apply(field)`. Central differences by
    /// default.
    fn pullback(&self, field: &SpectralField, state: &ForwardState, v: &[f64]) -> Result<Vec<f64>> {
        let _ = state;
        const STEP: f64 = 1e-5;
        let mut grad = Vec::with_capacity(field.coeffs().len());
        for j in 0..field.coeffs().len() {
            let mut plus = field.clone();
            plus.coeffs_mut()[j] += STEP;
            let mut minus = field.clone();
            minus.coeffs_mut()[j] -= STEP;
            let (sp, sm) = (self.apply(&plus)?, self.apply(&minus)?);
            let dv: f64 = sp
                .values()
                .iter()
                .zip(sm.values())
                .zip(v)
                .map(|((p, m), w)| w * (p - m))
                .sum();
            grad.push(dv / (2.0 * STEP));
        }
        Ok(grad)
    }
}

/// `G(F) = F`, used as a conjugate test surrogate.
#[derive(Clone, Debug)]
pub struct LinearForward {
    basis: BasisSpec,
}

impl LinearForward {
    pub fn new(basis: BasisSpec) -> Self {
        Self { basis }
    }
}

impl ForwardMap for LinearForward {
    fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    fn apply(&self, field: &SpectralField) -> Result<ForwardState> {
        if field.basis() != &self.basis {
            return Err(LabError::Argument("field is not on the forward map's basis".into()));
        }
        Ok(ForwardState::Spectral(field.clone()))
    }

    fn observation_operator(&self, coords: &[f64]) -> Result<ObservationOperator> {
        let d = self.basis.dim();
        check_points(d, coords)?;
        let mut buf = vec![0.0; self.basis.len()];
        let rows = coords
            .chunks(d)
            .map(|x| {
                self.basis.eval_all(x, &mut buf);
                buf.iter().copied().enumerate().collect()
            })
            .collect();
        Ok(ObservationOperator {
            rows,
            state_len: self.basis.len(),
        })
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn pullback(&self, _field: &SpectralField, _state: &ForwardState, v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.to_vec())
    }
}

/// PDE forward map with the basis tabulated on the grid nodes.
#[derive(Clone, Debug)]
pub struct PdeForward {
    problem: ForwardProblem,
    link: LinkSpec,
    basis: BasisSpec,
    grid: Grid,
    /// Node-major table of basis values.
    table: Vec<f64>,
}

impl PdeForward {
    pub fn new(problem: ForwardProblem, link: LinkSpec, basis: BasisSpec) -> Result<Self> {
        problem.validate()?;
        if basis.dim() != problem.dim {
            return Err(LabError::Argument(format!(
                "basis dimension {} does not match problem dimension {}",
                basis.dim(),
                problem.dim
            )));
        }
        let grid = problem.grid()?;
        let j = basis.len();
        let mut table = vec![0.0; grid.node_count() * j];
        for (k, row) in table.chunks_mut(j).enumerate() {
            basis.eval_all(&grid.node_coords(k)[..grid.dim()], row);
        }
        Ok(Self {
            problem,
            link,
            basis,
            grid,
            table,
        })
    }

    pub fn problem(&self) -> &ForwardProblem {
        &self.problem
    }

    pub fn link(&self) -> &LinkSpec {
        &self.link
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn check_field(&self, field: &SpectralField) -> Result<()> {
        if field.basis() != &self.basis {
            return Err(LabError::Argument("field is not on the forward map's basis".into()));
        }
        Ok(())
    }

    /// `F` at every node.
    pub fn field_on_grid(&self, field: &SpectralField) -> Vec<f64> {
        self.table
            .chunks(self.basis.len())
            .map(|row| crate::spectral::dot(row, field.coeffs()))
            .collect()
    }

    /// `f = phi(F)` at every node.
    pub fn coefficient(&self, field: &SpectralField) -> GridFunction {
        let values = self.field_on_grid(field).into_iter().map(|z| self.link.apply(z)).collect();
        GridFunction::new(self.grid, values).expect("node count matches")
    }

    pub fn solve_field(&self, field: &SpectralField) -> Result<SolveOutput> {
        self.check_field(field)?;
        solve(&self.problem, &self.coefficient(field))
    }
}

impl ForwardMap for PdeForward {
    fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    fn apply(&self, field: &SpectralField) -> Result<ForwardState> {
        Ok(ForwardState::Grid(self.solve_field(field)?.u))
    }

    fn observation_operator(&self, coords: &[f64]) -> Result<ObservationOperator> {
        check_points(self.grid.dim(), coords)?;
        Ok(ObservationOperator {
            rows: coords.chunks(self.grid.dim()).map(|x| self.grid.stencil(x)).collect(),
            state_len: self.grid.node_count(),
        })
    }

    fn pullback(&self, field: &SpectralField, state: &ForwardState, v: &[f64]) -> Result<Vec<f64>> {
        let ForwardState::Grid(u) = state else {
            return Err(LabError::Argument("PDE pullback needs a grid state".into()));
        };
        let f = self.coefficient(field);
        let grad_f = match self.problem.kind {
            ProblemKind::EllipticPotential => elliptic::potential_adjoint(&f, u, v)?,
            ProblemKind::DiffusionCoefficient => elliptic::diffusion_adjoint(&f, u, v)?,
            ProblemKind::SubdiffusionPotential => {
                return ForwardMapFd(self).pullback(field, state, v);
            }
        };
        let z = self.field_on_grid(field);
        let j = self.basis.len();
        let mut grad = vec![0.0; j];
        for (k, row) in self.table.chunks(j).enumerate() {
            let w = grad_f[k] * self.link.derivative(z[k]);
            if w != 0.0 {
                for (g, b) in grad.iter_mut().zip(row) {
                    *g += w * b;
                }
            }
        }
        Ok(grad)
    }
}

/// Uses the default finite-difference pullback of a wrapped map.
struct ForwardMapFd<'a, M: ForwardMap>(&'a M);

impl<M: ForwardMap> ForwardMap for ForwardMapFd<'_, M> {
    fn basis(&self) -> &BasisSpec {
        self.0.basis()
    }

    fn apply(&self, field: &SpectralField) -> Result<ForwardState> {
        self.0.apply(field)
    }

    fn observation_operator(&self, coords: &[f64]) -> Result<ObservationOperator> {
        self.0.observation_operator(coords)
    }
}
