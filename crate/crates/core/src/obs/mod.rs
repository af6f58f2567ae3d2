//! Regression data under `Y_i = G(F)(X_i) + sigma W_i`, the log-likelihood
//! and its gradient.

pub mod divergence;
pub mod stability;

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::forward::{ForwardMap, ForwardState, ObservationOperator};
use crate::rng;
use crate::spectral::SpectralField;

pub use divergence::{
    d_g, hellinger, kl_divergence, kl_neighborhood_contains, renyi_divergence, renyi_divergence_product,
    variance_logratio, Divergences,
};
pub use stability::{lipschitz_ratios, stability_scan, uniform_bound, StabilityReport};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<f64>,
    values: Vec<f64>,
    sigma: f64,
}

impl Dataset {
    pub fn new(dim: usize, points: Vec<f64>, values: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(LabError::Argument(format!("noise level sigma = {sigma} must be positive")));
        }
        if dim == 0 || points.len() != dim * values.len() {
            return Err(LabError::Argument(format!(
                "{} coordinates do not match {} observations in dimension {dim}",
                points.len(),
                values.len()
            )));
        }
        if let Some(x) = points.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
            return Err(LabError::Domain(format!("design coordinate {x} is outside the open unit cube")));
        }
        Ok(Self {
            dim,
            points,
            values,
            sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Flat design coordinates, `dim` per point.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// First `n` observations.
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            dim: self.dim,
            points: self.points[..n * self.dim].to_vec(),
            values: self.values[..n].to_vec(),
            sigma: self.sigma,
        }
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.dim != other.dim || self.sigma != other.sigma {
            return Err(LabError::Argument("datasets differ in dimension or noise level".into()));
        }
        let mut out = self.clone();
        out.points.extend_from_slice(&other.points);
        out.values.extend_from_slice(&other.values);
        Ok(out)
    }

    /// Columns `x1[,x2],y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.point(i).iter().map(|x| format!("{x:.17e}")).collect();
            rec.push(format!("{:.17e}", self.values[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the [`Dataset::write_csv`] layout; the dimension comes from the header.
    pub fn read_csv<R: Read>(input: R, sigma: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let dim = headers.len().saturating_sub(1);
        if dim == 0 || headers.get(dim) != Some("y") {
            return Err(LabError::Config("dataset CSV needs columns x1[,x2],y".into()));
        }
        let (mut points, mut values) = (vec![], vec![]);
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| LabError::Config(format!("bad number {s:?} in dataset: {e}")))
            };
            for k in 0..dim {
                points.push(parse(&rec[k])?);
            }
            values.push(parse(&rec[dim])?);
        }
        Self::new(dim, points, values, sigma)
    }
}

/// Draws `n` design points uniformly from the open cube and noisy
/// observations of `map(truth)`.
pub fn simulate_data<M: ForwardMap + ?Sized>(map: &M, truth: &SpectralField, n: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(LabError::Argument("N must be at least 1".into()));
    }
    if !(sigma > 0.0) {
        return Err(LabError::Argument(format!("noise level sigma = {sigma} must be positive")));
    }
    let dim = map.basis().dim();
    let mut rng = rng::rng_for(seed, &[0x6461_7461]);
    let points: Vec<f64> = (0..n * dim)
        .map(|_| loop {
            let x: f64 = rng.random();
            if x > 0.0 {
                break x;
            }
        })
        .collect();
    let state = map.apply(truth)?;
    let clean = map.observation_operator(&points)?.apply(state.values());
    let values = clean
        .into_iter()
        .map(|g| {
            let w: f64 = rng.sample(StandardNormal);
            g + sigma * w
        })
        .collect();
    Dataset::new(dim, points, values, sigma)
}

/// `-(1/2 sigma^2) sum_i (Y_i - G(F)(X_i))^2`.
pub fn log_likelihood<M: ForwardMap + ?Sized>(dataset: &Dataset, map: &M, field: &SpectralField) -> Result<f64> {
    Likelihood::new(map, dataset)?.value(field)
}

/// Likelihood with the observation operator of a fixed dataset cached.
pub struct Likelihood<'a, M: ForwardMap + ?Sized> {
    map: &'a M,
    data: &'a Dataset,
    op: ObservationOperator,
}

impl<'a, M: ForwardMap + ?Sized> Likelihood<'a, M> {
    pub fn new(map: &'a M, data: &'a Dataset) -> Result<Self> {
        if data.dim() != map.basis().dim() {
            return Err(LabError::Argument("dataset and forward map dimensions differ".into()));
        }
        let op = map.observation_operator(data.points())?;
        Ok(Self { map, data, op })
    }

    pub fn map(&self) -> &M {
        self.map
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn value(&self, field: &SpectralField) -> Result<f64> {
        if self.data.is_empty() {
            return Ok(0.0);
        }
        let state = self.map.apply(field)?;
        Ok(self.value_of_state(&state))
    }

    pub fn value_of_state(&self, state: &ForwardState) -> f64 {
        let s2 = self.data.sigma() * self.data.sigma();
        let pred = self.op.apply(state.values());
        -0.5 / s2
            * pred
                .iter()
                .zip(self.data.values())
                .map(|(g, y)| (y - g) * (y - g))
                .sum::<f64>()
    }

    /// `E[l(F)]` for independent Gaussian coefficients, available in closed
    /// form for linear maps only.
    pub fn gaussian_expectation(&self, mean: &[f64], var: &[f64]) -> Result<Option<f64>> {
        if !self.map.is_linear() {
            return Ok(None);
        }
        let m = SpectralField::new(self.map.basis().clone(), mean.to_vec())?;
        let spread: f64 = self.op.propagate_variance(var).iter().sum();
        let s2 = self.data.sigma() * self.data.sigma();
        Ok(Some(self.value(&m)? - 0.5 * spread / s2))
    }

    /// Value and gradient with respect to the coefficients.
    pub fn value_and_gradient(&self, field: &SpectralField) -> Result<(f64, Vec<f64>)> {
        if self.data.is_empty() {
            return Ok((0.0, vec![0.0; field.coeffs().len()]));
        }
        let state = self.map.apply(field)?;
        let s2 = self.data.sigma() * self.data.sigma();
        let pred = self.op.apply(state.values());
        let resid: Vec<f64> = self.data.values().iter().zip(&pred).map(|(y, g)| (y - g) / s2).collect();
        let value = -0.5 * s2 * resid.iter().map(|r| r * r).sum::<f64>();
        let v = self.op.adjoint(&resid);
        let grad = self.map.pullback(field, &state, &v)?;
        Ok((value, grad))
    }
}
