//! Closed-form Gaussian posterior for the linear surrogate `G(F) = F`.

#![allow(dead_code)]

use contraction_lab::obs::Dataset;
use contraction_lab::spectral::BasisSpec;
use nalgebra::{DMatrix, DVector};

pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// `log int exp(l(F)) dPi(F)` with `l` lacking the `2 pi sigma^2` constant.
    pub log_evidence: f64,
}

pub fn conjugate_posterior(data: &Dataset, basis: &BasisSpec, prior_sd: &[f64]) -> GaussianPosterior {
    let (n, j) = (data.len(), basis.len());
    let s2 = data.sigma() * data.sigma();
    let mut phi = DMatrix::zeros(n, j);
    let mut row = vec![0.0; j];
    for i in 0..n {
        basis.eval_all(data.point(i), &mut row);
        for k in 0..j {
            phi[(i, k)] = row[k];
        }
    }
    let y = DVector::from_column_slice(data.values());
    let mut precision = phi.transpose() * &phi / s2;
    for k in 0..j {
        precision[(k, k)] += 1.0 / (prior_sd[k] * prior_sd[k]);
    }
    let chol = precision.clone().cholesky().expect("posterior precision is SPD");
    let b = phi.transpose() * &y / s2;
    let mean = chol.solve(&b);
    let cov = chol.inverse();
    let log_det_p: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_det_prior: f64 = prior_sd.iter().map(|t| 2.0 * t.ln()).sum();
    let log_evidence = -0.5 * y.dot(&y) / s2 + 0.5 * b.dot(&mean) - 0.5 * (log_det_prior + log_det_p);
    GaussianPosterior {
        mean: mean.iter().copied().collect(),
        var: (0..j).map(|k| cov[(k, k)]).collect(),
        log_evidence,
    }
}
