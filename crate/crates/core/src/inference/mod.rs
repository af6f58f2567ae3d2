//! Posterior sampling (pCN) and mean-field variational approximation.

pub mod pcn;
pub mod vb;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exec::ExecMode;
use crate::forward::ForwardMap;
use crate::spectral::SpectralField;

pub use pcn::{pcn_sample, pcn_sample_from, read_chain_csv, ChainConfig, ChainOutput};
pub use vb::{
    default_jq, elbo, elbo_gap_surrogate, vb_fit, vb_fit_from, vb_sample, ElboGap, VariationalState, VbConfig,
};

/// Distance used to decide whether a sample lies near the truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `||G(F) - G(F0)||_{L^2}`.
    #[serde(rename = "dG")]
    ForwardL2,
    /// `||F - F0||_{L^2}`.
    #[serde(rename = "L2")]
    L2,
}

/// Distance of each sample to `f0`.
pub fn distances<M: ForwardMap + ?Sized>(samples: &[SpectralField], map: &M, f0: &SpectralField, metric: Metric) -> Result<Vec<f64>> {
    match metric {
        Metric::L2 => samples.iter().map(|f| Ok(f.sub(f0)?.norm_hs(0.0))).collect(),
        Metric::ForwardL2 => {
            let s0 = map.apply(f0)?;
            ExecMode::default()
                .map(samples, |f| map.apply(f)?.l2_distance(&s0))
                .into_iter()
                .collect()
        }
    }
}

/// Fraction of samples farther than `radius` from `f0`.
pub fn posterior_mass_outside<M: ForwardMap + ?Sized>(
    samples: &[SpectralField],
    map: &M,
    f0: &SpectralField,
    radius: f64,
    metric: Metric,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(LabError::Argument("no samples".into()));
    }
    if radius == f64::INFINITY {
        return Ok(0.0);
    }
    let d = distances(samples, map, f0, metric)?;
    Ok(d.iter().filter(|&&x| x > radius).count() as f64 / d.len() as f64)
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let b = batches.clamp(2, xs.len().max(2));
    let size = xs.len() / b;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = xs.chunks_exact(size).take(b).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}
