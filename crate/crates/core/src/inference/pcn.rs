//! Preconditioned Crank-Nicolson sampling of `exp(l(F)) dPi(F)`.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::forward::ForwardMap;
use crate::obs::{Dataset, Likelihood};
use crate::prior::PriorSpec;
use crate::rng;
use crate::spectral::{BasisSpec, SpectralField};

/// Overall acceptance below this fails the run.
pub const MIN_ACCEPTANCE: f64 = 0.01;
/// Burn-in windows with acceptance below this halve the step.
pub const ADAPT_ACCEPTANCE: f64 = 0.1;
/// Length of a burn-in adaptation window.
pub const ADAPT_WINDOW: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    #[serde(rename = "beta_p", default = "default_step")]
    pub step: f64,
    pub iterations: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_step() -> f64 {
    0.2
}

fn default_thin() -> usize {
    1
}

impl ChainConfig {
    pub fn new(iterations: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            step: default_step(),
            iterations,
            burn_in,
            thin: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step < 1.0) {
            return Err(LabError::Argument(format!("pCN step beta_p = {} must lie in (0, 1)", self.step)));
        }
        if self.burn_in >= self.iterations {
            return Err(LabError::Argument(format!(
                "burn_in = {} must be below iterations = {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(LabError::Argument("thin must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub samples: Vec<SpectralField>,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    /// Step after burn-in adaptation.
    pub final_step: f64,
    /// Iteration index of each kept sample.
    pub iterations: Vec<usize>,
}

impl ChainOutput {
    /// Columns `iteration,c_1..c_J`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let j = self.samples.first().map_or(0, |f| f.coeffs().len());
        let mut header = vec!["iteration".to_string()];
        header.extend((1..=j).map(|k| format!("c_{k}")));
        w.write_record(&header)?;
        for (it, f) in self.iterations.iter().zip(&self.samples) {
            let mut rec = vec![it.to_string()];
            rec.extend(f.coeffs().iter().map(|c| format!("{c:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a chain written by [`ChainOutput::write_csv`]; returns iterations
/// and states on `basis`.
pub fn read_chain_csv<R: Read>(input: R, basis: &BasisSpec) -> Result<(Vec<usize>, Vec<SpectralField>)> {
    let mut r = csv::Reader::from_reader(input);
    let width = r.headers()?.len();
    if width != basis.len() + 1 {
        return Err(LabError::Config(format!(
            "chain CSV has {} coefficient columns, basis has {}",
            width.saturating_sub(1),
            basis.len()
        )));
    }
    let (mut its, mut fields) = (vec![], vec![]);
    for rec in r.records() {
        let rec = rec?;
        its.push(
            rec[0]
                .parse()
                .map_err(|e| LabError::Config(format!("bad iteration {:?}: {e}", &rec[0])))?,
        );
        let coeffs = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|e| LabError::Config(format!("bad coefficient {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        fields.push(SpectralField::new(basis.clone(), coeffs)?);
    }
    Ok((its, fields))
}

pub fn pcn_sample<M: ForwardMap + ?Sized>(
    dataset: &Dataset,
    map: &M,
    prior: &PriorSpec,
    config: &ChainConfig,
) -> Result<ChainOutput> {
    pcn_sample_from(dataset, map, prior, config, None)
}

/// pCN chain started at `init` (zero when `None`).
pub fn pcn_sample_from<M: ForwardMap + ?Sized>(
    dataset: &Dataset,
    map: &M,
    prior: &PriorSpec,
    config: &ChainConfig,
    init: Option<&SpectralField>,
) -> Result<ChainOutput> {
    config.validate()?;
    if prior.basis() != map.basis() {
        return Err(LabError::Argument("prior and forward map use different bases".into()));
    }
    let lik = Likelihood::new(map, dataset)?;
    let mut current = init.cloned().unwrap_or_else(|| SpectralField::zeros(prior.basis()));
    if current.basis() != prior.basis() {
        return Err(LabError::Argument("initial state is not on the prior basis".into()));
    }
    if !prior.in_support(&current) {
        return Err(LabError::Domain("initial state lies outside the conditioning ball".into()));
    }
    let mut ll = lik.value(&current)?;
    let mut rng = rng::rng_for(config.seed, &[0x7063_6e]);
    let mut step = config.step;
    let mut xi = vec![0.0; prior.basis().len()];

    let mut out = ChainOutput {
        samples: vec![],
        acceptance_rate: 0.0,
        final_step: step,
        iterations: vec![],
    };
    let (mut window_acc, mut accepted, mut proposals) = (0usize, 0usize, 0usize);
    for it in 0..config.iterations {
        let shrink = (1.0 - step * step).sqrt();
        prior.draw_into(&mut rng, &mut xi);
        let coeffs: Vec<f64> = current.coeffs().iter().zip(&xi).map(|(c, x)| shrink * c + step * x).collect();
        let proposal = SpectralField::new(prior.basis().clone(), coeffs)?;
        let u: f64 = rng.random();
        let mut accept = false;
        if prior.in_support(&proposal) {
            let ll_new = lik.value(&proposal)?;
            let diff = ll_new - ll;
            // equal likelihoods are accepted
            if diff >= 0.0 || u < diff.exp() {
                accept = true;
                current = proposal;
                ll = ll_new;
            }
        }
        if it < config.burn_in {
            window_acc += accept as usize;
            if (it + 1) % ADAPT_WINDOW == 0 {
                if (window_acc as f64) < ADAPT_ACCEPTANCE * ADAPT_WINDOW as f64 {
                    step *= 0.5;
                }
                window_acc = 0;
            }
            continue;
        }
        proposals += 1;
        accepted += accept as usize;
        if (it - config.burn_in) % config.thin == 0 {
            out.samples.push(current.clone());
            out.iterations.push(it);
        }
    }
    out.acceptance_rate = accepted as f64 / proposals as f64;
    out.final_step = step;
    if out.acceptance_rate < MIN_ACCEPTANCE {
        return Err(LabError::Tuning {
            rate: out.acceptance_rate,
            step,
            accepted,
            proposals,
        });
    }
    Ok(out)
}
