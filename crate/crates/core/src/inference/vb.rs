//! Mean-field Gaussian variational approximation on the leading `J_q`
//! coefficients, with the prior marginals on the rest.
//!
//! The objective is `ELBO(q) = E_q[l(F)] - KL(q || Pi_N)` with the
//! unnormalised log-likelihood `l`, so `log Z - ELBO(q) = KL(q || posterior)`
//! where `Z = int e^l dPi_N`.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exec::ExecMode;
use crate::forward::ForwardMap;
use crate::obs::{Dataset, Likelihood};
use crate::prior::PriorSpec;
use crate::rng;
use crate::spectral::{BasisSpec, SpectralField};

/// ELBO values below this count as divergence.
pub const ELBO_FLOOR: f64 = -1e12;
/// Monte Carlo draws for ELBO estimates of nonlinear maps.
pub const ELBO_EVAL_SAMPLES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VbConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_samples")]
    pub samples_per_step: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_steps() -> usize {
    2000
}
fn default_samples() -> usize {
    8
}
fn default_lr() -> f64 {
    0.05
}
fn default_warmup() -> usize {
    100
}
fn default_window() -> usize {
    50
}

impl Default for VbConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            samples_per_step: default_samples(),
            learning_rate: default_lr(),
            warmup: default_warmup(),
            smoothing_window: default_window(),
            seed: 0,
        }
    }
}

impl VbConfig {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.samples_per_step == 0 || self.smoothing_window == 0 {
            return Err(LabError::Argument("VB steps, samples_per_step and smoothing_window must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(LabError::Argument(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }

    /// Step size at 1-based step `t`: constant through warmup, then `1/sqrt(t)` decay.
    pub fn step_size(&self, t: usize) -> f64 {
        if t <= self.warmup.max(1) {
            self.learning_rate
        } else {
            self.learning_rate * (self.warmup.max(1) as f64 / t as f64).sqrt()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub d: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "J_q")]
    pub jq: usize,
    pub means: Vec<f64>,
    pub log_sds: Vec<f64>,
    /// Prior standard deviations of coefficients `J_q..J`.
    pub tail_sds: Vec<f64>,
    pub elbo_trace: Vec<f64>,
}

impl VariationalState {
    /// `q` equal to the prior.
    pub fn from_prior(prior: &PriorSpec, jq: usize) -> Result<Self> {
        let j = prior.basis().len();
        if jq > j {
            return Err(LabError::Argument(format!("J_q = {jq} exceeds J = {j}")));
        }
        let tau = prior.std_devs();
        Ok(Self {
            d: prior.basis().dim(),
            j,
            jq,
            means: vec![0.0; jq],
            log_sds: tau[..jq].iter().map(|t| t.ln()).collect(),
            tail_sds: tau[jq..].to_vec(),
            elbo_trace: vec![],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.len() != self.jq || self.log_sds.len() != self.jq || self.jq + self.tail_sds.len() != self.j {
            return Err(LabError::Argument("variational state lengths are inconsistent".into()));
        }
        if self.log_sds.iter().chain(&self.means).any(|v| !v.is_finite()) || self.tail_sds.iter().any(|s| !(*s > 0.0)) {
            return Err(LabError::Argument("variational state has non-finite or nonpositive scales".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<BasisSpec> {
        BasisSpec::with_len(self.d, self.j)
    }

    pub fn sds(&self) -> Vec<f64> {
        self.log_sds.iter().map(|l| l.exp()).collect()
    }

    /// Mean of `q` on the full basis.
    pub fn mean_field(&self) -> Result<SpectralField> {
        let mut c = self.means.clone();
        c.resize(self.j, 0.0);
        SpectralField::new(self.basis()?, c)
    }

    /// Means and variances of all `J` coefficients.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let mut mean = self.means.clone();
        mean.resize(self.j, 0.0);
        let var = self
            .sds()
            .into_iter()
            .chain(self.tail_sds.iter().copied())
            .map(|s| s * s)
            .collect();
        (mean, var)
    }

    /// `KL(q || Pi_N)`; only the leading block differs from the prior.
    pub fn kl_to_prior(&self, prior: &PriorSpec) -> f64 {
        (0..self.jq)
            .map(|j| {
                let t = prior.std_dev(j);
                let s = self.log_sds[j].exp();
                (t / s).ln() + (s * s + self.means[j] * self.means[j]) / (2.0 * t * t) - 0.5
            })
            .sum()
    }

    /// Centered moving average of the ELBO trace.
    pub fn smoothed_trace(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        self.elbo_trace
            .windows(w.min(self.elbo_trace.len()).max(1))
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
            .collect()
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let s: Self = serde_json::from_reader(input)?;
        s.validate()?;
        Ok(s)
    }

    fn draw<R: Rng + ?Sized>(&self, sds: &[f64], rng: &mut R, eps: &mut [f64]) -> Vec<f64> {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        (0..self.j)
            .map(|k| {
                if k < self.jq {
                    self.means[k] + sds[k] * eps[k]
                } else {
                    self.tail_sds[k - self.jq] * eps[k]
                }
            })
            .collect()
    }
}

/// Default family size `min(J, ceil(scale * N^c))`.
pub fn default_jq(j: usize, n: usize, c: f64, scale: f64) -> usize {
    ((scale * (n.max(1) as f64).powf(c)).ceil() as usize).clamp(1, j)
}

pub fn vb_fit<M: ForwardMap + ?Sized>(
    dataset: &Dataset,
    map: &M,
    prior: &PriorSpec,
    jq: usize,
    config: &VbConfig,
) -> Result<VariationalState> {
    let init = VariationalState::from_prior(prior, jq)?;
    vb_fit_from(dataset, map, prior, init, config)
}

/// Stochastic ascent from `init`. Adam runs in whitened coordinates
/// `m = tau mu`, `s = tau e^rho`; the returned state is the Polyak average
/// of the second half of the iterates.
pub fn vb_fit_from<M: ForwardMap + ?Sized>(
    dataset: &Dataset,
    map: &M,
    prior: &PriorSpec,
    init: VariationalState,
    config: &VbConfig,
) -> Result<VariationalState> {
    config.validate()?;
    init.validate()?;
    if prior.basis() != map.basis() || init.j != prior.basis().len() {
        return Err(LabError::Argument("prior, forward map and variational state use different bases".into()));
    }
    let lik = Likelihood::new(map, dataset)?;
    let jq = init.jq;
    let tau: Vec<f64> = prior.std_devs()[..jq].to_vec();
    let mut state = init;
    state.elbo_trace.clear();

    // whitened parameters: [mu_0..mu_jq, rho_0..rho_jq]
    let mut theta: Vec<f64> = (0..jq)
        .map(|k| state.means[k] / tau[k])
        .chain((0..jq).map(|k| state.log_sds[k] - tau[k].ln()))
        .collect();
    let p = theta.len();
    // short second-moment memory: the log-scale gradients shrink by orders of magnitude
    // as the fit tightens, and a long memory would stall the steps
    let (b1, b2, eps_adam) = (0.9, 0.99, 1e-8);
    let (mut m1, mut m2) = (vec![0.0; p], vec![0.0; p]);
    let mut avg = vec![0.0; p];
    let avg_from = config.steps / 2 + 1;
    let s_count = config.samples_per_step;

    for t in 1..=config.steps {
        for k in 0..jq {
            state.means[k] = tau[k] * theta[k];
            state.log_sds[k] = tau[k].ln() + theta[jq + k];
        }
        let sds = state.sds();
        let evals: Vec<Result<(f64, Vec<f64>, Vec<f64>)>> = ExecMode::default().map_range(s_count, |s| {
            let mut rng = rng::rng_for(config.seed, &[t as u64, s as u64]);
            let mut eps = vec![0.0; state.j];
            let coeffs = state.draw(&sds, &mut rng, &mut eps);
            let field = SpectralField::new(prior.basis().clone(), coeffs)?;
            let (v, g) = lik.value_and_gradient(&field)?;
            Ok((v, g, eps))
        });
        let mut grad = vec![0.0; p];
        let mut ell = 0.0;
        for e in evals {
            let (v, g, eps) = e?;
            ell += v;
            for k in 0..jq {
                grad[k] += g[k];
                grad[jq + k] += g[k] * eps[k] * sds[k];
            }
        }
        let sc = s_count as f64;
        ell /= sc;
        for k in 0..jq {
            let (m, s, tk) = (state.means[k], sds[k], tau[k]);
            // chain rule to whitened coordinates plus the closed-form KL gradient
            grad[k] = tau[k] * (grad[k] / sc - m / (tk * tk));
            grad[jq + k] = grad[jq + k] / sc + 1.0 - s * s / (tk * tk);
        }
        let elbo = ell - state.kl_to_prior(prior);
        state.elbo_trace.push(elbo);
        if !elbo.is_finite() || elbo < ELBO_FLOOR || grad.iter().any(|g| !g.is_finite()) {
            return Err(LabError::Optimization {
                step: t,
                last: state.elbo_trace.iter().rev().nth(1).copied(),
                trace: state.elbo_trace,
            });
        }
        let lr = config.step_size(t);
        let (c1, c2) = (1.0 - f64::powi(b1, t as i32), 1.0 - f64::powi(b2, t as i32));
        for i in 0..p {
            m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
            m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
            theta[i] += lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps_adam);
        }
        if t >= avg_from {
            for i in 0..p {
                avg[i] += theta[i];
            }
        }
    }
    let n_avg = (config.steps + 1 - avg_from) as f64;
    for k in 0..jq {
        state.means[k] = tau[k] * avg[k] / n_avg;
        state.log_sds[k] = tau[k].ln() + avg[jq + k] / n_avg;
    }
    Ok(state)
}

/// Independent draws from `q`.
pub fn vb_sample(state: &VariationalState, count: usize, seed: u64) -> Result<Vec<SpectralField>> {
    state.validate()?;
    let basis = state.basis()?;
    let sds = state.sds();
    ExecMode::default()
        .map_range(count, |i| {
            let mut rng = rng::rng_for(seed, &[i as u64]);
            let mut eps = vec![0.0; state.j];
            SpectralField::new(basis.clone(), state.draw(&sds, &mut rng, &mut eps))
        })
        .into_iter()
        .collect()
}

/// `ELBO(q)`: exact for linear maps, Monte Carlo with
/// [`ELBO_EVAL_SAMPLES`] draws otherwise.
pub fn elbo<M: ForwardMap + ?Sized>(state: &VariationalState, dataset: &Dataset, map: &M, prior: &PriorSpec, seed: u64) -> Result<f64> {
    let lik = Likelihood::new(map, dataset)?;
    let (mean, var) = state.moments();
    let expected = match lik.gaussian_expectation(&mean, &var)? {
        Some(v) => v,
        None => {
            let draws = vb_sample(state, ELBO_EVAL_SAMPLES, seed)?;
            let vals: Result<Vec<f64>> = ExecMode::default().map(&draws, |f| lik.value(f)).into_iter().collect();
            vals?.iter().sum::<f64>() / ELBO_EVAL_SAMPLES as f64
        }
    };
    Ok(expected - state.kl_to_prior(prior))
}

/// `-ELBO(q) / max(N, 1)`. The log-evidence is not subtracted, so this
/// upper-bounds `KL(q || posterior) / N` only up to that offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboGap {
    pub surrogate: f64,
    pub elbo: f64,
    pub evidence_subtracted: bool,
}

pub fn elbo_gap_surrogate<M: ForwardMap + ?Sized>(
    state: &VariationalState,
    dataset: &Dataset,
    map: &M,
    prior: &PriorSpec,
) -> Result<ElboGap> {
    let e = elbo(state, dataset, map, prior, 0x656c_626f)?;
    Ok(ElboGap {
        surrogate: -e / dataset.len().max(1) as f64,
        elbo: e,
        evidence_subtracted: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::LinearForward;
    use crate::obs::simulate_data;

    fn setup(j: usize) -> (LinearForward, PriorSpec) {
        let basis = BasisSpec::new(1, j).unwrap();
        (LinearForward::new(basis.clone()), PriorSpec::new(2.0, 0.0, 1, basis).unwrap())
    }

    #[test]
    fn prior_only_optimum_is_the_prior() {
        let (map, prior) = setup(6);
        let empty = Dataset::new(1, vec![], vec![], 1.0).unwrap();
        let mut init = VariationalState::from_prior(&prior, 4).unwrap();
        init.means = vec![0.3, -0.2, 0.1, 0.05];
        init.log_sds.iter_mut().for_each(|l| *l -= 1.0);
        let fit = vb_fit_from(&empty, &map, &prior, init, &VbConfig::default()).unwrap();
        for (k, (m, s)) in fit.means.iter().zip(fit.sds()).enumerate() {
            let t = prior.std_dev(k);
            assert!(m.abs() < 0.02 * t, "m{k} = {m}");
            assert!((s / t - 1.0).abs() < 0.02, "s{k} = {s} vs {t}");
        }
        let gap = elbo_gap_surrogate(&fit, &empty, &map, &prior).unwrap();
        assert!(gap.surrogate.abs() < 1e-6 && !gap.evidence_subtracted);
    }

    #[test]
    fn trace_ascends_and_json_round_trips() {
        let (map, prior) = setup(6);
        let truth = SpectralField::new(map.basis().clone(), vec![0.8, -0.4, 0.2, 0.1, 0.0, 0.0]).unwrap();
        let data = simulate_data(&map, &truth, 100, 0.1, 2).unwrap();
        let fit = vb_fit(&data, &map, &prior, 4, &VbConfig::default()).unwrap();
        let sm = fit.smoothed_trace(50);
        assert!(sm.last().unwrap() >= sm.first().unwrap());
        let mut buf = vec![];
        fit.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"J_q\": 4"));
        assert_eq!(VariationalState::read_json(buf.as_slice()).unwrap(), fit);
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let (_, prior) = setup(5);
        let mut st = VariationalState::from_prior(&prior, 2).unwrap();
        st.means = vec![1.5, -0.5];
        st.log_sds = vec![0.2f64.ln(), 0.1f64.ln()];
        let draws = vb_sample(&st, 10_000, 4).unwrap();
        let c: Vec<f64> = draws.iter().map(|f| f.coeffs()[0]).collect();
        let n = c.len() as f64;
        let mean = c.iter().sum::<f64>() / n;
        let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.5).abs() < 3.0 * 0.2 / n.sqrt());
        // sd of the sample variance is s^2 sqrt(2/n)
        assert!((var - 0.04).abs() < 3.0 * 0.04 * (2.0 / n).sqrt());
        assert_eq!(draws, vb_sample(&st, 10_000, 4).unwrap());

        let pure = VariationalState::from_prior(&prior, 0).unwrap();
        let a = vb_sample(&pure, 3, 9).unwrap();
        assert!(a.iter().all(|f| f.coeffs().len() == 5));
        assert!(VariationalState::from_prior(&prior, 6).is_err());
    }

    #[test]
    fn default_family_size() {
        assert_eq!(default_jq(64, 1000, 0.1, 1.0), 2);
        assert_eq!(default_jq(64, 1000, 0.1, 4.0), 8);
        assert_eq!(default_jq(4, 1000, 0.5, 1.0), 4);
        assert_eq!(default_jq(64, 0, 0.1, 1.0), 1);
    }

    #[test]
    fn step_schedule() {
        let c = VbConfig::default();
        assert_eq!(c.step_size(1), 0.05);
        assert_eq!(c.step_size(100), 0.05);
        assert!((c.step_size(400) - 0.025).abs() < 1e-15);
    }
}
