//! Divergences between the laws of one observation `(X, Y)` under two
//! regression functions, with `X` uniform on the cube and Gaussian noise.
//!
//! With `D(x) = G(F0)(x) - G(F)(x)` the log-likelihood ratio under `P_F0` is
//! `W D / sigma + D^2 / (2 sigma^2)` with `W ~ N(0, 1)` independent of `X`, so
//! its variance is `E[D^2] / sigma^2 + Var_X(D^2 / (2 sigma^2))`.

use crate::error::{LabError, Result};
use crate::forward::{ForwardMap, ForwardState};
use crate::spectral::SpectralField;

/// All divergences of one pair at once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Divergences {
    pub d_g: f64,
    pub hellinger: f64,
    pub kl: f64,
    pub variance: f64,
}

impl Divergences {
    pub fn between(s0: &ForwardState, s: &ForwardState, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        let s2 = sigma * sigma;
        let d2 = s0.integrate_with(s, |a, b| (a - b) * (a - b))?;
        // h^2 = 2 - 2 int exp(-D^2 / (8 sigma^2)), summed as -expm1 to keep small values exact
        let h2 = 2.0 * s0.integrate_with(s, |a, b| -(-(a - b) * (a - b) / (8.0 * s2)).exp_m1())?;
        let q2 = s0.integrate_with(s, |a, b| ((a - b) * (a - b) / (2.0 * s2)).powi(2))?;
        let kl = d2 / (2.0 * s2);
        Ok(Self {
            d_g: d2.sqrt(),
            hellinger: h2.max(0.0).sqrt(),
            kl,
            variance: d2 / s2 + (q2 - kl * kl).max(0.0),
        })
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(LabError::Argument(format!("noise level sigma = {sigma} must be positive")))
    }
}

fn states<M: ForwardMap + ?Sized>(map: &M, f1: &SpectralField, f2: &SpectralField) -> Result<(ForwardState, ForwardState)> {
    Ok((map.apply(f1)?, map.apply(f2)?))
}

/// `||G(F1) - G(F2)||_{L^2}`.
pub fn d_g<M: ForwardMap + ?Sized>(map: &M, f1: &SpectralField, f2: &SpectralField) -> Result<f64> {
    let (a, b) = states(map, f1, f2)?;
    a.l2_distance(&b)
}

pub fn hellinger<M: ForwardMap + ?Sized>(map: &M, f1: &SpectralField, f2: &SpectralField, sigma: f64) -> Result<f64> {
    let (a, b) = states(map, f1, f2)?;
    Ok(Divergences::between(&a, &b, sigma)?.hellinger)
}

/// `D_KL(P_F0 || P_F)`.
pub fn kl_divergence<M: ForwardMap + ?Sized>(map: &M, f0: &SpectralField, f: &SpectralField, sigma: f64) -> Result<f64> {
    let (a, b) = states(map, f0, f)?;
    Ok(Divergences::between(&a, &b, sigma)?.kl)
}

/// `V(P_F0, P_F)`, the variance of the log-likelihood ratio under `P_F0`.
pub fn variance_logratio<M: ForwardMap + ?Sized>(map: &M, f0: &SpectralField, f: &SpectralField, sigma: f64) -> Result<f64> {
    let (a, b) = states(map, f0, f)?;
    Ok(Divergences::between(&a, &b, sigma)?.variance)
}

/// Whether `D_KL(P_F0 || P_F) <= n delta^2` and `V(P_F0, P_F) <= n delta^2`.
pub fn kl_neighborhood_contains<M: ForwardMap + ?Sized>(
    map: &M,
    f: &SpectralField,
    f0: &SpectralField,
    sigma: f64,
    delta: f64,
    n: usize,
) -> Result<bool> {
    let (a, b) = states(map, f0, f)?;
    let div = Divergences::between(&a, &b, sigma)?;
    let r = n as f64 * delta * delta;
    Ok(div.kl <= r && div.variance <= r)
}

/// Renyi divergence of order `tau` between two states.
pub fn renyi_states(s0: &ForwardState, s: &ForwardState, sigma: f64, tau: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(LabError::Argument(format!("Renyi order tau = {tau} must be >= 0")));
    }
    if tau == 1.0 {
        return Err(LabError::Argument("Renyi order tau = 1 is the KL divergence; use kl_divergence".into()));
    }
    let k = tau * (tau - 1.0) / (2.0 * sigma * sigma);
    // log of the mean of exp(k D^2), shifted by the largest exponent
    let mut top = 0.0f64;
    s0.integrate_with(s, |a, b| {
        top = top.max(k * (a - b) * (a - b));
        0.0
    })?;
    let total = s0.integrate_with(s, |_, _| 1.0)?;
    let excess = s0.integrate_with(s, |a, b| (k * (a - b) * (a - b) - top).exp_m1())? / total;
    Ok((excess.ln_1p() + top) / (tau - 1.0))
}

/// `D_tau(P_F0 || P_F)` for one observation.
pub fn renyi_divergence<M: ForwardMap + ?Sized>(
    map: &M,
    f0: &SpectralField,
    f: &SpectralField,
    sigma: f64,
    tau: f64,
) -> Result<f64> {
    let (a, b) = states(map, f0, f)?;
    renyi_states(&a, &b, sigma, tau)
}

/// `D_tau` of the `n`-fold product laws, which tensorizes to `n D_tau`.
pub fn renyi_divergence_product<M: ForwardMap + ?Sized>(
    map: &M,
    f0: &SpectralField,
    f: &SpectralField,
    sigma: f64,
    tau: f64,
    n: usize,
) -> Result<f64> {
    Ok(n as f64 * renyi_divergence(map, f0, f, sigma, tau)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{ForwardProblem, LinearForward, PdeForward, Profile};
    use crate::link::LinkSpec;
    use crate::prior::{sample_prior, PriorSpec};
    use crate::rng::rng_for;
    use crate::spectral::BasisSpec;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn potential() -> PdeForward {
        PdeForward::new(
            ForwardProblem::potential(1, 64, Profile::Constant { value: 10.0 }),
            LinkSpec::new(0.5, 4.0).unwrap(),
            BasisSpec::new(1, 8).unwrap(),
        )
        .unwrap()
    }

    fn pairs(map: &impl ForwardMap, count: usize, seed: u64) -> Vec<(SpectralField, SpectralField)> {
        let spec = PriorSpec::new(2.0, 0.0, 1, map.basis().clone()).unwrap();
        let draws = sample_prior(&spec, 2 * count, seed).unwrap();
        draws.chunks(2).map(|w| (w[0].clone(), w[1].clone())).collect()
    }

    #[test]
    fn identical_fields_give_zero() {
        let map = potential();
        let (f, _) = pairs(&map, 1, 1).pop().unwrap();
        assert_eq!(d_g(&map, &f, &f).unwrap(), 0.0);
        assert_eq!(hellinger(&map, &f, &f, 1.0).unwrap(), 0.0);
        assert_eq!(kl_divergence(&map, &f, &f, 1.0).unwrap(), 0.0);
        assert_eq!(variance_logratio(&map, &f, &f, 1.0).unwrap(), 0.0);
        for tau in [0.0, 0.5, 2.0, 5.0] {
            assert_eq!(renyi_divergence(&map, &f, &f, 1.0, tau).unwrap(), 0.0);
        }
        assert!(renyi_divergence(&map, &f, &f, 1.0, 1.0).is_err());
    }

    #[test]
    fn metric_properties_of_d_g() {
        let map = potential();
        let spec = PriorSpec::new(2.0, 0.0, 1, map.basis().clone()).unwrap();
        let f = sample_prior(&spec, 30, 2).unwrap();
        for t in f.chunks(3) {
            let ab = d_g(&map, &t[0], &t[1]).unwrap();
            assert_eq!(ab, d_g(&map, &t[1], &t[0]).unwrap());
            let ac = d_g(&map, &t[0], &t[2]).unwrap();
            let bc = d_g(&map, &t[1], &t[2]).unwrap();
            assert!(ac <= ab + bc + 1e-14);
        }
    }

    #[test]
    fn hellinger_sandwich_and_kl_relation() {
        let map = potential();
        for (f1, f2) in pairs(&map, 100, 3) {
            let (a, b) = (map.apply(&f1).unwrap(), map.apply(&f2).unwrap());
            let u = a.sup_norm().max(b.sup_norm());
            let div = Divergences::between(&a, &b, 1.0).unwrap();
            let c_u = ((1.0 - (-u * u / 2.0).exp()) / (2.0 * u * u)).sqrt();
            assert!(div.hellinger <= 0.5 * div.d_g + 1e-15);
            assert!(div.hellinger >= c_u * div.d_g - 1e-15);
            assert!(div.hellinger.powi(2) <= 2.0 * div.kl + 1e-15);
            let d2 = renyi_states(&a, &b, 1.0, 2.0).unwrap();
            assert!(d2 <= (4.0 * u * u).exp() * div.d_g * div.d_g);
        }
    }

    #[test]
    fn kl_and_variance_match_monte_carlo() {
        // joint law of (X, Y) under F0: log ratio = ((Y - G)^2 - (Y - G0)^2) / (2 sigma^2)
        let map = potential();
        let (f0, f) = pairs(&map, 1, 9).pop().unwrap();
        let f = f0.add(&f.scale(4.0)).unwrap();
        let (s0, s) = (map.apply(&f0).unwrap(), map.apply(&f).unwrap());
        let sigma = 0.02;
        let div = Divergences::between(&s0, &s, sigma).unwrap();
        let mut rng = rng_for(77, &[]);
        let n = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let x: f64 = rng.random();
            let (g0, g) = (s0.evaluate(&[x]), s.evaluate(&[x]));
            let w: f64 = rng.sample(StandardNormal);
            let y = g0 + sigma * w;
            let l = ((y - g).powi(2) - (y - g0).powi(2)) / (2.0 * sigma * sigma);
            sum += l;
            sum2 += l * l;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((mean / div.kl - 1.0).abs() < 0.01, "kl {} vs mc {mean}", div.kl);
        assert!((var / div.variance - 1.0).abs() < 0.01, "V {} vs mc {var}", div.variance);
        // the cross term matters at this scale
        assert!(div.variance > 1.01 * div.d_g * div.d_g / (sigma * sigma));
    }

    #[test]
    fn renyi_limit_and_tensorization() {
        let map = LinearForward::new(BasisSpec::new(1, 6).unwrap());
        for (f0, f) in pairs(&map, 5, 4) {
            let kl = kl_divergence(&map, &f0, &f, 0.5).unwrap();
            let near = renyi_divergence(&map, &f0, &f, 0.5, 1.001).unwrap();
            assert!((near / kl - 1.0).abs() < 0.01);
            let one = renyi_divergence(&map, &f0, &f, 0.5, 2.0).unwrap();
            let prod = renyi_divergence_product(&map, &f0, &f, 0.5, 2.0, 37).unwrap();
            assert!((prod - 37.0 * one).abs() < 1e-12 * prod);
        }
    }

    #[test]
    fn kl_neighborhood_membership() {
        let map = LinearForward::new(BasisSpec::new(1, 4).unwrap());
        let f0 = SpectralField::new(map.basis().clone(), vec![0.5, 0.1, 0.0, 0.0]).unwrap();
        let f = SpectralField::new(map.basis().clone(), vec![0.6, 0.1, 0.0, 0.0]).unwrap();
        let s0 = map.apply(&f0).unwrap();
        let div = Divergences::between(&s0, &map.apply(&f).unwrap(), 1.0).unwrap();
        let radius = div.kl.max(div.variance);
        let delta = |n: usize, scale: f64| (scale * radius / n as f64).sqrt();
        assert!(kl_neighborhood_contains(&map, &f, &f0, 1.0, delta(10, 1.001), 10).unwrap());
        assert!(!kl_neighborhood_contains(&map, &f, &f0, 1.0, delta(10, 0.999), 10).unwrap());
        assert!(kl_neighborhood_contains(&map, &f0, &f0, 1.0, 0.0, 10).unwrap());
    }
}
