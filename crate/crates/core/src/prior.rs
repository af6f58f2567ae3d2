//! Whittle-Matérn Gaussian priors realised in the sine basis: base prior,
//! `N^-h` rescaled prior and the H^1-ball conditioned prior.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exec::ExecMode;
use crate::rng;
use crate::spectral::{BasisSpec, SpectralField};

/// Pilot window used to certify that ball conditioning is feasible.
pub const CONDITIONING_WINDOW: usize = 100_000;
/// Minimum acceptance rate over the pilot window.
pub const CONDITIONING_FLOOR: f64 = 1e-4;
/// Sobolev order of the conditioning ball.
pub const CONDITIONING_NORM_ORDER: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    alpha: f64,
    h: f64,
    n: usize,
    basis: BasisSpec,
    cond_radius: Option<f64>,
}

impl PriorSpec {
    pub fn new(alpha: f64, h: f64, n: usize, basis: BasisSpec) -> Result<Self> {
        let d = basis.dim() as f64;
        if !(alpha > d / 2.0) {
            return Err(LabError::Argument(format!("prior smoothness alpha = {alpha} must exceed d/2 = {}", d / 2.0)));
        }
        if !(h >= 0.0) || !h.is_finite() {
            return Err(LabError::Argument(format!("rescale exponent h = {h} must be >= 0")));
        }
        if n == 0 {
            return Err(LabError::Argument("sample size N must be at least 1".into()));
        }
        Ok(Self {
            alpha,
            h,
            n,
            basis,
            cond_radius: None,
        })
    }

    /// Restricts the prior to `{ ||F||_{H^1} <= radius }`.
    pub fn with_conditioning(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(LabError::Argument(format!("conditioning radius must be positive, got {radius}")));
        }
        self.cond_radius = Some(radius);
        Ok(self)
    }

    /// Same prior with the sample size replaced.
    pub fn with_sample_size(&self, n: usize) -> Result<Self> {
        let mut out = Self::new(self.alpha, self.h, n, self.basis.clone())?;
        out.cond_radius = self.cond_radius;
        Ok(out)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn sample_size(&self) -> usize {
        self.n
    }
    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }
    pub fn cond_radius(&self) -> Option<f64> {
        self.cond_radius
    }

    /// Standard deviation `N^-h j^(-alpha/d)` of the 0-based coefficient `j`.
    pub fn std_dev(&self, j: usize) -> f64 {
        let d = self.basis.dim() as f64;
        (self.n as f64).powf(-self.h) * ((j + 1) as f64).powf(-self.alpha / d)
    }

    pub fn std_devs(&self) -> Vec<f64> {
        (0..self.basis.len()).map(|j| self.std_dev(j)).collect()
    }

    pub fn in_support(&self, field: &SpectralField) -> bool {
        match self.cond_radius {
            Some(m) => field.norm_hs(CONDITIONING_NORM_ORDER) <= m,
            None => true,
        }
    }

    /// Unconstrained draw into `out` (ignores conditioning).
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (j, c) in out.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *c = self.std_dev(j) * z;
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SpectralField {
        let mut coeffs = vec![0.0; self.basis.len()];
        self.draw_into(rng, &mut coeffs);
        SpectralField::new(self.basis.clone(), coeffs).expect("basis length matches")
    }
}

/// `count` independent prior draws. Draw `i` uses its own stream, so the
/// result is independent of the execution mode.
pub fn sample_prior(spec: &PriorSpec, count: usize, seed: u64) -> Result<Vec<SpectralField>> {
    sample_prior_in(ExecMode::default(), spec, count, seed)
}

pub fn sample_prior_in(mode: ExecMode, spec: &PriorSpec, count: usize, seed: u64) -> Result<Vec<SpectralField>> {
    if count == 0 {
        return Err(LabError::Argument("count must be at least 1".into()));
    }
    if spec.cond_radius.is_none() {
        return Ok(mode.map_range(count, |i| spec.draw(&mut rng::rng_for(seed, &[i as u64]))));
    }
    certify_conditioning(spec, seed)?;
    let per_draw_cap = 10 * CONDITIONING_WINDOW;
    mode.map_range(count, |i| {
        let mut rng = rng::rng_for(seed, &[i as u64]);
        for _ in 0..per_draw_cap {
            let f = spec.draw(&mut rng);
            if spec.in_support(&f) {
                return Ok(f);
            }
        }
        Err(LabError::InfeasibleConditioning {
            accepted: 0,
            attempts: per_draw_cap,
        })
    })
    .into_iter()
    .collect()
}

/// Runs the pilot window; fails when the acceptance rate is provably below
/// [`CONDITIONING_FLOOR`].
fn certify_conditioning(spec: &PriorSpec, seed: u64) -> Result<()> {
    let needed = (CONDITIONING_FLOOR * CONDITIONING_WINDOW as f64).ceil() as usize;
    let mut rng = rng::rng_for(seed, &[u64::MAX, 0x7069_6c6f]);
    let mut accepted = 0;
    for _ in 0..CONDITIONING_WINDOW {
        if spec.in_support(&spec.draw(&mut rng)) {
            accepted += 1;
            if accepted >= needed {
                return Ok(());
            }
        }
    }
    Err(LabError::InfeasibleConditioning {
        accepted,
        attempts: CONDITIONING_WINDOW,
    })
}

/// Unnormalised log-density `-1/2 sum_j c_j^2 / tau_j^2`, or `-inf` outside
/// the conditioning ball.
pub fn prior_logdensity(spec: &PriorSpec, field: &SpectralField) -> f64 {
    if !spec.in_support(field) {
        return f64::NEG_INFINITY;
    }
    -0.5 * field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let t = spec.std_dev(j);
            c * c / (t * t)
        })
        .sum::<f64>()
}

/// Plain serialisable prior section of an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub alpha: f64,
    #[serde(default)]
    pub h: f64,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    /// Condition on the H^1 ball even when `M` is not given.
    #[serde(default)]
    pub conditioned: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> BasisSpec {
        BasisSpec::new(1, 8).unwrap()
    }

    fn sample_var(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    }

    #[test]
    fn rescaled_variance_matches_moment_oracle() {
        let spec = PriorSpec::new(3.0, 0.05, 1024, basis()).unwrap();
        let draws = sample_prior(&spec, 10_000, 5).unwrap();
        let c1: Vec<f64> = draws.iter().map(|f| f.coeffs()[0]).collect();
        let want = 1024f64.powf(-0.1);
        assert!((sample_var(&c1) / want - 1.0).abs() < 0.05);
    }

    #[test]
    fn base_prior_variances() {
        let spec = PriorSpec::new(2.0, 0.0, 500, basis()).unwrap();
        let draws = sample_prior(&spec, 10_000, 9).unwrap();
        for j in 0..4 {
            let cj: Vec<f64> = draws.iter().map(|f| f.coeffs()[j]).collect();
            let want = ((j + 1) as f64).powf(-4.0);
            // sd of the sample variance is want * sqrt(2/n) ~ 1.4% of want
            assert!((sample_var(&cj) / want - 1.0).abs() < 0.06, "j={j}");
        }
    }

    #[test]
    fn rescaling_is_scalar_map_of_base_draws() {
        let base = PriorSpec::new(3.0, 0.0, 4096, basis()).unwrap();
        let scaled = PriorSpec::new(3.0, 0.05, 4096, basis()).unwrap();
        let a = sample_prior(&base, 20, 1).unwrap();
        let b = sample_prior(&scaled, 20, 1).unwrap();
        let k = 4096f64.powf(-0.05);
        for (fa, fb) in a.iter().zip(&b) {
            for (x, y) in fa.coeffs().iter().zip(fb.coeffs()) {
                assert!((x * k - y).abs() <= 1e-15 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn conditioned_draws_stay_in_ball() {
        let spec = PriorSpec::new(2.0, 0.0, 1, basis()).unwrap().with_conditioning(0.8).unwrap();
        let draws = sample_prior(&spec, 500, 3).unwrap();
        assert_eq!(draws.len(), 500);
        assert!(draws.iter().all(|f| f.norm_hs(1.0) <= 0.8));
    }

    #[test]
    fn tiny_ball_is_infeasible() {
        let spec = PriorSpec::new(2.0, 0.0, 1, basis()).unwrap().with_conditioning(1e-3).unwrap();
        assert!(matches!(
            sample_prior(&spec, 1, 3),
            Err(LabError::InfeasibleConditioning { .. })
        ));
    }

    #[test]
    fn logdensity_examples() {
        let spec = PriorSpec::new(3.0, 0.05, 256, basis()).unwrap();
        assert_eq!(prior_logdensity(&spec, &SpectralField::zeros(spec.basis())), 0.0);
        let mut f = SpectralField::zeros(spec.basis());
        f.coeffs_mut()[0] = spec.std_dev(0);
        assert!((prior_logdensity(&spec, &f) + 0.5).abs() < 1e-14);

        // doubling N scales the quadratic form by 2^(2h)
        let g = SpectralField::new(spec.basis().clone(), vec![0.3, -0.2, 0.1, 0.0, 0.05, 0.0, 0.0, 0.01]).unwrap();
        let spec2 = spec.with_sample_size(512).unwrap();
        let ratio = prior_logdensity(&spec2, &g) / prior_logdensity(&spec, &g);
        assert!((ratio - 2f64.powf(0.1)).abs() < 1e-12);

        let ball = spec.clone().with_conditioning(0.1).unwrap();
        assert_eq!(prior_logdensity(&ball, &g), f64::NEG_INFINITY);
    }

    #[test]
    fn logdensity_is_concave_along_lines() {
        let spec = PriorSpec::new(3.0, 0.05, 256, basis()).unwrap();
        let draws = sample_prior(&spec, 6, 2).unwrap();
        for w in draws.chunks(2) {
            let mid = w[0].add(&w[1]).unwrap().scale(0.5);
            let lhs = prior_logdensity(&spec, &mid);
            let rhs = 0.5 * (prior_logdensity(&spec, &w[0]) + prior_logdensity(&spec, &w[1]));
            assert!(lhs >= rhs);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(PriorSpec::new(0.5, 0.0, 1, basis()).is_err());
        assert!(PriorSpec::new(2.0, -0.1, 1, basis()).is_err());
        assert!(PriorSpec::new(2.0, 0.1, 0, basis()).is_err());
        let s = PriorSpec::new(2.0, 0.1, 10, basis()).unwrap();
        assert!(s.std_devs().windows(2).all(|w| w[1] < w[0]));
    }
}
