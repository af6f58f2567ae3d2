//! Empirical checks of the forward-map regularity and stability conditions:
//! uniform bound, Lipschitz ratios and a fitted stability exponent.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exec::ExecMode;
use crate::forward::ForwardMap;
use crate::prior::PriorSpec;
use crate::rng;
use crate::spectral::SpectralField;

/// Pairs with `d_G` below this are left out of the fit.
pub const FIT_FLOOR: f64 = 1e-12;
/// A scan whose `d_G` values all fall below this is degenerate.
pub const DEGENERATE_FLOOR: f64 = 1e-14;
pub const MIN_SCAN_COUNT: usize = 20;

/// `(||F - F0||_{L^2}, d_G(F, F0))` pairs and the least-squares fit of
/// `log ||F - F0|| = log C + eta log d_G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub pairs: Vec<(f64, f64)>,
    pub eta_hat: f64,
    pub log_constant: f64,
    pub r_squared: f64,
}

impl StabilityReport {
    pub fn fit(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.iter().all(|p| p.1 < DEGENERATE_FLOOR) {
            return Err(LabError::DegenerateFit(format!(
                "all {} forward distances are below {DEGENERATE_FLOOR:e}",
                pairs.len()
            )));
        }
        let pts: Vec<(f64, f64)> = pairs
            .iter()
            .filter(|p| p.1 >= FIT_FLOOR && p.0 > 0.0)
            .map(|p| (p.1.ln(), p.0.ln()))
            .collect();
        let (slope, intercept, r2) = least_squares(&pts)
            .ok_or_else(|| LabError::DegenerateFit(format!("only {} usable pairs", pts.len())))?;
        Ok(Self {
            pairs,
            eta_hat: slope,
            log_constant: intercept,
            r_squared: r2,
        })
    }
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, R^2)`.
pub fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let a = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((a, my - a * mx, r2))
}

/// Perturbs `f0` along prior-distributed directions rescaled to each radius in
/// turn and fits the stability exponent. Perturbed fields outside the prior's
/// conditioning ball are redrawn.
pub fn stability_scan<M: ForwardMap + ?Sized>(
    map: &M,
    prior: &PriorSpec,
    f0: &SpectralField,
    radii: &[f64],
    count: usize,
    seed: u64,
) -> Result<StabilityReport> {
    stability_scan_in(ExecMode::default(), map, prior, f0, radii, count, seed)
}

pub fn stability_scan_in<M: ForwardMap + ?Sized>(
    mode: ExecMode,
    map: &M,
    prior: &PriorSpec,
    f0: &SpectralField,
    radii: &[f64],
    count: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if count < MIN_SCAN_COUNT {
        return Err(LabError::Argument(format!("stability scan needs count >= {MIN_SCAN_COUNT}, got {count}")));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(LabError::Argument("radius schedule must be nonempty and positive".into()));
    }
    let s0 = map.apply(f0)?;
    let pairs: Result<Vec<(f64, f64)>> = mode
        .map_range(count, |i| {
            let r = radii[i % radii.len()];
            let mut rng = rng::rng_for(seed, &[i as u64]);
            let mut dir = vec![0.0; f0.coeffs().len()];
            for _ in 0..1000 {
                prior.draw_into(&mut rng, &mut dir);
                let norm = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
                let coeffs: Vec<f64> = f0.coeffs().iter().zip(&dir).map(|(a, d)| a + r * d / norm).collect();
                let f = SpectralField::new(f0.basis().clone(), coeffs)?;
                if prior.in_support(&f) {
                    let s = map.apply(&f)?;
                    return Ok(Some((r, s.l2_distance(&s0)?)));
                }
            }
            Ok(None)
        })
        .into_iter()
        .filter_map(|p| p.transpose())
        .collect();
    StabilityReport::fit(pairs?)
}

/// Largest `sup |G(F)|` over the given fields.
pub fn uniform_bound<M: ForwardMap + ?Sized>(map: &M, fields: &[SpectralField]) -> Result<f64> {
    let sups: Result<Vec<f64>> = ExecMode::default()
        .map(fields, |f| Ok(map.apply(f)?.sup_norm()))
        .into_iter()
        .collect();
    Ok(sups?.into_iter().fold(0.0, f64::max))
}

/// `||G(F1) - G(F2)||_{L^2} / ||F1 - F2||_{H^-kappa}` for each pair.
pub fn lipschitz_ratios<M: ForwardMap + ?Sized>(map: &M, pairs: &[(SpectralField, SpectralField)], kappa: f64) -> Result<Vec<f64>> {
    ExecMode::default()
        .map(pairs, |(a, b)| {
            let num = map.apply(a)?.l2_distance(&map.apply(b)?)?;
            Ok(num / a.sub(b)?.norm_hs(-kappa))
        })
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{ForwardProblem, LinearForward, PdeForward, Profile};
    use crate::link::LinkSpec;
    use crate::prior::sample_prior;
    use crate::spectral::{synthesize_truth, BasisSpec};

    const RADII: [f64; 5] = [0.01, 0.03, 0.1, 0.3, 1.0];

    #[test]
    fn identity_map_has_unit_exponent() {
        let basis = BasisSpec::new(1, 10).unwrap();
        let map = LinearForward::new(basis.clone());
        let prior = PriorSpec::new(2.0, 0.0, 1, basis.clone()).unwrap();
        let f0 = synthesize_truth(1.0, &basis, 1).unwrap();
        let rep = stability_scan(&map, &prior, &f0, &RADII, 40, 7).unwrap();
        assert!((rep.eta_hat - 1.0).abs() < 0.05, "{}", rep.eta_hat);
        assert_eq!(rep, stability_scan(&map, &prior, &f0, &RADII, 40, 7).unwrap());
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("eta_hat"));
    }

    #[test]
    fn potential_problem_is_stable() {
        let basis = BasisSpec::new(1, 10).unwrap();
        let map = PdeForward::new(
            ForwardProblem::potential(1, 64, Profile::Constant { value: 10.0 }),
            LinkSpec::new(0.5, 4.0).unwrap(),
            basis.clone(),
        )
        .unwrap();
        let prior = PriorSpec::new(3.0, 0.0, 1, basis.clone()).unwrap();
        let f0 = synthesize_truth(1.0, &basis, 1).unwrap();
        let rep = stability_scan(&map, &prior, &f0, &RADII, 40, 3).unwrap();
        assert!(rep.eta_hat > 0.0 && rep.r_squared > 0.8, "{rep:?}");
    }

    #[test]
    fn degenerate_and_small_scans_fail() {
        let basis = BasisSpec::new(1, 4).unwrap();
        let map = LinearForward::new(basis.clone());
        let prior = PriorSpec::new(2.0, 0.0, 1, basis.clone()).unwrap();
        let f0 = SpectralField::zeros(&basis);
        assert!(stability_scan(&map, &prior, &f0, &RADII, 10, 1).is_err());
        assert!(matches!(
            stability_scan(&map, &prior, &f0, &[1e-16], 20, 1),
            Err(LabError::DegenerateFit(_))
        ));
    }

    #[test]
    fn regularity_diagnostics() {
        let basis = BasisSpec::new(1, 10).unwrap();
        let map = PdeForward::new(
            ForwardProblem::potential(1, 64, Profile::Constant { value: 10.0 }),
            LinkSpec::new(0.5, 4.0).unwrap(),
            basis.clone(),
        )
        .unwrap();
        let prior = PriorSpec::new(3.0, 0.0, 1, basis).unwrap().with_conditioning(2.0).unwrap();
        let draws = sample_prior(&prior, 100, 5).unwrap();
        let u = uniform_bound(&map, &draws).unwrap();
        assert!(u > 0.0 && u <= 20.0);
        let pairs: Vec<_> = draws.chunks(2).map(|w| (w[0].clone(), w[1].clone())).collect();
        let ratios = lipschitz_ratios(&map, &pairs, 1.0).unwrap();
        let max = ratios.iter().copied().fold(0.0, f64::max);
        assert!(max.is_finite() && max < 100.0, "{max}");
    }
}
