//! The (P1)-(P5) feasibility system linking the contraction exponent `b`, the
//! truncation exponent `c`, the rescaling exponent `h` and the sieve exponent
//! `rho`, and a search for the smallest feasible `b`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Slack allowed on each constraint.
pub const FEASIBILITY_TOL: f64 = 1e-12;
/// Grid step of the `b` scan before bisection.
pub const SCAN_STEP: f64 = 1e-3;
/// Bisection resolution of the returned `b`.
pub const RATE_RESOLUTION: f64 = 1e-6;

/// Model constants of the system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub alpha: f64,
    pub beta: f64,
    pub d: f64,
    pub kappa: f64,
    pub l: f64,
}

impl RateConstants {
    pub fn new(alpha: f64, beta: f64, d: f64, kappa: f64, l: f64) -> Result<Self> {
        let k = Self {
            alpha,
            beta,
            d,
            kappa,
            l,
        };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        if !(self.d > 0.0) || [self.alpha, self.beta, self.kappa, self.l].iter().any(|v| !(*v >= 0.0)) {
            return Err(LabError::Argument(format!("rate constants must be nonnegative with d > 0: {self:?}")));
        }
        let denom = 2.0 * self.alpha + 2.0 * self.kappa - self.d;
        if denom <= 0.0 {
            return Err(LabError::IllPosedConstants(denom));
        }
        Ok(())
    }

    /// Smallest `b` allowed by the dominant restriction
    /// `b >= -(1 - 2h)(beta + kappa) / (2 alpha + 2 kappa + d)`.
    pub fn dominant_bound(&self, h: f64) -> f64 {
        -(1.0 - 2.0 * h) * (self.beta + self.kappa) / (2.0 * self.alpha + 2.0 * self.kappa + self.d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub b: f64,
    pub c: f64,
    pub h: f64,
    pub rho: f64,
    #[serde(flatten)]
    pub constants: RateConstants,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    P3,
    #[serde(rename = "p3prime")]
    P3Prime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Residual must be `>= -tol`.
    Inequality,
    /// `|residual| <= tol`.
    Equality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub kind: ConstraintKind,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub params: RateParams,
    pub variant: Variant,
    pub residuals: Vec<Residual>,
    pub feasible: bool,
}

impl ConstraintReport {
    pub fn violated(&self) -> Vec<String> {
        self.residuals.iter().filter(|r| !r.satisfied).map(|r| r.name.clone()).collect()
    }
}

/// Signed residuals of (P1)..(P5); (P3) is replaced by (P3)' for [`Variant::P3Prime`].
pub fn residuals(p: &RateParams, variant: Variant) -> [(&'static str, f64, ConstraintKind); 5] {
    let RateConstants {
        alpha,
        beta,
        d,
        kappa,
        l,
    } = p.constants;
    let (b, c, h, rho) = (p.b, p.c, p.h, p.rho);
    let denom = 2.0 * alpha + 2.0 * kappa - d;
    let p1 = b + c * (kappa + beta) / d;
    let p2 = (1.0 + 2.0 * b) - (c * (2.0 * (alpha - beta) / d + 1.0) + 2.0 * h);
    let mut p3 = (1.0 + 2.0 * b) + (b + h) * 2.0 * d / denom;
    if variant == Variant::P3Prime {
        p3 -= 2.0 * rho * l * d / denom;
    }
    let p4 = (b + 0.5) - (rho + h);
    let p5 = (1.0 + 2.0 * b) - ((b - rho) * (-d / (alpha + kappa)) + rho * l * d / (alpha + kappa));
    use ConstraintKind::*;
    [
        ("P1", p1, Inequality),
        ("P2", p2, Inequality),
        (if variant == Variant::P3 { "P3" } else { "P3'" }, p3, Inequality),
        ("P4", p4, Equality),
        ("P5", p5, Inequality),
    ]
}

pub fn check_constraints(params: &RateParams, variant: Variant) -> Result<ConstraintReport> {
    params.constants.validate()?;
    let residuals: Vec<Residual> = residuals(params, variant)
        .into_iter()
        .map(|(name, value, kind)| Residual {
            name: name.to_string(),
            value,
            kind,
            satisfied: match kind {
                ConstraintKind::Inequality => value >= -FEASIBILITY_TOL,
                ConstraintKind::Equality => value.abs() <= FEASIBILITY_TOL,
            },
        })
        .collect();
    let feasible = residuals.iter().all(|r| r.satisfied);
    Ok(ConstraintReport {
        params: *params,
        variant,
        residuals,
        feasible,
    })
}

/// Feasible `c` range for fixed `b` and `h` from (P1) and (P2), the only
/// constraints involving `c`.
fn c_interval(k: &RateConstants, b: f64, h: f64) -> (f64, f64) {
    let mut lo = f64::MIN_POSITIVE;
    let mut hi = f64::INFINITY;
    // (P1): c (kappa + beta) / d >= -b
    let a1 = (k.kappa + k.beta) / k.d;
    if a1 > 0.0 {
        lo = lo.max(-b / a1);
    } else if b < 0.0 {
        return (1.0, 0.0);
    }
    // (P2): c (2 (alpha - beta) / d + 1) <= 1 + 2b - 2h
    let a2 = 2.0 * (k.alpha - k.beta) / k.d + 1.0;
    let r2 = 1.0 + 2.0 * b - 2.0 * h;
    if a2 > 0.0 {
        hi = hi.min(r2 / a2);
    } else if a2 < 0.0 {
        lo = lo.max(r2 / a2);
    } else if r2 < 0.0 {
        return (1.0, 0.0);
    }
    (lo, hi)
}

/// Candidate tuple at `b`, or `None` when no `c` works.
fn candidate(k: &RateConstants, b: f64, h: f64, variant: Variant) -> (Option<RateParams>, RateParams) {
    let (lo, hi) = c_interval(k, b, h);
    let c = if hi.is_finite() { 0.5 * (lo + hi) } else { lo.max(1.0) };
    let p = RateParams {
        b,
        c: if c > 0.0 { c } else { lo },
        h,
        rho: b + 0.5 - h,
        constants: *k,
    };
    let ok = lo <= hi + FEASIBILITY_TOL
        && p.rho >= 0.0
        && check_constraints(&p, variant).map(|r| r.feasible).unwrap_or(false);
    (ok.then_some(p), p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestRate {
    pub params: RateParams,
    pub report: ConstraintReport,
    /// Feasible `c` range at the returned `b`.
    pub c_range: (f64, f64),
}

/// Smallest feasible `b` on `[h - 1/2, 0)` with `rho = b + 1/2 - h` and `c` in
/// the middle of its feasible range.
pub fn solve_best_rate(constants: &RateConstants, h: f64, variant: Variant) -> Result<BestRate> {
    constants.validate()?;
    if !(h > 0.0 && h < 0.5) {
        return Err(LabError::Argument(format!("rescale exponent h = {h} must lie in (0, 1/2)")));
    }
    let lower = h - 0.5;
    let steps = (-lower / SCAN_STEP).ceil() as usize;
    let grid: Vec<f64> = (0..steps).map(|i| lower + i as f64 * SCAN_STEP).chain([-RATE_RESOLUTION]).collect();
    let first = grid.iter().position(|&b| candidate(constants, b, h, variant).0.is_some());
    let Some(idx) = first else {
        return Err(LabError::Infeasible {
            binding: binding_constraints(constants, h, variant, &grid),
        });
    };
    let (mut bad, mut good) = if idx == 0 { (grid[0], grid[0]) } else { (grid[idx - 1], grid[idx]) };
    while good - bad > RATE_RESOLUTION {
        let mid = 0.5 * (bad + good);
        if candidate(constants, mid, h, variant).0.is_some() {
            good = mid;
        } else {
            bad = mid;
        }
    }
    let params = candidate(constants, good, h, variant).0.expect("bisection keeps a feasible end");
    let report = check_constraints(&params, variant)?;
    Ok(BestRate {
        params,
        report,
        c_range: c_interval(constants, good, h),
    })
}

fn binding_constraints(k: &RateConstants, h: f64, variant: Variant, grid: &[f64]) -> Vec<String> {
    let mut counts: Vec<(String, usize)> = vec![];
    let mut best: Option<(f64, Vec<String>)> = None;
    for &b in grid {
        let (_, p) = candidate(k, b, h, variant);
        let (lo, hi) = c_interval(k, b, h);
        let Ok(rep) = check_constraints(&p, variant) else { continue };
        let mut names = rep.violated();
        if lo > hi {
            names.push("P1/P2 (no admissible c)".into());
        }
        let total: f64 = rep.residuals.iter().filter(|r| !r.satisfied).map(|r| r.value.abs()).sum();
        for n in &names {
            match counts.iter_mut().find(|(m, _)| m == n) {
                Some(e) => e.1 += 1,
                None => counts.push((n.clone(), 1)),
            }
        }
        if best.as_ref().is_none_or(|(t, _)| total < *t) {
            best = Some((total, names));
        }
    }
    let always: Vec<String> = counts.into_iter().filter(|(_, c)| *c == grid.len()).map(|(n, _)| n).collect();
    if always.is_empty() {
        best.map(|b| b.1).unwrap_or_default()
    } else {
        always
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(b: f64, h: f64, c: f64, rho: f64, k: (f64, f64, f64, f64, f64)) -> RateParams {
        RateParams {
            b,
            c,
            h,
            rho,
            constants: RateConstants::new(k.0, k.1, k.2, k.3, k.4).unwrap(),
        }
    }

    #[test]
    fn diffusion_tuple_is_feasible() {
        let p = params(-0.1, 0.05, 0.22, 0.35, (3.0, 1.0, 2.0, 0.0, 0.0));
        let rep = check_constraints(&p, Variant::P3).unwrap();
        assert!(rep.feasible, "{rep:?}");
        // the decimal inputs are not dyadic, so P4 is zero only to rounding
        assert!(rep.residuals[3].value.abs() < 1e-15);
        // hand values: P1 = -0.1 + 0.22/2, P2 = 0.8 - (0.22*3 + 0.1), P5 = 0.8 - 0.3
        assert!((rep.residuals[0].value - 0.01).abs() < 1e-15);
        assert!((rep.residuals[1].value - 0.04).abs() < 1e-15);
        assert!((rep.residuals[4].value - 0.5).abs() < 1e-15);
        assert!(check_constraints(&p, Variant::P3Prime).unwrap().feasible);
    }

    #[test]
    fn potential_tuples_are_feasible() {
        for (d, c) in [(1.0, 0.1), (2.0, 0.15), (3.0, 0.25)] {
            let p = params(-0.15, 0.05, c, 0.3, (3.0, 1.0, d, 1.0, 1.0));
            for v in [Variant::P3, Variant::P3Prime] {
                let rep = check_constraints(&p, v).unwrap();
                assert!(rep.feasible, "d={d} {v:?}: {rep:?}");
            }
        }
        // the truncation exponent is tied to the dimension
        let p = params(-0.15, 0.05, 0.25, 0.3, (3.0, 1.0, 1.0, 1.0, 1.0));
        assert_eq!(check_constraints(&p, Variant::P3).unwrap().violated(), vec!["P2"]);
    }

    #[test]
    fn perturbed_tuple_fails_p1() {
        let p = params(-0.12, 0.05, 0.22, 0.37, (3.0, 1.0, 2.0, 0.0, 0.0));
        let rep = check_constraints(&p, Variant::P3).unwrap();
        assert!((rep.residuals[0].value + 0.01).abs() < 1e-15);
        assert!(!rep.feasible);
    }

    #[test]
    fn ill_posed_constants() {
        assert!(matches!(RateConstants::new(0.5, 1.0, 2.0, 0.0, 0.0), Err(LabError::IllPosedConstants(_))));
    }

    #[test]
    fn best_rate_examples() {
        let k = RateConstants::new(3.0, 1.0, 2.0, 0.0, 0.0).unwrap();
        let best = solve_best_rate(&k, 0.05, Variant::P3).unwrap();
        assert!(best.params.b <= -0.1 && best.report.feasible);
        assert!((best.params.b - k.dominant_bound(0.05)).abs() < 1e-6);
        let mut worse = best.params;
        worse.b -= 1e-3;
        worse.rho = worse.b + 0.5 - worse.h;
        let (lo, hi) = c_interval(&k, worse.b, worse.h);
        assert!(lo > hi);

        let near_half = solve_best_rate(&k, 0.49, Variant::P3).unwrap();
        assert!(near_half.params.b > -0.01);

        let k1 = RateConstants::new(3.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let b1 = solve_best_rate(&k1, 0.05, Variant::P3Prime).unwrap();
        assert!(b1.params.b <= -0.15 && b1.report.feasible);
    }

    #[test]
    fn brute_force_grid_oracle() {
        // minimal feasible b over a (b, c) grid at 1e-3, independent of the interval algebra
        let k = RateConstants::new(3.0, 1.0, 2.0, 0.0, 0.0).unwrap();
        let h = 0.05;
        let mut best = 0.0f64;
        for i in 0..450 {
            let b = -0.45 + i as f64 * 1e-3;
            let feasible = (1..1000).any(|j| {
                let c = j as f64 * 1e-3;
                let p = RateParams {
                    b,
                    c,
                    h,
                    rho: b + 0.5 - h,
                    constants: k,
                };
                check_constraints(&p, Variant::P3).unwrap().feasible
            });
            if feasible {
                best = b;
                break;
            }
        }
        let solved = solve_best_rate(&k, h, Variant::P3).unwrap().params.b;
        assert!(solved <= best + 1e-9 && best - solved < 1.5e-3, "{solved} vs {best}");
    }

    #[test]
    fn infeasible_system_names_binding_constraints() {
        // beta + kappa = 0 leaves no b < 0 satisfying (P1)
        let k = RateConstants::new(3.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        match solve_best_rate(&k, 0.1, Variant::P3) {
            Err(LabError::Infeasible { binding }) => assert!(binding.iter().any(|b| b.contains("P1")), "{binding:?}"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn residuals_are_affine(b in -0.4f64..-0.01, c in 0.01f64..0.5, h in 0.01f64..0.4, rho in 0.0f64..0.5,
                                alpha in 1.5f64..4.0, beta in 0.5f64..2.0, kappa in 0.0f64..1.0, l in 0.0f64..1.0) {
            let k = RateConstants::new(alpha, beta, 2.0, kappa, l).unwrap();
            let base = RateParams { b, c, h, rho, constants: k };
            let denom = 2.0 * alpha + 2.0 * kappa - 2.0;
            // analytic slopes in (b, c, h, rho) for P1..P5 under P3'
            let slopes = [
                [1.0, (kappa + beta) / 2.0, 0.0, 0.0],
                [2.0, -(2.0 * (alpha - beta) / 2.0 + 1.0), -2.0, 0.0],
                [2.0 + 4.0 / denom, 0.0, 4.0 / denom, -4.0 * l / denom],
                [1.0, 0.0, -1.0, -1.0],
                [2.0 + 2.0 / (alpha + kappa), 0.0, 0.0, -2.0 / (alpha + kappa) - 2.0 * l / (alpha + kappa)],
            ];
            let r0 = residuals(&base, Variant::P3Prime);
            let step = 1e-3;
            for (axis, bump) in [(0, [step, 0.0, 0.0, 0.0]), (1, [0.0, step, 0.0, 0.0]), (2, [0.0, 0.0, step, 0.0]), (3, [0.0, 0.0, 0.0, step])] {
                let p = RateParams { b: b + bump[0], c: c + bump[1], h: h + bump[2], rho: rho + bump[3], constants: k };
                let r1 = residuals(&p, Variant::P3Prime);
                for i in 0..5 {
                    let fd = (r1[i].1 - r0[i].1) / step;
                    prop_assert!((fd - slopes[i][axis]).abs() < 1e-10, "P{} axis {axis}: {fd} vs {}", i + 1, slopes[i][axis]);
                }
            }
        }

        #[test]
        fn solver_output_is_feasible_and_minimal(h in 0.01f64..0.45, alpha in 2.0f64..4.0, beta in 0.5f64..2.0, kappa in 0.0f64..1.0) {
            let k = RateConstants::new(alpha, beta, 1.0, kappa, 0.0).unwrap();
            let best = solve_best_rate(&k, h, Variant::P3).unwrap();
            prop_assert!(best.report.feasible);
            let b = best.params.b - 1e-3;
            prop_assert!(candidate(&k, b, h, Variant::P3).0.is_none());
            prop_assert!(best.params.b >= k.dominant_bound(h) - 1e-6);
        }
    }
}
