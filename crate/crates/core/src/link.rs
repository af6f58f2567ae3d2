//! Logistic link `phi(z) = lo + (hi - lo) / (1 + e^-z)` mapping unconstrained
//! fields onto box-constrained PDE coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spectral::SpectralField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    lo: f64,
    hi: f64,
}

impl LinkSpec {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(LabError::Argument(format!(
                "link bounds need 0 < lo < hi < inf, got ({lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// `phi(z)`, clamped one ulp inside the open interval once the logistic
    /// saturates in double precision.
    pub fn apply(&self, z: f64) -> f64 {
        let v = self.lo + (self.hi - self.lo) * logistic(z);
        v.clamp(self.lo.next_up(), self.hi.next_down())
    }

    /// `phi'(z)`.
    pub fn derivative(&self, z: f64) -> f64 {
        let s = logistic(z);
        (self.hi - self.lo) * s * (1.0 - s)
    }

    /// `sup |phi'| = (hi - lo) / 4`.
    pub fn derivative_bound(&self) -> f64 {
        0.25 * (self.hi - self.lo)
    }

    /// `sup |phi''| = (hi - lo) / (6 sqrt 3)`.
    pub fn second_derivative_bound(&self) -> f64 {
        (self.hi - self.lo) / (6.0 * 3f64.sqrt())
    }

    /// `phi^-1(value)`.
    pub fn invert(&self, value: f64) -> Result<f64> {
        if !(value > self.lo && value < self.hi) {
            return Err(LabError::Domain(format!(
                "{value} is outside the open link range ({}, {})",
                self.lo, self.hi
            )));
        }
        Ok(((value - self.lo) / (self.hi - value)).ln())
    }

    /// `phi(F(x))` at each point.
    pub fn apply_field(&self, field: &SpectralField, coords: &[f64]) -> Result<Vec<f64>> {
        Ok(field.evaluate(coords)?.into_iter().map(|z| self.apply(z)).collect())
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BasisSpec;
    use proptest::prelude::*;

    #[test]
    fn zero_field_maps_to_midpoint() {
        let link = LinkSpec::new(1.0, 3.0).unwrap();
        let b = BasisSpec::new(1, 4).unwrap();
        let v = link.apply_field(&SpectralField::zeros(&b), &[0.1, 0.5, 0.9]).unwrap();
        assert!(v.iter().all(|&x| x == 2.0));
    }

    #[test]
    fn saturation_stays_inside() {
        let link = LinkSpec::new(1.0, 3.0).unwrap();
        let top = link.apply(50.0);
        assert!(top < 3.0);
        // one ulp below the upper bound is the closest representable interior value
        assert_eq!(top, 3.0f64.next_down());
        assert!(link.apply(-800.0) > 1.0);
        assert!(link.apply(800.0) < 3.0);
    }

    #[test]
    fn inversion_examples() {
        let link = LinkSpec::new(1.0, 3.0).unwrap();
        assert_eq!(link.invert(2.0).unwrap(), 0.0);
        assert!((link.invert(2.5).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(link.invert(1.0).is_err());
        assert!(link.invert(3.5).is_err());
        assert!(LinkSpec::new(2.0, 1.0).is_err());
    }

    #[test]
    fn derivative_bounds_are_attained() {
        let link = LinkSpec::new(0.5, 4.5).unwrap();
        assert!((link.derivative(0.0) - link.derivative_bound()).abs() < 1e-15);
        // phi'' extremum at z = ln(2 + sqrt 3)
        let z = (2.0 + 3f64.sqrt()).ln();
        let h = 1e-5;
        let second = (link.derivative(z + h) - link.derivative(z - h)) / (2.0 * h);
        assert!((second.abs() - link.second_derivative_bound()).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn round_trip(t in 1e-6f64..(1.0 - 1e-6)) {
            let link = LinkSpec::new(1.0, 3.0).unwrap();
            let v = 1.0 + 2.0 * t;
            let z = link.invert(v).unwrap();
            prop_assert!((link.apply(z) - v).abs() < 1e-10);
        }

        #[test]
        fn range_is_open_interval(z in -1e6f64..1e6) {
            let link = LinkSpec::new(0.3, 7.0).unwrap();
            let v = link.apply(z);
            prop_assert!(v > 0.3 && v < 7.0);
        }

        #[test]
        fn strictly_increasing(z in -30.0f64..30.0, dz in 1e-3f64..5.0) {
            let link = LinkSpec::new(1.0, 3.0).unwrap();
            prop_assert!(link.apply(z + dz) > link.apply(z));
        }
    }
}
