//! Dirichlet-Laplacian sine basis on the unit cube and coefficient-space
//! fields.
//!
//! On `(0,1)^d` the eigenfunctions are tensor products of `sqrt(2) sin(k pi x)`
//! with eigenvalue `pi^2 |k|^2`. A basis keeps `modes_per_axis` frequencies per
//! axis and flattens the multi-indices by ascending eigenvalue, breaking ties
//! lexicographically. Sobolev norms use flat-index weights `j^(2s/d)`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng;

/// Margin below the critical decay used by [`synthesize_truth`].
pub const TRUTH_MARGIN: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct BasisSpec {
    dim: usize,
    modes_per_axis: usize,
    // flat index -> frequencies (k1, k2); k2 is 0 when dim = 1
    ordering: Arc<[[usize; 2]]>,
}

impl PartialEq for BasisSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.modes_per_axis == other.modes_per_axis
    }
}

impl BasisSpec {
    pub fn new(dim: usize, modes_per_axis: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(LabError::Argument(format!("basis dimension must be 1 or 2, got {dim}")));
        }
        if modes_per_axis == 0 {
            return Err(LabError::Argument("modes_per_axis must be at least 1".into()));
        }
        let ordering: Vec<[usize; 2]> = if dim == 1 {
            (1..=modes_per_axis).map(|k| [k, 0]).collect()
        } else {
            let mut idx: Vec<[usize; 2]> = (1..=modes_per_axis)
                .flat_map(|k1| (1..=modes_per_axis).map(move |k2| [k1, k2]))
                .collect();
            idx.sort_by_key(|k| (k[0] * k[0] + k[1] * k[1], k[0], k[1]));
            idx
        };
        Ok(Self {
            dim,
            modes_per_axis,
            ordering: ordering.into(),
        })
    }

    /// Basis with `len` total functions; `len` must be a perfect `dim`-th power.
    pub fn with_len(dim: usize, len: usize) -> Result<Self> {
        let per_axis = match dim {
            1 => len,
            2 => {
                let r = (len as f64).sqrt().round() as usize;
                if r * r != len {
                    return Err(LabError::Argument(format!(
                        "a 2-d basis needs a square number of modes, got {len}"
                    )));
                }
                r
            }
            _ => return Err(LabError::Argument(format!("basis dimension must be 1 or 2, got {dim}"))),
        };
        Self::new(dim, per_axis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes_per_axis(&self) -> usize {
        self.modes_per_axis
    }

    /// Total number of basis functions `J`.
    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }

    /// Frequencies of the 0-based flat index `j`.
    pub fn frequencies(&self, j: usize) -> &[usize] {
        &self.ordering[j][..self.dim]
    }

    /// Dirichlet-Laplacian eigenvalue of the 0-based flat index `j`.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        let k = self.frequencies(j);
        PI * PI * k.iter().map(|&k| (k * k) as f64).sum::<f64>()
    }

    /// Sobolev weight `j^(2s/d)` of the 0-based flat index (1-based in the formula).
    pub fn sobolev_weight(&self, j: usize, s: f64) -> f64 {
        ((j + 1) as f64).powf(2.0 * s / self.dim as f64)
    }

    /// Evaluates every basis function at `x` into `out` (length `J`).
    pub fn eval_all(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        let k = self.modes_per_axis;
        let mut sines = [vec![0.0; k + 1], vec![0.0; k + 1]];
        for (axis, s) in sines.iter_mut().enumerate().take(self.dim) {
            for (freq, v) in s.iter_mut().enumerate().skip(1) {
                *v = SQRT_2 * (freq as f64 * PI * x[axis]).sin();
            }
        }
        for (o, k) in out.iter_mut().zip(self.ordering.iter()) {
            *o = if self.dim == 1 {
                sines[0][k[0]]
            } else {
                sines[0][k[0]] * sines[1][k[1]]
            };
        }
    }

    /// Single basis function value.
    pub fn eval(&self, j: usize, x: &[f64]) -> f64 {
        self.frequencies(j)
            .iter()
            .zip(x)
            .map(|(&k, &xi)| SQRT_2 * (k as f64 * PI * xi).sin())
            .product()
    }
}

pub(crate) fn check_points(dim: usize, coords: &[f64]) -> Result<()> {
    if coords.len() % dim != 0 {
        return Err(LabError::Argument(format!(
            "coordinate buffer of length {} is not a multiple of d = {dim}",
            coords.len()
        )));
    }
    if let Some(bad) = coords.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(LabError::Domain(format!(
            "point {} has coordinate {} outside the unit cube",
            bad / dim,
            coords[bad]
        )));
    }
    Ok(())
}

/// A function represented by its coefficients in a [`BasisSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr", into = "FieldRepr")]
pub struct SpectralField {
    basis: BasisSpec,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    d: usize,
    #[serde(rename = "J")]
    j: usize,
    coeffs: Vec<f64>,
}

impl TryFrom<FieldRepr> for SpectralField {
    type Error = LabError;

    fn try_from(r: FieldRepr) -> Result<Self> {
        if r.coeffs.len() != r.j {
            return Err(LabError::Argument(format!(
                "field declares J = {} but carries {} coefficients",
                r.j,
                r.coeffs.len()
            )));
        }
        SpectralField::new(BasisSpec::with_len(r.d, r.j)?, r.coeffs)
    }
}

impl From<SpectralField> for FieldRepr {
    fn from(f: SpectralField) -> Self {
        FieldRepr {
            d: f.basis.dim,
            j: f.coeffs.len(),
            coeffs: f.coeffs,
        }
    }
}

impl SpectralField {
    pub fn new(basis: BasisSpec, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(LabError::Argument(format!(
                "basis has {} functions but {} coefficients were given",
                basis.len(),
                coeffs.len()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zeros(basis: &BasisSpec) -> Self {
        Self {
            coeffs: vec![0.0; basis.len()],
            basis: basis.clone(),
        }
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// `F(x) = sum_j c_j phi_j(x)` at each point of a flat coordinate buffer.
    pub fn evaluate(&self, coords: &[f64]) -> Result<Vec<f64>> {
        let d = self.basis.dim;
        check_points(d, coords)?;
        let mut phi = vec![0.0; self.basis.len()];
        Ok(coords
            .chunks_exact(d)
            .map(|x| {
                self.basis.eval_all(x, &mut phi);
                dot(&phi, &self.coeffs)
            })
            .collect())
    }

    /// Sequence-space Sobolev norm `(sum_j j^(2s/d) c_j^2)^(1/2)`. Negative `s`
    /// gives the dual norm.
    pub fn norm_hs(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| self.basis.sobolev_weight(j, s) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Keeps the first `m` coefficients.
    pub fn truncate_kl(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.coeffs.len() {
            return Err(LabError::Argument(format!(
                "truncation level {m} outside 1..={}",
                self.coeffs.len()
            )));
        }
        let mut out = self.clone();
        out.coeffs[m..].iter_mut().for_each(|c| *c = 0.0);
        Ok(out)
    }

    /// `self - other` on a shared basis.
    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, k: f64) -> SpectralField {
        SpectralField {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
        }
    }

    fn zip_with(&self, other: &SpectralField, op: impl Fn(f64, f64) -> f64) -> Result<SpectralField> {
        if self.basis != other.basis {
            return Err(LabError::Argument("fields live on different bases".into()));
        }
        Ok(SpectralField {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| op(a, b)).collect(),
        })
    }

    /// L2 norm by the tensor-product midpoint rule with `n` points per axis.
    pub fn quadrature_l2_norm(&self, n: usize) -> f64 {
        let d = self.basis.dim;
        let total = n.pow(d as u32);
        let w = 1.0 / total as f64;
        let mut phi = vec![0.0; self.basis.len()];
        let mut x = [0.0; 2];
        let mut acc = 0.0;
        for idx in 0..total {
            x[0] = ((idx % n) as f64 + 0.5) / n as f64;
            if d == 2 {
                x[1] = ((idx / n) as f64 + 0.5) / n as f64;
            }
            self.basis.eval_all(&x[..d], &mut phi);
            let v = dot(&phi, &self.coeffs);
            acc += v * v;
        }
        (acc * w).sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ground truth with coefficients `s_j j^(-beta/d - 1/2 - 0.05)` and seeded
/// random signs `s_j`. It lies in `H^beta` with partial sums of higher norms
/// diverging as the basis grows.
pub fn synthesize_truth(beta: f64, basis: &BasisSpec, seed: u64) -> Result<SpectralField> {
    if !(beta > 0.0) {
        return Err(LabError::Argument(format!("truth regularity must be positive, got {beta}")));
    }
    let d = basis.dim() as f64;
    let decay = beta / d + 0.5 + TRUTH_MARGIN;
    let mut rng = rng::rng_for(seed, &[0x7275_7468]);
    let coeffs = (1..=basis.len())
        .map(|j| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * (j as f64).powf(-decay)
        })
        .collect();
    SpectralField::new(basis.clone(), coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(basis: &BasisSpec, j: usize) -> SpectralField {
        let mut f = SpectralField::zeros(basis);
        f.coeffs_mut()[j] = 1.0;
        f
    }

    #[test]
    fn single_mode_values() {
        let b = BasisSpec::new(1, 8).unwrap();
        let v = unit(&b, 0).evaluate(&[0.5]).unwrap();
        assert!((v[0] - SQRT_2).abs() < 1e-15);
        let v = unit(&b, 1).evaluate(&[0.25]).unwrap();
        // direct formula sqrt(2) sin(2 pi 0.25)
        assert!((v[0] - SQRT_2 * (2.0 * PI * 0.25).sin()).abs() < 1e-15);
        assert!((v[0] - SQRT_2).abs() < 1e-15);
        let z = SpectralField::zeros(&b).evaluate(&[0.1, 0.7, 1.0]).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn points_outside_cube_rejected() {
        let b = BasisSpec::new(2, 3).unwrap();
        let f = SpectralField::zeros(&b);
        assert!(matches!(f.evaluate(&[0.5, 1.2]), Err(LabError::Domain(_))));
        assert!(matches!(f.evaluate(&[0.5]), Err(LabError::Argument(_))));
    }

    #[test]
    fn ordering_is_sorted_bijection() {
        let b = BasisSpec::new(2, 5).unwrap();
        assert_eq!(b.len(), 25);
        let mut seen = std::collections::HashSet::new();
        for j in 0..b.len() {
            assert!(seen.insert(b.frequencies(j).to_vec()));
            if j > 0 {
                assert!(b.eigenvalue(j) >= b.eigenvalue(j - 1));
            }
        }
        // tie-break: (1,2) before (2,1)
        assert_eq!(b.frequencies(1), &[1, 2]);
        assert_eq!(b.frequencies(2), &[2, 1]);
    }

    #[test]
    fn gram_matrix_is_identity() {
        for (d, k) in [(1, 6), (2, 3)] {
            let b = BasisSpec::new(d, k).unwrap();
            let n = 256usize;
            let total = n.pow(d as u32);
            let mut gram = vec![0.0; b.len() * b.len()];
            let mut phi = vec![0.0; b.len()];
            for idx in 0..total {
                let x = [((idx % n) as f64 + 0.5) / n as f64, ((idx / n) as f64 + 0.5) / n as f64];
                b.eval_all(&x[..d], &mut phi);
                for p in 0..b.len() {
                    for q in 0..b.len() {
                        gram[p * b.len() + q] += phi[p] * phi[q] / total as f64;
                    }
                }
            }
            for p in 0..b.len() {
                for q in 0..b.len() {
                    let want = if p == q { 1.0 } else { 0.0 };
                    assert!((gram[p * b.len() + q] - want).abs() < 1e-10, "d={d} ({p},{q})");
                }
            }
        }
    }

    #[test]
    fn sobolev_norm_examples() {
        let b = BasisSpec::new(1, 4).unwrap();
        assert_eq!(unit(&b, 0).norm_hs(3.7), 1.0);
        assert!((unit(&b, 1).norm_hs(1.0) - 2.0).abs() < 1e-15);
        assert!((unit(&b, 1).norm_hs(-1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn truncation_examples() {
        let b = BasisSpec::new(1, 4).unwrap();
        let f = SpectralField::new(b.clone(), vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.truncate_kl(4).unwrap(), f);
        assert_eq!(f.truncate_kl(1).unwrap().coeffs(), &[3.0, 0.0, 0.0, 0.0]);
        assert!(f.truncate_kl(0).is_err());
        assert!(f.truncate_kl(5).is_err());
    }

    #[test]
    fn parseval_against_midpoint_quadrature() {
        for (d, k) in [(1usize, 16usize), (2, 4)] {
            let b = BasisSpec::new(d, k).unwrap();
            let f = synthesize_truth(1.0, &b, 3).unwrap();
            let q = f.quadrature_l2_norm(512);
            let s = f.norm_hs(0.0);
            assert!(((q - s) / s).abs() < 1e-6, "d={d}: {q} vs {s}");
        }
    }

    #[test]
    fn truth_is_deterministic_and_has_expected_decay() {
        let b = BasisSpec::new(1, 64).unwrap();
        let f1 = synthesize_truth(1.0, &b, 11).unwrap();
        let f2 = synthesize_truth(1.0, &b, 11).unwrap();
        assert_eq!(f1, f2);
        for (j, c) in f1.coeffs().iter().enumerate() {
            let want = ((j + 1) as f64).powf(-1.55);
            assert!((c.abs() - want).abs() < 1e-15);
        }
        assert!(synthesize_truth(0.0, &b, 1).is_err());
    }

    #[test]
    fn json_layout() {
        let b = BasisSpec::new(2, 2).unwrap();
        let f = SpectralField::new(b, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"d":2,"J":4,"coeffs":[1.0,2.0,3.0,4.0]}"#);
        let back: SpectralField = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<SpectralField>(r#"{"d":2,"J":3,"coeffs":[1,2,3]}"#).is_err());
    }

    proptest! {
        #[test]
        fn norm_monotone_in_s(coeffs in prop::collection::vec(-5.0f64..5.0, 1..20), s1 in -2.0f64..3.0, ds in 0.0f64..2.0) {
            let b = BasisSpec::new(1, coeffs.len()).unwrap();
            let f = SpectralField::new(b, coeffs).unwrap();
            prop_assert!(f.norm_hs(s1) <= f.norm_hs(s1 + ds) * (1.0 + 1e-12));
        }

        #[test]
        fn truncation_contracts(coeffs in prop::collection::vec(-5.0f64..5.0, 1..20), s in -2.0f64..3.0, m in 1usize..20) {
            let b = BasisSpec::new(1, coeffs.len()).unwrap();
            let f = SpectralField::new(b, coeffs).unwrap();
            let m = m.min(f.coeffs().len());
            prop_assert!(f.truncate_kl(m).unwrap().norm_hs(s) <= f.norm_hs(s) * (1.0 + 1e-12));
        }

        #[test]
        fn evaluation_is_linear(a in prop::collection::vec(-3.0f64..3.0, 9), b in prop::collection::vec(-3.0f64..3.0, 9), k in -2.0f64..2.0, x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let basis = BasisSpec::new(2, 3).unwrap();
            let fa = SpectralField::new(basis.clone(), a).unwrap();
            let fb = SpectralField::new(basis, b).unwrap();
            let lhs = fa.add(&fb.scale(k)).unwrap().evaluate(&[x, y]).unwrap()[0];
            let rhs = fa.evaluate(&[x, y]).unwrap()[0] + k * fb.evaluate(&[x, y]).unwrap()[0];
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
