//! Symmetric nearest-neighbour systems on the interior unknowns of a grid:
//! Thomas elimination in 1D, Jacobi-preconditioned CG in 2D.

use crate::error::{LabError, Result};

/// Relative residual target for CG.
pub const CG_REL_TOL: f64 = 1e-10;

/// `A x` with `A[k][k] = diag[k]`, `A[k][k+1] = east[k]` and, in 2D,
/// `A[k][k+n] = north[k]`. Couplings across a row end must be zero.
#[derive(Clone, Debug)]
pub struct SymmetricStencil {
    dim: usize,
    n: usize,
    pub diag: Vec<f64>,
    pub east: Vec<f64>,
    pub north: Vec<f64>,
}

impl SymmetricStencil {
    pub fn zeros(dim: usize, n: usize) -> Self {
        let m = n.pow(dim as u32);
        Self {
            dim,
            n,
            diag: vec![0.0; m],
            east: vec![0.0; m],
            north: vec![0.0; if dim == 2 { m } else { 0 }],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Adds `shift` to every diagonal entry.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        out.diag.iter_mut().for_each(|d| *d += shift);
        out
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        y
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.len();
        for k in 0..m {
            let mut v = self.diag[k] * x[k];
            if k + 1 < m {
                v += self.east[k] * x[k + 1];
            }
            if k > 0 {
                v += self.east[k - 1] * x[k - 1];
            }
            if self.dim == 2 {
                if k + self.n < m {
                    v += self.north[k] * x[k + self.n];
                }
                if k >= self.n {
                    v += self.north[k - self.n] * x[k - self.n];
                }
            }
            y[k] = v;
        }
    }

    /// Solves `A x = rhs`; `guess` seeds CG in 2D.
    pub fn solve(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        if self.dim == 1 {
            thomas(&self.diag, &self.east, rhs)
        } else {
            self.conjugate_gradient(rhs, guess)
        }
    }

    fn conjugate_gradient(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let m = self.len();
        let max_iter = 20 * m + 100;
        let rhs_norm = norm(rhs);
        let mut x = guess.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
        if rhs_norm == 0.0 {
            return Ok(vec![0.0; m]);
        }
        let mut ax = vec![0.0; m];
        self.apply_into(&x, &mut ax);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; m];
        for it in 0..max_iter {
            let res = norm(&r) / rhs_norm;
            if res <= CG_REL_TOL {
                return Ok(x);
            }
            self.apply_into(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..m {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            for k in 0..m {
                z[k] = r[k] / self.diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..m {
                p[k] = z[k] + beta * p[k];
            }
            if !rz.is_finite() {
                return Err(LabError::Solver {
                    residual: f64::NAN,
                    iterations: it + 1,
                });
            }
        }
        let residual = norm(&r) / rhs_norm;
        if residual <= CG_REL_TOL {
            Ok(x)
        } else {
            Err(LabError::Solver {
                residual,
                iterations: max_iter,
            })
        }
    }
}

/// Tridiagonal solve for a symmetric matrix with diagonal `diag` and
/// off-diagonal `off` (`off[k]` couples `k` and `k+1`).
pub fn thomas(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut denom = diag[0];
    for k in 0..m {
        if k > 0 {
            denom = diag[k] - off[k - 1] * c[k - 1];
        }
        if denom == 0.0 || !denom.is_finite() {
            return Err(LabError::Solver {
                residual: f64::INFINITY,
                iterations: k,
            });
        }
        c[k] = if k + 1 < m { off[k] / denom } else { 0.0 };
        d[k] = (rhs[k] - if k > 0 { off[k - 1] * d[k - 1] } else { 0.0 }) / denom;
    }
    for k in (0..m.saturating_sub(1)).rev() {
        d[k] -= c[k] * d[k + 1];
    }
    Ok(d)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
