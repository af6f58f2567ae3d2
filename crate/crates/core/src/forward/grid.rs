//! Uniform node grids on the closed unit cube and piecewise-linear grid
//! functions.

use std::io::Write;

use crate::error::{LabError, Result};

/// Minimum number of interior points per axis.
pub const MIN_GRID_N: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(LabError::Argument(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < MIN_GRID_N {
            return Err(LabError::Argument(format!("grid_n = {n} is below the minimum {MIN_GRID_N}")));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n + 2
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn interior_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Axis indices of a node.
    pub fn node_axes(&self, node: usize) -> [usize; 2] {
        let m = self.nodes_per_axis();
        if self.dim == 1 {
            [node, 0]
        } else {
            [node % m, node / m]
        }
    }

    pub fn node_index(&self, axes: [usize; 2]) -> usize {
        if self.dim == 1 {
            axes[0]
        } else {
            axes[0] + self.nodes_per_axis() * axes[1]
        }
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let h = self.spacing();
        let a = self.node_axes(node);
        [a[0] as f64 * h, a[1] as f64 * h]
    }

    /// Flat coordinates of every node, `dim` entries per node.
    pub fn all_node_coords(&self) -> Vec<f64> {
        (0..self.node_count())
            .flat_map(|k| {
                let c = self.node_coords(k);
                c.into_iter().take(self.dim)
            })
            .collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let last = self.n + 1;
        self.node_axes(node)
            .iter()
            .take(self.dim)
            .any(|&i| i == 0 || i == last)
    }

    /// Node of the 0-based interior unknown `k`.
    pub fn interior_to_node(&self, k: usize) -> usize {
        if self.dim == 1 {
            k + 1
        } else {
            self.node_index([k % self.n + 1, k / self.n + 1])
        }
    }

    /// Trapezoid weight of a node (integrates over the unit cube).
    pub fn trapezoid_weight(&self, node: usize) -> f64 {
        let h = self.spacing();
        let last = self.n + 1;
        self.node_axes(node)
            .iter()
            .take(self.dim)
            .map(|&i| if i == 0 || i == last { 0.5 * h } else { h })
            .product()
    }

    /// Multilinear interpolation stencil at `x`: up to four (node, weight) pairs.
    pub fn stencil(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let h = self.spacing();
        let last = self.n + 1;
        let mut base = [0usize; 2];
        let mut t = [0.0; 2];
        for axis in 0..self.dim {
            let s = (x[axis] / h).clamp(0.0, last as f64);
            let i = (s.floor() as usize).min(last - 1);
            base[axis] = i;
            t[axis] = s - i as f64;
        }
        if self.dim == 1 {
            vec![(base[0], 1.0 - t[0]), (base[0] + 1, t[0])]
        } else {
            let (i, j) = (base[0], base[1]);
            vec![
                (self.node_index([i, j]), (1.0 - t[0]) * (1.0 - t[1])),
                (self.node_index([i + 1, j]), t[0] * (1.0 - t[1])),
                (self.node_index([i, j + 1]), (1.0 - t[0]) * t[1]),
                (self.node_index([i + 1, j + 1]), t[0] * t[1]),
            ]
        }
    }
}

/// Values on every node of a [`Grid`], boundary included.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(LabError::Argument(format!(
                "grid has {} nodes but {} values were given",
                grid.node_count(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|k| f(&grid.node_coords(k)[..grid.dim()]))
            .collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.node_count()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.grid
            .stencil(x)
            .into_iter()
            .map(|(k, w)| w * self.values[k])
            .sum()
    }

    /// Trapezoid-rule integral of `f(self(x), other(x))`.
    pub fn integrate_with(&self, other: &GridFunction, mut f: impl FnMut(f64, f64) -> f64) -> Result<f64> {
        if self.grid != other.grid {
            return Err(LabError::Argument("grid functions live on different grids".into()));
        }
        Ok((0..self.values.len())
            .map(|k| self.grid.trapezoid_weight(k) * f(self.values[k], other.values[k]))
            .sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.integrate_with(self, |a, _| a * a).expect("same grid").sqrt()
    }

    pub fn l2_distance(&self, other: &GridFunction) -> Result<f64> {
        Ok(self.integrate_with(other, |a, b| (a - b) * (a - b))?.sqrt())
    }

    /// Rows `x[,y],u` with a header line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.grid.dim() == 1 {
            w.write_record(["x", "u"])?;
        } else {
            w.write_record(["x", "y", "u"])?;
        }
        for (k, v) in self.values.iter().enumerate() {
            let c = self.grid.node_coords(k);
            let mut rec: Vec<String> = c[..self.grid.dim()].iter().map(|x| format!("{x:.17e}")).collect();
            rec.push(format!("{v:.17e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_mapping_and_boundary() {
        let g = Grid::new(2, 8).unwrap();
        assert_eq!(g.node_count(), 100);
        assert_eq!(g.interior_count(), 64);
        let nodes: Vec<usize> = (0..g.interior_count()).map(|k| g.interior_to_node(k)).collect();
        assert!(nodes.iter().all(|&n| !g.is_boundary(n)));
        assert_eq!((0..g.node_count()).filter(|&n| g.is_boundary(n)).count(), 36);
        assert!(Grid::new(1, 7).is_err());
    }

    #[test]
    fn trapezoid_weights_sum_to_one() {
        for d in [1, 2] {
            let g = Grid::new(d, 13).unwrap();
            let s: f64 = (0..g.node_count()).map(|k| g.trapezoid_weight(k)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolation_is_exact_for_bilinear_functions() {
        let g = Grid::new(2, 9).unwrap();
        let f = GridFunction::from_fn(g, |x| 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1]);
        for p in [[0.0, 0.0], [0.33, 0.71], [1.0, 1.0], [0.999, 0.001]] {
            let want = 1.0 + 2.0 * p[0] - p[1] + 3.0 * p[0] * p[1];
            assert!((f.interpolate(&p) - want).abs() < 1e-13);
        }
    }
}
