//! Uniform time grids and field paths, with the discrete space-time norms
//! used throughout. Time integrals use the left-endpoint rectangle rule, in
//! line with the piecewise-constant forcing of the exponential integrator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl PathGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "a path grid needs at least 2 steps, got {steps}"
            )));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "empty time interval [{t0}, {t1}]"
            )));
        }
        Ok(Self { t0, t1, steps })
    }

    /// Grid on `[0, horizon]` with step as close to `dt` as the horizon allows.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
        }
        let steps = (horizon / dt).round().max(1.0) as usize;
        Self::new(0.0, horizon, steps)
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t1
        } else {
            self.t0 + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nodes()).map(|i| self.time(i)).collect()
    }

    /// Sub-grid made of steps `[first, first + steps]`.
    pub fn window(&self, first: usize, steps: usize) -> Result<Self> {
        if first + steps > self.steps {
            return Err(Error::InvalidParameter(format!(
                "window [{first}, {}] exceeds {} steps",
                first + steps,
                self.steps
            )));
        }
        Self::new(self.time(first), self.time(first + steps), steps)
    }

    /// Grid with twice as many steps over the same interval.
    pub fn refined(&self) -> Self {
        Self {
            steps: self.steps * 2,
            ..*self
        }
    }

    pub fn same_as(&self, other: &PathGrid) -> bool {
        self.steps == other.steps
            && (self.t0 - other.t0).abs() <= 1e-12 * (1.0 + self.t0.abs())
            && (self.t1 - other.t1).abs() <= 1e-12 * (1.0 + self.t1.abs())
    }
}

/// Fields at every node of a [`PathGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPath {
    time: PathGrid,
    nodes: Vec<SpectralField>,
}

impl FieldPath {
    pub fn new(time: PathGrid, nodes: Vec<SpectralField>) -> Result<Self> {
        if nodes.len() != time.nodes() {
            return Err(Error::PathMismatch(format!(
                "{} fields for {} nodes",
                nodes.len(),
                time.nodes()
            )));
        }
        if let Some(first) = nodes.first() {
            for f in &nodes {
                first.check_same_grid(f)?;
            }
        }
        Ok(Self { time, nodes })
    }

    pub fn zeros(time: PathGrid, grid: Grid) -> Self {
        Self {
            time,
            nodes: vec![SpectralField::zeros(grid); time.nodes()],
        }
    }

    #[inline]
    pub fn time_grid(&self) -> PathGrid {
        self.time
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.nodes[0].grid()
    }

    #[inline]
    pub fn nodes(&self) -> &[SpectralField] {
        &self.nodes
    }

    #[inline]
    pub fn nodes_mut(&mut self) -> &mut [SpectralField] {
        &mut self.nodes
    }

    pub fn into_nodes(self) -> Vec<SpectralField> {
        self.nodes
    }

    #[inline]
    pub fn node(&self, i: usize) -> &SpectralField {
        &self.nodes[i]
    }

    #[inline]
    pub fn last(&self) -> &SpectralField {
        self.nodes.last().expect("paths are never empty")
    }

    pub fn check_compatible(&self, other: &FieldPath) -> Result<()> {
        if !self.time.same_as(&other.time) {
            return Err(Error::PathMismatch(format!(
                "time grids {:?} and {:?} differ",
                self.time, other.time
            )));
        }
        self.nodes[0].check_same_grid(&other.nodes[0])
    }

    /// First `steps` steps of the path.
    pub fn prefix(&self, steps: usize) -> Result<Self> {
        let time = self.time.window(0, steps)?;
        Ok(Self {
            time,
            nodes: self.nodes[..=steps].to_vec(),
        })
    }

    pub fn map(&self, f: impl Fn(&SpectralField) -> SpectralField + Sync + Send) -> Self {
        Self {
            time: self.time,
            nodes: self.nodes.par_iter().map(&f).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &FieldPath,
        f: impl Fn(&SpectralField, &SpectralField) -> SpectralField + Sync,
    ) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            time: self.time,
            nodes: self
                .nodes
                .par_iter()
                .zip(other.nodes.par_iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &FieldPath) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &FieldPath) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|f| f * a)
    }

    /// `||u(t_m)||_{L^4}^4` at every node.
    pub fn l4_pow4_series(&self) -> Vec<f64> {
        self.nodes
            .par_iter()
            .map(|f| f.l4_norm().powi(4))
            .collect()
    }

    /// Discrete `L^4(t0, t1; L^4)` norm.
    pub fn l4l4_norm(&self) -> f64 {
        let series = self.l4_pow4_series();
        l4l4_from_series(&series, self.time.dt())
    }

    /// `sup_m ||u(t_m)||_{L^2}`.
    pub fn linf_h_norm(&self) -> f64 {
        self.nodes.iter().map(|f| f.l2_norm()).fold(0.0, f64::max)
    }

    /// Discrete `L^2(t0, t1; V)` norm.
    pub fn l2_v_norm(&self) -> f64 {
        let dt = self.time.dt();
        let s: f64 = self.nodes[..self.time.steps]
            .iter()
            .map(|f| f.grad_l2_norm().powi(2))
            .sum();
        (dt * s).sqrt()
    }

    /// Discrete `L^2(t0, t1; V')` norm.
    pub fn l2_vprime_norm(&self) -> f64 {
        let dt = self.time.dt();
        let s: f64 = self.nodes[..self.time.steps]
            .iter()
            .map(|f| f.inv_grad_l2_norm().powi(2))
            .sum();
        (dt * s).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.nodes.iter().all(SpectralField::is_finite)
    }
}

/// `(dt sum_{m < M} a_m)^{1/4}` for a series of `M + 1` fourth powers.
pub fn l4l4_from_series(pow4: &[f64], dt: f64) -> f64 {
    if pow4.len() < 2 {
        return 0.0;
    }
    let s: f64 = pow4[..pow4.len() - 1].iter().sum();
    (dt * s).powf(0.25)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::eigen_mode;

    #[test]
    fn grid_basics() {
        assert!(PathGrid::new(0.0, 1.0, 1).is_err());
        assert!(PathGrid::new(1.0, 1.0, 4).is_err());
        let g = PathGrid::with_step(1.0, 1e-3).unwrap();
        assert_eq!(g.steps, 1000);
        assert_eq!(g.time(1000), 1.0);
        let w = g.window(10, 20).unwrap();
        assert!((w.t0 - 0.01).abs() < 1e-15 && (w.t1 - 0.03).abs() < 1e-15);
        assert!(g.window(990, 20).is_err());
    }

    #[test]
    fn constant_path_norms() {
        let grid = Grid::new(16).unwrap();
        let f = eigen_mode(grid, 1, 2, 0.3);
        let time = PathGrid::new(0.0, 2.0, 8).unwrap();
        let p = FieldPath::new(time, vec![f.clone(); 9]).unwrap();
        let l4 = f.l4_norm();
        assert!((p.l4l4_norm() - 2f64.powf(0.25) * l4).abs() < 1e-12);
        assert!((p.linf_h_norm() - f.l2_norm()).abs() < 1e-12);
        assert!((p.l2_v_norm() - 2f64.sqrt() * f.grad_l2_norm()).abs() < 1e-12);
        assert!(FieldPath::new(time, vec![f; 3]).is_err());
    }
}
