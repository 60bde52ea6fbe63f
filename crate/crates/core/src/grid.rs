use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t0 < t1` split into `n_steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t1 <= t0 {
            return Err(Error::InvalidParameter(format!("grid needs t0 < t1, got [{t0}, {t1}]")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter("grid needs at least one step".into()));
        }
        Ok(TimeGrid { t0, t1, n_steps })
    }

    /// Grid on `[t0, t1]` whose step is as close as possible to `dt`.
    pub fn with_step(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {dt}")));
        }
        let n = ((t1 - t0) / dt).round().max(1.0) as usize;
        Self::new(t0, t1, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.n_steps as f64
    }

    pub fn horizon(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Time of node `k`; the last node is exactly `t1`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(|k| self.time(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.times().collect::<Vec<_>>(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert_eq!(TimeGrid::with_step(0.0, 300.0, 1e-3).unwrap().n_steps(), 300_000);
    }
}
