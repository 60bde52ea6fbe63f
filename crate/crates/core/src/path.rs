use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::state::PhaseState;

/// A trajectory sampled on every node of a [`TimeGrid`].
///
/// Node `k` is stored contiguously as `[q_1..q_n, p_1..p_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>,
}

impl DiscretePath {
    pub fn from_flat(grid: TimeGrid, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidState("dimension must be at least 1".into()));
        }
        let expected = grid.n_nodes() * 2 * dim;
        if data.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: data.len() });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidState("path entries must be finite".into()));
        }
        Ok(DiscretePath { grid, dim, data })
    }

    pub fn from_states(grid: TimeGrid, states: &[PhaseState]) -> Result<Self> {
        if states.len() != grid.n_nodes() {
            return Err(Error::DimensionMismatch { expected: grid.n_nodes(), found: states.len() });
        }
        let dim = states[0].dim();
        let mut data = Vec::with_capacity(states.len() * 2 * dim);
        for s in states {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: s.dim() });
            }
            data.extend_from_slice(&s.q);
            data.extend_from_slice(&s.p);
        }
        Self::from_flat(grid, dim, data)
    }

    /// Builds a path by evaluating `f(t) -> (q, p)` on every node.
    pub fn from_fn<F>(grid: TimeGrid, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> PhaseState,
    {
        let states: Vec<_> = grid.times().map(&mut f).collect();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: states[0].dim() });
        }
        Self::from_states(grid, &states)
    }

    pub fn constant(grid: TimeGrid, x: &PhaseState) -> Self {
        let node = x.to_flat();
        let data = node.iter().copied().cycle().take(node.len() * grid.n_nodes()).collect();
        DiscretePath { grid, dim: x.dim(), data }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    pub fn node_len(&self) -> usize {
        2 * self.dim
    }

    pub fn node(&self, k: usize) -> &[f64] {
        let w = self.node_len();
        &self.data[k * w..(k + 1) * w]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        let w = self.node_len();
        &mut self.data[k * w..(k + 1) * w]
    }

    pub fn q(&self, k: usize) -> &[f64] {
        &self.node(k)[..self.dim]
    }

    pub fn p(&self, k: usize) -> &[f64] {
        &self.node(k)[self.dim..]
    }

    pub fn state(&self, k: usize) -> PhaseState {
        PhaseState { q: self.q(k).to_vec(), p: self.p(k).to_vec() }
    }

    pub fn first(&self) -> PhaseState {
        self.state(0)
    }

    pub fn last(&self) -> PhaseState {
        self.state(self.n_nodes() - 1)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn nodes(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.node_len())
    }

    /// Node-wise difference `self - other` on the same grid.
    pub fn difference(&self, other: &DiscretePath) -> Result<DiscretePath> {
        self.check_compatible(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DiscretePath { grid: self.grid, dim: self.dim, data })
    }

    /// `max_k |self_k - other_k|_inf`.
    pub fn sup_distance(&self, other: &DiscretePath) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    fn check_compatible(&self, other: &DiscretePath) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if self.grid != other.grid {
            return Err(Error::InvalidParameter("paths live on different grids".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_distance() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let a = DiscretePath::from_fn(g, 1, |t| PhaseState::new(vec![t], vec![-t]).unwrap()).unwrap();
        assert_eq!(a.n_nodes(), 3);
        assert_eq!(a.q(2), &[1.0]);
        assert_eq!(a.p(1), &[-0.5]);
        let b = DiscretePath::constant(g, &PhaseState::zeros(1));
        assert_eq!(a.sup_distance(&b).unwrap(), 1.0);
        assert_eq!(a.difference(&b).unwrap(), a);
    }

    #[test]
    fn rejects_wrong_length() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert!(DiscretePath::from_flat(g, 1, vec![0.0; 5]).is_err());
        assert!(DiscretePath::from_flat(g, 1, vec![f64::NAN; 6]).is_err());
    }
}
