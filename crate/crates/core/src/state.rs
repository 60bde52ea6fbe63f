use crate::error::{Error, Result};

/// A point `(q, p)` of phase space.
///
/// In action-angle models the angles live in `q` and the actions in `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidState("dimension must be at least 1".into()));
        }
        if q.len() != p.len() {
            return Err(Error::InvalidState(format!(
                "q has {} entries but p has {}",
                q.len(),
                p.len()
            )));
        }
        if q.iter().chain(&p).any(|x| !x.is_finite()) {
            return Err(Error::InvalidState("entries must be finite".into()));
        }
        Ok(PhaseState { q, p })
    }

    pub fn zeros(dim: usize) -> Self {
        PhaseState { q: vec![0.0; dim], p: vec![0.0; dim] }
    }

    /// Splits a flat `[q.., p..]` slice.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(2) {
            return Err(Error::InvalidState(format!("odd flat length {}", flat.len())));
        }
        let n = flat.len() / 2;
        Self::new(flat[..n].to_vec(), flat[n..].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dim());
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.p);
        v
    }

    pub fn max_abs(&self) -> f64 {
        self.q.iter().chain(&self.p).fold(0.0, |m, x| m.max(x.abs()))
    }
}
