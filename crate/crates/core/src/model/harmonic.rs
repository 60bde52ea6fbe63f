use super::{HamiltonianModel, HessianBlocks};
use crate::error::{Error, Result};
use crate::state::PhaseState;

/// `H = p^2 / (2 m) + k q^2 / 2` in one degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicOscillator {
    mass: f64,
    spring_k: f64,
}

impl HarmonicOscillator {
    pub fn new(mass: f64, spring_k: f64) -> Result<Self> {
        if !(mass > 0.0 && spring_k > 0.0) || !mass.is_finite() || !spring_k.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "harmonic oscillator needs positive mass and spring constant, got m = {mass}, k = {spring_k}"
            )));
        }
        Ok(HarmonicOscillator { mass, spring_k })
    }

    /// The model together with its initial state `(q0, p0)`.
    pub fn with_initial(mass: f64, spring_k: f64, q0: f64, p0: f64) -> Result<(Self, PhaseState)> {
        Ok((Self::new(mass, spring_k)?, PhaseState::new(vec![q0], vec![p0])?))
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn spring_k(&self) -> f64 {
        self.spring_k
    }

    pub fn frequency(&self) -> f64 {
        (self.spring_k / self.mass).sqrt()
    }

    /// Exact flow from `(q0, p0)` at time `t`.
    pub fn exact(&self, q0: f64, p0: f64, t: f64) -> PhaseState {
        let w = self.frequency();
        let (s, c) = (w * t).sin_cos();
        let mw = self.mass * w;
        PhaseState { q: vec![q0 * c + p0 / mw * s], p: vec![p0 * c - q0 * mw * s] }
    }
}

impl HamiltonianModel for HarmonicOscillator {
    fn name(&self) -> &str {
        "harmonic_1d"
    }

    fn dim(&self) -> usize {
        1
    }

    fn energy(&self, _t: f64, q: &[f64], p: &[f64]) -> f64 {
        p[0] * p[0] / (2.0 * self.mass) + 0.5 * self.spring_k * q[0] * q[0]
    }

    fn grad_q(&self, _t: f64, q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = self.spring_k * q[0];
    }

    fn grad_p(&self, _t: f64, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = p[0] / self.mass;
    }

    fn hessian(&self, _t: f64, _q: &[f64], _p: &[f64]) -> Option<HessianBlocks> {
        Some(HessianBlocks { n: 1, qq: vec![self.spring_k], qp: vec![0.0], pp: vec![1.0 / self.mass] })
    }

    fn is_separable(&self) -> bool {
        true
    }

    fn actions(&self, _t: f64, q: &[f64], p: &[f64]) -> Option<Vec<f64>> {
        Some(vec![self.energy(0.0, q, p) / self.frequency()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gradient_selfcheck, test_support::assert_hessian_matches};

    #[test]
    fn initial_energy_of_the_reference_state() {
        let (m, x0) = HarmonicOscillator::with_initial(1.0, 1.0, 50.0, 0.0).unwrap();
        assert_eq!(m.energy(0.0, &x0.q, &x0.p), 1250.0);
    }

    #[test]
    fn energy_constant_along_exact_flow() {
        let m = HarmonicOscillator::new(1.0, 1.0).unwrap();
        for i in 0..200 {
            let s = m.exact(50.0, 0.0, i as f64 * 0.37);
            let expected = PhaseState::new(vec![50.0 * (i as f64 * 0.37).cos()], vec![-50.0 * (i as f64 * 0.37).sin()]).unwrap();
            assert!((s.q[0] - expected.q[0]).abs() < 1e-12 && (s.p[0] - expected.p[0]).abs() < 1e-12);
            assert!((m.energy(0.0, &s.q, &s.p) - 1250.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradients_and_hessian() {
        let m = HarmonicOscillator::new(2.0, 3.0).unwrap();
        let check = gradient_selfcheck(&m, 50, 1, 1e-10);
        assert!(check.passed(), "{check:?}");
        assert_hessian_matches(&m, 10, 1e-7);
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(HarmonicOscillator::new(0.0, 1.0).is_err());
        assert!(HarmonicOscillator::new(1.0, -1.0).is_err());
    }
}
