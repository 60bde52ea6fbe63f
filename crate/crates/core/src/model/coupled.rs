use super::{HamiltonianModel, HessianBlocks};
use crate::error::{Error, Result};
use crate::state::PhaseState;

const FORCING_FREQUENCY: f64 = 0.6;

/// Two oscillators with a weak momentum coupling and periodic forcing:
///
/// `H = p1^2/2 + p2^2/2 + q1^2 + q2^2/2 - eps (q1 sin(0.6 t) + q2 cos(0.6 t) + p1 p2)`.
///
/// At `eps = 0` the system is integrable with frequencies `sqrt(2)` and `1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledOscillators {
    eps: f64,
}

impl CoupledOscillators {
    pub fn new(eps: f64) -> Result<Self> {
        if !eps.is_finite() {
            return Err(Error::InvalidParameter(format!("coupling must be finite, got {eps}")));
        }
        Ok(CoupledOscillators { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Initial state used by the shipped torus experiments.
    pub fn default_initial() -> PhaseState {
        PhaseState { q: vec![1.0, 1.0], p: vec![0.0, 0.0] }
    }

    pub const FREQUENCIES: [f64; 2] = [std::f64::consts::SQRT_2, 1.0];
}

impl HamiltonianModel for CoupledOscillators {
    fn name(&self) -> &str {
        "coupled_2d"
    }

    fn dim(&self) -> usize {
        2
    }

    fn energy(&self, t: f64, q: &[f64], p: &[f64]) -> f64 {
        let (s, c) = (FORCING_FREQUENCY * t).sin_cos();
        0.5 * p[0] * p[0] + 0.5 * p[1] * p[1] + q[0] * q[0] + 0.5 * q[1] * q[1]
            - self.eps * (q[0] * s + q[1] * c + p[0] * p[1])
    }

    fn grad_q(&self, t: f64, q: &[f64], _p: &[f64], out: &mut [f64]) {
        let (s, c) = (FORCING_FREQUENCY * t).sin_cos();
        out[0] = 2.0 * q[0] - self.eps * s;
        out[1] = q[1] - self.eps * c;
    }

    fn grad_p(&self, _t: f64, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = p[0] - self.eps * p[1];
        out[1] = p[1] - self.eps * p[0];
    }

    fn hessian(&self, _t: f64, _q: &[f64], _p: &[f64]) -> Option<HessianBlocks> {
        Some(HessianBlocks {
            n: 2,
            qq: vec![2.0, 0.0, 0.0, 1.0],
            qp: vec![0.0; 4],
            pp: vec![1.0, -self.eps, -self.eps, 1.0],
        })
    }

    fn is_separable(&self) -> bool {
        true
    }

    fn is_time_dependent(&self) -> bool {
        true
    }

    fn perturbation_strength(&self) -> Option<f64> {
        Some(self.eps)
    }

    fn actions(&self, _t: f64, q: &[f64], p: &[f64]) -> Option<Vec<f64>> {
        let h1 = 0.5 * p[0] * p[0] + q[0] * q[0];
        let h2 = 0.5 * p[1] * p[1] + 0.5 * q[1] * q[1];
        Some(vec![h1 / Self::FREQUENCIES[0], h2 / Self::FREQUENCIES[1]])
    }
}
