use super::{HamiltonianModel, HessianBlocks};
use crate::error::{Error, Result};

/// An integrable Hamiltonian `H(I)` together with a perturbation `P(I, theta)`.
///
/// Second derivatives of `P` are returned in [`HessianBlocks`] layout with
/// angles in the `q` slot and actions in the `p` slot.
pub trait NearlyIntegrable: Send + Sync {
    fn dim(&self) -> usize;

    fn integrable_energy(&self, actions: &[f64]) -> f64;

    /// `omega(I) = dH/dI`.
    fn frequencies(&self, actions: &[f64], out: &mut [f64]);

    /// `d omega / dI`, row-major `n x n`.
    fn frequency_jacobian(&self, actions: &[f64], out: &mut [f64]);

    fn perturbation(&self, angles: &[f64], actions: &[f64]) -> f64;

    fn perturbation_grad_angles(&self, angles: &[f64], actions: &[f64], out: &mut [f64]);

    fn perturbation_grad_actions(&self, angles: &[f64], actions: &[f64], out: &mut [f64]);

    fn perturbation_hessian(&self, angles: &[f64], actions: &[f64]) -> HessianBlocks;

    fn perturbation_depends_on_actions(&self) -> bool {
        true
    }
}

/// `H_eps(I, theta) = H(I) + eps1 * P(I, theta)` in action-angle form, with
/// angles stored in `q` and actions in `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionAngleModel<S> {
    system: S,
    eps1: f64,
}

impl<S: NearlyIntegrable> ActionAngleModel<S> {
    pub fn new(system: S, eps1: f64) -> Result<Self> {
        if !eps1.is_finite() {
            return Err(Error::InvalidParameter(format!("perturbation strength must be finite, got {eps1}")));
        }
        Ok(ActionAngleModel { system, eps1 })
    }

    pub fn system(&self) -> &S {
        &self.system
    }
}

impl<S: NearlyIntegrable> HamiltonianModel for ActionAngleModel<S> {
    fn name(&self) -> &str {
        "action_angle"
    }

    fn dim(&self) -> usize {
        self.system.dim()
    }

    fn energy(&self, _t: f64, theta: &[f64], actions: &[f64]) -> f64 {
        self.system.integrable_energy(actions) + self.eps1 * self.system.perturbation(theta, actions)
    }

    fn grad_q(&self, _t: f64, theta: &[f64], actions: &[f64], out: &mut [f64]) {
        self.system.perturbation_grad_angles(theta, actions, out);
        out.iter_mut().for_each(|v| *v *= self.eps1);
    }

    fn grad_p(&self, _t: f64, theta: &[f64], actions: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let mut dp = vec![0.0; n];
        self.system.frequencies(actions, out);
        self.system.perturbation_grad_actions(theta, actions, &mut dp);
        out.iter_mut().zip(&dp).for_each(|(o, d)| *o += self.eps1 * d);
    }

    fn hessian(&self, _t: f64, theta: &[f64], actions: &[f64]) -> Option<HessianBlocks> {
        let n = self.dim();
        let mut h = self.system.perturbation_hessian(theta, actions);
        for v in h.qq.iter_mut().chain(h.qp.iter_mut()).chain(h.pp.iter_mut()) {
            *v *= self.eps1;
        }
        let mut jac = vec![0.0; n * n];
        self.system.frequency_jacobian(actions, &mut jac);
        h.pp.iter_mut().zip(&jac).for_each(|(a, b)| *a += b);
        Some(h)
    }

    fn is_separable(&self) -> bool {
        !self.system.perturbation_depends_on_actions()
    }

    fn perturbation_strength(&self) -> Option<f64> {
        Some(self.eps1)
    }

    fn actions(&self, _t: f64, _theta: &[f64], actions: &[f64]) -> Option<Vec<f64>> {
        Some(actions.to_vec())
    }
}

/// Free rotors `H(I) = |I|^2 / 2` kicked by
/// `P(theta) = sum_i cos(theta_i) + sum_i cos(theta_i - theta_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct KickedRotors {
    n: usize,
}

impl KickedRotors {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("rotors need at least one degree of freedom".into()));
        }
        Ok(KickedRotors { n })
    }
}

impl NearlyIntegrable for KickedRotors {
    fn dim(&self) -> usize {
        self.n
    }

    fn integrable_energy(&self, actions: &[f64]) -> f64 {
        0.5 * actions.iter().map(|i| i * i).sum::<f64>()
    }

    fn frequencies(&self, actions: &[f64], out: &mut [f64]) {
        out.copy_from_slice(actions);
    }

    fn frequency_jacobian(&self, _actions: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            out[i * self.n + i] = 1.0;
        }
    }

    fn perturbation(&self, angles: &[f64], _actions: &[f64]) -> f64 {
        let single: f64 = angles.iter().map(|t| t.cos()).sum();
        let pair: f64 = angles.windows(2).map(|w| (w[0] - w[1]).cos()).sum();
        single + pair
    }

    fn perturbation_grad_angles(&self, angles: &[f64], _actions: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = -angles[i].sin();
            if i + 1 < self.n {
                out[i] -= (angles[i] - angles[i + 1]).sin();
            }
            if i > 0 {
                out[i] += (angles[i - 1] - angles[i]).sin();
            }
        }
    }

    fn perturbation_grad_actions(&self, _angles: &[f64], _actions: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn perturbation_hessian(&self, angles: &[f64], _actions: &[f64]) -> HessianBlocks {
        let n = self.n;
        let mut h = HessianBlocks::zeros(n);
        for i in 0..n {
            h.qq[i * n + i] -= angles[i].cos();
            if i + 1 < n {
                let c = (angles[i] - angles[i + 1]).cos();
                h.qq[i * n + i] -= c;
                h.qq[(i + 1) * n + i + 1] -= c;
                h.qq[i * n + i + 1] = c;
                h.qq[(i + 1) * n + i] = c;
            }
        }
        h
    }

    fn perturbation_depends_on_actions(&self) -> bool {
        false
    }
}
