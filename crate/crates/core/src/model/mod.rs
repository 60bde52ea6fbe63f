//! Hamiltonian models and the built-in catalog.
//!
//! A model exposes its energy and the two partial gradients; Hamilton's
//! vector field is `(grad_p, -grad_q)`. Second derivatives are optional and
//! only needed by the action gradient.

mod action_angle;
mod coupled;
mod harmonic;
mod three_body;

pub use action_angle::{ActionAngleModel, KickedRotors, NearlyIntegrable};
pub use coupled::CoupledOscillators;
pub use harmonic::HarmonicOscillator;
pub use three_body::{ThreeBody, ThreeBodyParams};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::state::PhaseState;

/// Second derivatives of `H`, each block `n x n` and row-major.
///
/// `qp[a * n + b]` is `d^2 H / dq_a dp_b`; the `pq` block is its transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBlocks {
    pub n: usize,
    pub qq: Vec<f64>,
    pub qp: Vec<f64>,
    pub pp: Vec<f64>,
}

impl HessianBlocks {
    pub fn zeros(n: usize) -> Self {
        HessianBlocks { n, qq: vec![0.0; n * n], qp: vec![0.0; n * n], pp: vec![0.0; n * n] }
    }

    /// `d^2 H / dp_a dq_b`.
    pub fn pq(&self, a: usize, b: usize) -> f64 {
        self.qp[b * self.n + a]
    }

    /// `trace(d^2H/dq dp) - trace(d^2H/dp dq)`; zero for any `C^2` Hamiltonian.
    pub fn symplectic_trace_defect(&self) -> f64 {
        (0..self.n).map(|i| self.qp[i * self.n + i] - self.pq(i, i)).sum()
    }
}

pub trait HamiltonianModel: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn energy(&self, t: f64, q: &[f64], p: &[f64]) -> f64;

    /// Writes `dH/dq` into `out`.
    fn grad_q(&self, t: f64, q: &[f64], p: &[f64], out: &mut [f64]);

    /// Writes `dH/dp` into `out`.
    fn grad_p(&self, t: f64, q: &[f64], p: &[f64], out: &mut [f64]);

    fn hessian(&self, _t: f64, _q: &[f64], _p: &[f64]) -> Option<HessianBlocks> {
        None
    }

    /// `H = T(p) + V(t, q)`, so `grad_p` ignores `q` and `grad_q` ignores `p`.
    fn is_separable(&self) -> bool {
        false
    }

    fn is_time_dependent(&self) -> bool {
        false
    }

    /// Strength of the perturbation when the model is split as `H0 + eps1 * P`.
    fn perturbation_strength(&self) -> Option<f64> {
        None
    }

    /// Action variables of the unperturbed integrable part, if known.
    fn actions(&self, _t: f64, _q: &[f64], _p: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Per-coordinate magnitudes used to scale finite-difference steps and
    /// random test states.
    fn typical_scales(&self) -> PhaseState {
        let n = self.dim();
        PhaseState { q: vec![1.0; n], p: vec![1.0; n] }
    }

    /// A random state for self-checks, uniform in `[-1, 1] * typical_scales`.
    fn sample_state(&self, rng: &mut ChaCha8Rng) -> PhaseState {
        let s = self.typical_scales();
        let mut draw = |scale: f64| scale * (2.0 * unit_uniform(rng) - 1.0);
        PhaseState { q: s.q.iter().map(|&x| draw(x)).collect(), p: s.p.iter().map(|&x| draw(x)).collect() }
    }
}

impl<M: HamiltonianModel + ?Sized> HamiltonianModel for Box<M> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn energy(&self, t: f64, q: &[f64], p: &[f64]) -> f64 {
        (**self).energy(t, q, p)
    }

    fn grad_q(&self, t: f64, q: &[f64], p: &[f64], out: &mut [f64]) {
        (**self).grad_q(t, q, p, out)
    }

    fn grad_p(&self, t: f64, q: &[f64], p: &[f64], out: &mut [f64]) {
        (**self).grad_p(t, q, p, out)
    }

    fn hessian(&self, t: f64, q: &[f64], p: &[f64]) -> Option<HessianBlocks> {
        (**self).hessian(t, q, p)
    }

    fn is_separable(&self) -> bool {
        (**self).is_separable()
    }

    fn is_time_dependent(&self) -> bool {
        (**self).is_time_dependent()
    }

    fn perturbation_strength(&self) -> Option<f64> {
        (**self).perturbation_strength()
    }

    fn actions(&self, t: f64, q: &[f64], p: &[f64]) -> Option<Vec<f64>> {
        (**self).actions(t, q, p)
    }

    fn typical_scales(&self) -> PhaseState {
        (**self).typical_scales()
    }

    fn sample_state(&self, rng: &mut ChaCha8Rng) -> PhaseState {
        (**self).sample_state(rng)
    }
}

/// Hamilton's vector field at `(t, x)` with `x = [q, p]`, written into `out`.
pub fn vector_field<M: HamiltonianModel + ?Sized>(model: &M, t: f64, x: &[f64], out: &mut [f64]) {
    let n = model.dim();
    let (q, p) = x.split_at(n);
    let (dq, dp) = out.split_at_mut(n);
    model.grad_p(t, q, p, dq);
    model.grad_q(t, q, p, dp);
    dp.iter_mut().for_each(|v| *v = -*v);
}

pub(crate) fn unit_uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub n_samples: usize,
    /// Worst `|analytic - fd|_inf / |fd|_inf` over the sampled states.
    pub max_rel_error: f64,
    pub threshold: f64,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.threshold
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::InvalidParameter(format!(
                "gradient self-check failed: relative error {:e} > {:e}",
                self.max_rel_error, self.threshold
            )))
        }
    }
}

/// Relative finite-difference step used by [`gradient_selfcheck`].
pub const FD_RELATIVE_STEP: f64 = 1e-5;

/// Checks `grad_q`/`grad_p` against central differences of `energy` at
/// `n_samples` random states. Steps are `FD_RELATIVE_STEP * typical_scales`.
pub fn gradient_selfcheck<M: HamiltonianModel + ?Sized>(
    model: &M,
    n_samples: usize,
    seed: u64,
    threshold: f64,
) -> GradientCheck {
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = model.typical_scales().to_flat();
    let mut worst: f64 = 0.0;
    let mut gq = vec![0.0; n];
    let mut gp = vec![0.0; n];
    for _ in 0..n_samples {
        let s = model.sample_state(&mut rng);
        let t = if model.is_time_dependent() { 10.0 * unit_uniform(&mut rng) } else { 0.0 };
        model.grad_q(t, &s.q, &s.p, &mut gq);
        model.grad_p(t, &s.q, &s.p, &mut gp);
        let analytic: Vec<f64> = gq.iter().chain(&gp).copied().collect();
        let mut x = s.to_flat();
        let mut fd = vec![0.0; 2 * n];
        for i in 0..2 * n {
            let h = FD_RELATIVE_STEP * scales[i];
            let orig = x[i];
            x[i] = orig + h;
            let plus = model.energy(t, &x[..n], &x[n..]);
            x[i] = orig - h;
            let minus = model.energy(t, &x[..n], &x[n..]);
            x[i] = orig;
            fd[i] = (plus - minus) / (2.0 * h);
        }
        worst = worst.max(relative_error(&analytic, &fd));
    }
    GradientCheck { n_samples, max_rel_error: worst, threshold }
}

/// `|a - b|_inf / |b|_inf`, falling back to the absolute error when `b` is zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Central differences of the gradients, laid out like [`HessianBlocks`].
    pub fn fd_hessian<M: HamiltonianModel + ?Sized>(model: &M, t: f64, s: &PhaseState) -> HessianBlocks {
        let n = model.dim();
        let scales = model.typical_scales().to_flat();
        let mut out = HessianBlocks::zeros(n);
        let mut x = s.to_flat();
        let mut gq_plus = vec![0.0; n];
        let mut gq_minus = vec![0.0; n];
        let mut gp_plus = vec![0.0; n];
        let mut gp_minus = vec![0.0; n];
        for j in 0..2 * n {
            let h = 1e-6 * scales[j];
            let orig = x[j];
            x[j] = orig + h;
            model.grad_q(t, &x[..n], &x[n..], &mut gq_plus);
            model.grad_p(t, &x[..n], &x[n..], &mut gp_plus);
            x[j] = orig - h;
            model.grad_q(t, &x[..n], &x[n..], &mut gq_minus);
            model.grad_p(t, &x[..n], &x[n..], &mut gp_minus);
            x[j] = orig;
            for a in 0..n {
                let dgq = (gq_plus[a] - gq_minus[a]) / (2.0 * h);
                let dgp = (gp_plus[a] - gp_minus[a]) / (2.0 * h);
                if j < n {
                    out.qq[a * n + j] = dgq;
                } else {
                    // d(dH/dq_a)/dp_b
                    out.qp[a * n + (j - n)] = dgq;
                    out.pp[a * n + (j - n)] = dgp;
                }
            }
        }
        out
    }

    pub fn assert_hessian_matches<M: HamiltonianModel + ?Sized>(model: &M, samples: usize, tol: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..samples {
            let s = model.sample_state(&mut rng);
            let t = 1.3;
            let exact = model.hessian(t, &s.q, &s.p).expect("hessian");
            let fd = fd_hessian(model, t, &s);
            for (name, a, b) in [("qq", &exact.qq, &fd.qq), ("qp", &exact.qp, &fd.qp), ("pp", &exact.pp, &fd.pp)] {
                let err = relative_error(a, b);
                let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
                assert!(err <= tol || scale == 0.0 && a.iter().all(|v| v.abs() < 1e-9), "{name}: {err:e}");
            }
            assert!(exact.symplectic_trace_defect().abs() < 1e-12);
        }
    }
}
