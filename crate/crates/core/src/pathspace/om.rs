use serde::Serialize;

use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::HamiltonianModel;
use crate::path::DiscretePath;

pub const QUADRATURE: &str = "trapezoid";
pub const DERIVATIVE_SCHEME: &str = "central-interior/one-sided-second-order-endpoints";

/// The discretized Onsager-Machlup action split into its `q` and `p` parts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OMValue {
    pub action: f64,
    pub term_q: f64,
    pub term_p: f64,
    pub quadrature: &'static str,
    pub derivative_scheme: &'static str,
}

/// Second-order finite-difference derivative of node `k`, all channels.
pub(crate) fn node_derivative(data: &[f64], width: usize, n_nodes: usize, dt: f64, k: usize, out: &mut [f64]) {
    let at = |j: usize, c: usize| data[j * width + c];
    let h = 0.5 / dt;
    for c in 0..width {
        out[c] = if k == 0 {
            h * (-3.0 * at(0, c) + 4.0 * at(1, c) - at(2, c))
        } else if k == n_nodes - 1 {
            h * (at(k - 2, c) - 4.0 * at(k - 1, c) + 3.0 * at(k, c))
        } else {
            h * (at(k + 1, c) - at(k - 1, c))
        };
    }
}

/// Nonzero entries `(column, coefficient)` of row `k` of the derivative
/// operator, before the `1 / dt` factor.
pub(crate) fn derivative_stencil(k: usize, n_nodes: usize) -> [(usize, f64); 3] {
    if k == 0 {
        [(0, -1.5), (1, 2.0), (2, -0.5)]
    } else if k == n_nodes - 1 {
        [(k - 2, 0.5), (k - 1, -2.0), (k, 1.5)]
    } else {
        [(k - 1, -0.5), (k + 1, 0.5), (k, 0.0)]
    }
}

/// Per-grid data shared by repeated action and gradient evaluations: trapezoid
/// weights times `sigma^-2` for every node and channel.
#[derive(Debug, Clone)]
pub(crate) struct OmSetup {
    pub(crate) grid: TimeGrid,
    pub(crate) dim: usize,
    /// `w_k / sigma_c(t_k)^2`, node-major like path data.
    pub(crate) weights: Vec<f64>,
}

impl OmSetup {
    pub(crate) fn new<M: HamiltonianModel + ?Sized>(
        model: &M,
        diffusion: &DiffusionSchedule,
        grid: &TimeGrid,
        dim: usize,
    ) -> Result<Self> {
        if grid.n_steps() < 2 {
            return Err(Error::InvalidParameter("the action needs a grid with at least two steps".into()));
        }
        if model.dim() != dim {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: dim });
        }
        if diffusion.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: diffusion.dim() });
        }
        diffusion.check_bounds(grid.t0(), grid.t1())?;
        let width = 2 * dim;
        let n_nodes = grid.n_nodes();
        let mut weights = vec![0.0; n_nodes * width];
        let mut sigma = vec![0.0; width];
        for k in 0..n_nodes {
            diffusion.eval(grid.time(k), &mut sigma);
            let w = if k == 0 || k == n_nodes - 1 { 0.5 * grid.dt() } else { grid.dt() };
            for c in 0..width {
                weights[k * width + c] = w / (sigma[c] * sigma[c]);
            }
        }
        Ok(OmSetup { grid: *grid, dim, weights })
    }

    fn width(&self) -> usize {
        2 * self.dim
    }

    /// Drift residuals `(D phi_q - dH/dp, D phi_p + dH/dq)` at node `k`.
    fn residual<M: HamiltonianModel + ?Sized>(&self, model: &M, data: &[f64], k: usize, grad: &mut [f64], r: &mut [f64]) {
        let (n, w) = (self.dim, self.width());
        let t = self.grid.time(k);
        node_derivative(data, w, self.grid.n_nodes(), self.grid.dt(), k, r);
        let node = &data[k * w..(k + 1) * w];
        let (q, p) = node.split_at(n);
        model.grad_p(t, q, p, &mut grad[..n]);
        model.grad_q(t, q, p, &mut grad[n..]);
        for a in 0..n {
            r[a] -= grad[a];
            r[n + a] += grad[n + a];
        }
    }

    pub(crate) fn terms<M: HamiltonianModel + ?Sized>(&self, model: &M, data: &[f64]) -> (f64, f64) {
        let (n, w) = (self.dim, self.width());
        let mut grad = vec![0.0; w];
        let mut r = vec![0.0; w];
        let (mut term_q, mut term_p) = (0.0, 0.0);
        for k in 0..self.grid.n_nodes() {
            self.residual(model, data, k, &mut grad, &mut r);
            let wk = &self.weights[k * w..(k + 1) * w];
            for a in 0..n {
                term_q += wk[a] * r[a] * r[a];
                term_p += wk[n + a] * r[n + a] * r[n + a];
            }
        }
        (term_q, term_p)
    }

    /// Action and its exact gradient with respect to every node value.
    pub(crate) fn action_and_gradient<M: HamiltonianModel + ?Sized>(
        &self,
        model: &M,
        data: &[f64],
        out: &mut [f64],
    ) -> Result<f64> {
        let (n, w) = (self.dim, self.width());
        let n_nodes = self.grid.n_nodes();
        let inv_dt = 1.0 / self.grid.dt();
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut grad = vec![0.0; w];
        let mut r = vec![0.0; w];
        let mut action = 0.0;
        for k in 0..n_nodes {
            self.residual(model, data, k, &mut grad, &mut r);
            let wk = &self.weights[k * w..(k + 1) * w];
            // r becomes (U_k, V_k) = 2 w_k sigma^-2 r_k after accumulating the action
            for c in 0..w {
                action += wk[c] * r[c] * r[c];
                r[c] *= 2.0 * wk[c];
            }
            for (j, coef) in derivative_stencil(k, n_nodes) {
                if coef != 0.0 {
                    let dst = &mut out[j * w..(j + 1) * w];
                    dst.iter_mut().zip(&r).for_each(|(o, u)| *o += coef * inv_dt * u);
                }
            }
            let t = self.grid.time(k);
            let node = &data[k * w..(k + 1) * w];
            let h = model
                .hessian(t, &node[..n], &node[n..])
                .ok_or_else(|| Error::MissingHessian(model.name().to_string()))?;
            let (u, v) = r.split_at(n);
            let dst = &mut out[k * w..(k + 1) * w];
            for b in 0..n {
                let mut gq = 0.0;
                let mut gp = 0.0;
                for a in 0..n {
                    // d(dH/dp_a)/dq_b = H_qp[b, a]; d(dH/dq_a)/dp_b = H_qp[a, b]
                    gq += -h.qp[b * n + a] * u[a] + h.qq[a * n + b] * v[a];
                    gp += -h.pp[a * n + b] * u[a] + h.qp[a * n + b] * v[a];
                }
                dst[b] += gq;
                dst[n + b] += gp;
            }
        }
        if !action.is_finite() {
            return Err(Error::NonFiniteAction);
        }
        Ok(action)
    }
}

fn check_path<M: HamiltonianModel + ?Sized>(path: &DiscretePath, model: &M) -> Result<()> {
    if model.dim() != path.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: path.dim() });
    }
    Ok(())
}

/// Onsager-Machlup action
/// `int |sigma_q^-1 (phi_q' - dH/dp)|^2 + |sigma_p^-1 (phi_p' + dH/dq)|^2 dt`
/// with trapezoid quadrature. The noise intensity does not enter.
pub fn om_functional<M: HamiltonianModel + ?Sized>(
    path: &DiscretePath,
    model: &M,
    diffusion: &DiffusionSchedule,
) -> Result<OMValue> {
    check_path(path, model)?;
    let setup = OmSetup::new(model, diffusion, path.grid(), path.dim())?;
    let (term_q, term_p) = setup.terms(model, path.as_flat());
    let action = term_q + term_p;
    if !action.is_finite() {
        return Err(Error::NonFiniteAction);
    }
    Ok(OMValue { action, term_q, term_p, quadrature: QUADRATURE, derivative_scheme: DERIVATIVE_SCHEME })
}

/// Exact gradient of [`om_functional`] with respect to every node value, in
/// path layout. Needs model Hessians.
pub fn om_gradient<M: HamiltonianModel + ?Sized>(
    path: &DiscretePath,
    model: &M,
    diffusion: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    check_path(path, model)?;
    let setup = OmSetup::new(model, diffusion, path.grid(), path.dim())?;
    let mut out = vec![0.0; path.as_flat().len()];
    setup.action_and_gradient(model, path.as_flat(), &mut out)?;
    Ok(out)
}

/// Discrete derivative energy `sum_k |phi_{k+1} - phi_k|^2 / dt`.
pub fn derivative_energy(path: &DiscretePath) -> f64 {
    let dt = path.grid().dt();
    path.as_flat()
        .chunks_exact(path.node_len())
        .zip(path.as_flat().chunks_exact(path.node_len()).skip(1))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>() / dt)
        .sum()
}

/// Large-deviation rate `J = action / 2`, or `+inf` when the path fails the
/// finite-energy screen.
pub fn rate_function<M: HamiltonianModel + ?Sized>(
    path: &DiscretePath,
    model: &M,
    diffusion: &DiffusionSchedule,
) -> Result<f64> {
    if !derivative_energy(path).is_finite() {
        return Ok(f64::INFINITY);
    }
    match om_functional(path, model, diffusion) {
        Ok(v) => Ok(0.5 * v.action),
        Err(Error::NonFiniteAction) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Largest violation of Hamilton's equations at interior nodes, using
/// central differences.
pub fn euler_lagrange_residual<M: HamiltonianModel + ?Sized>(path: &DiscretePath, model: &M) -> Result<f64> {
    check_path(path, model)?;
    let n = path.dim();
    let w = 2 * n;
    let (data, n_nodes, dt) = (path.as_flat(), path.n_nodes(), path.grid().dt());
    let mut d = vec![0.0; w];
    let mut g = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for k in 1..n_nodes.saturating_sub(1) {
        let t = path.grid().time(k);
        node_derivative(data, w, n_nodes, dt, k, &mut d);
        model.grad_p(t, path.q(k), path.p(k), &mut g);
        for a in 0..n {
            worst = worst.max((d[a] - g[a]).abs());
        }
        model.grad_q(t, path.q(k), path.p(k), &mut g);
        for a in 0..n {
            worst = worst.max((d[n + a] + g[a]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{euler_maruyama, rk4};
    use crate::model::{relative_error, CoupledOscillators, HarmonicOscillator};
    use crate::noise::NoiseStream;
    use crate::state::PhaseState;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn harmonic() -> (HarmonicOscillator, PhaseState) {
        HarmonicOscillator::with_initial(1.0, 1.0, 50.0, 0.0).unwrap()
    }

    fn unit_noise(dim: usize) -> DiffusionSchedule {
        DiffusionSchedule::constant(dim, 1.0, 1.0).unwrap()
    }

    fn random_path(grid: TimeGrid, dim: usize, scale: f64, seed: u64) -> DiscretePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.n_nodes() * 2 * dim)
            .map(|_| scale * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5))
            .collect();
        DiscretePath::from_flat(grid, dim, data).unwrap()
    }

    fn fd_gradient<M: HamiltonianModel>(path: &DiscretePath, model: &M, d: &DiffusionSchedule) -> Vec<f64> {
        let mut work = path.clone();
        (0..path.as_flat().len())
            .map(|i| {
                let x = work.as_flat()[i];
                let h = 1e-5 * x.abs().max(1.0);
                work.as_flat_mut()[i] = x + h;
                let up = om_functional(&work, model, d).unwrap().action;
                work.as_flat_mut()[i] = x - h;
                let down = om_functional(&work, model, d).unwrap().action;
                work.as_flat_mut()[i] = x;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn deterministic_flow_has_near_zero_action() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 10_000).unwrap();
        let path = rk4(&m, &x0, &grid).unwrap();
        let om = om_functional(&path, &m, &unit_noise(1)).unwrap();
        assert!(om.action <= 1e-6, "{}", om.action);
        assert!(euler_lagrange_residual(&path, &m).unwrap() <= 1e-5);
        assert_eq!(rate_function(&path, &m, &unit_noise(1)).unwrap(), 0.5 * om.action);
    }

    #[test]
    fn constant_path_closed_form() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let path = DiscretePath::constant(grid, &x0);
        let om = om_functional(&path, &m, &unit_noise(1)).unwrap();
        assert_eq!(om.term_q, 0.0);
        assert!((om.term_p - 2500.0).abs() < 1e-9);
        assert_eq!(om.action, om.term_q + om.term_p);
        assert!((rate_function(&path, &m, &unit_noise(1)).unwrap() - 1250.0).abs() < 1e-9);
        assert!((euler_lagrange_residual(&path, &m).unwrap() - 50.0).abs() < 1e-12);

        let sp2 = DiffusionSchedule::new(
            vec![crate::diffusion::ChannelSchedule::constant(1.0)],
            vec![crate::diffusion::ChannelSchedule::constant(2.0)],
            1.0,
        )
        .unwrap();
        assert!((om_functional(&path, &m, &sp2).unwrap().term_p - 625.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = TimeGrid::new(0.0, 1.0, 12).unwrap();
        let (h, _) = harmonic();
        let c = CoupledOscillators::new(0.1).unwrap();
        let periodic = DiffusionSchedule::new(
            vec![crate::diffusion::ChannelSchedule::sine(2.0, 0.5, 1.0)],
            vec![crate::diffusion::ChannelSchedule::cosine(1.5, 0.5, 3.0)],
            1.0,
        )
        .unwrap();
        for seed in 0..10 {
            let path = random_path(grid, 1, 4.0, seed);
            let exact = om_gradient(&path, &h, &periodic).unwrap();
            assert!(relative_error(&exact, &fd_gradient(&path, &h, &periodic)) <= 1e-6);
            let path = random_path(grid, 2, 4.0, 100 + seed);
            let exact = om_gradient(&path, &c, &unit_noise(2)).unwrap();
            assert!(relative_error(&exact, &fd_gradient(&path, &c, &unit_noise(2))) <= 1e-6);
        }
    }

    #[test]
    fn sigma_scaling_divides_action_and_gradient() {
        let grid = TimeGrid::new(0.0, 2.0, 30).unwrap();
        let c = CoupledOscillators::new(0.1).unwrap();
        let path = random_path(grid, 2, 3.0, 5);
        let d1 = DiffusionSchedule::periodic_coupled(1.0).unwrap().scaled(1.0);
        // shift away from zero so C2 holds, then scale by 3
        let base = DiffusionSchedule::new(
            d1.channels_q().iter().map(|c| crate::diffusion::ChannelSchedule { offset: c.offset + 2.0, ..*c }).collect(),
            d1.channels_p().iter().map(|c| crate::diffusion::ChannelSchedule { offset: c.offset + 2.0, ..*c }).collect(),
            1.0,
        )
        .unwrap();
        let scaled = base.scaled(3.0);
        let a1 = om_functional(&path, &c, &base).unwrap().action;
        let a3 = om_functional(&path, &c, &scaled).unwrap().action;
        assert!((a3 - a1 / 9.0).abs() <= 1e-12 * a1);
        let g1 = om_gradient(&path, &c, &base).unwrap();
        let g3 = om_gradient(&path, &c, &scaled).unwrap();
        let g1_scaled: Vec<f64> = g1.iter().map(|g| g / 9.0).collect();
        assert!(relative_error(&g3, &g1_scaled) <= 1e-12);
    }

    #[test]
    fn quadrature_converges_at_second_order() {
        let (m, _) = harmonic();
        let action = |n| {
            let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
            let path = DiscretePath::from_fn(grid, 1, |t| PhaseState {
                q: vec![(2.0 * t).sin() + t],
                p: vec![(3.0 * t).cos()],
            })
            .unwrap();
            om_functional(&path, &m, &unit_noise(1)).unwrap().action
        };
        let (a1, a2, a3) = (action(100), action(200), action(400));
        let order = ((a1 - a2) / (a2 - a3)).abs().log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn noisy_path_violates_the_equations_more() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 10_000).unwrap();
        let d = DiffusionSchedule::periodic_oscillator().with_intensity(0.1);
        let noisy = euler_maruyama(&m, &d, &x0, &grid, &mut NoiseStream::new(3, 0, 2)).unwrap();
        let flow = rk4(&m, &x0, &grid).unwrap();
        assert!(euler_lagrange_residual(&noisy, &m).unwrap() > euler_lagrange_residual(&flow, &m).unwrap());
    }

    #[test]
    fn vanishing_sigma_is_rejected() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 2.0, 100).unwrap();
        let path = DiscretePath::constant(grid, &x0);
        let err = om_functional(&path, &m, &DiffusionSchedule::periodic_oscillator()).unwrap_err();
        assert!(matches!(err, Error::DiffusionBound { .. }));
    }

    #[test]
    fn infinite_paths_have_infinite_rate() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let mut path = DiscretePath::constant(grid, &x0);
        path.node_mut(4)[0] = 1e300;
        assert_eq!(rate_function(&path, &m, &unit_noise(1)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn short_grids_are_rejected() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let path = DiscretePath::constant(grid, &x0);
        assert!(matches!(om_functional(&path, &m, &unit_noise(1)), Err(Error::InvalidParameter(_))));
    }
}
