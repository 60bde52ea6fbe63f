//! Most probable paths: minimization of the discretized Onsager-Machlup
//! action over the nodes not fixed by the boundary policy.
//!
//! Search directions are preconditioned by the banded matrix coming from the
//! `|phi'|^2` part of the action (one pentadiagonal system per channel), which
//! removes the `1/dt^2` stiffness of the raw quadratic form.

use std::collections::VecDeque;

use serde::Serialize;

use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::HamiltonianModel;
use crate::path::DiscretePath;
use crate::pathspace::{derivative_stencil, node_derivative, euler_lagrange_residual, om_functional, OmSetup};
use crate::state::PhaseState;

#[derive(Debug, Clone, PartialEq)]
pub enum EndpointPolicy {
    Free,
    Pinned(PhaseState),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SearchDirection {
    /// Limited-memory BFGS keeping `memory` correction pairs.
    Lbfgs { memory: usize },
    SteepestDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MppOptions {
    /// Stop once the preconditioned gradient norm `sqrt(g^T M^-1 g)` is below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub direction: SearchDirection,
    pub precondition: bool,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor during backtracking.
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for MppOptions {
    fn default() -> Self {
        MppOptions {
            grad_tol: 1e-7,
            max_iter: 20_000,
            direction: SearchDirection::Lbfgs { memory: 10 },
            precondition: true,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MppProblem {
    x0: PhaseState,
    grid: TimeGrid,
    endpoint: EndpointPolicy,
    init: DiscretePath,
    options: MppOptions,
}

impl MppProblem {
    /// Free endpoint, constant initial guess at `x0`.
    pub fn new(x0: PhaseState, grid: TimeGrid) -> Self {
        let init = DiscretePath::constant(grid, &x0);
        MppProblem { x0, grid, endpoint: EndpointPolicy::Free, init, options: MppOptions::default() }
    }

    pub fn with_init(mut self, init: DiscretePath) -> Result<Self> {
        if init.grid() != &self.grid {
            return Err(Error::InvalidParameter("initial guess must live on the problem grid".into()));
        }
        if init.dim() != self.x0.dim() {
            return Err(Error::DimensionMismatch { expected: self.x0.dim(), found: init.dim() });
        }
        let start = init.first();
        let tol = 1e-12 * self.x0.max_abs().max(1.0);
        if start.to_flat().iter().zip(self.x0.to_flat()).any(|(a, b)| (a - b).abs() > tol) {
            return Err(Error::InvalidParameter("initial guess must start at x0".into()));
        }
        self.init = init;
        if let EndpointPolicy::Pinned(x1) = &self.endpoint {
            let last = self.grid.n_steps();
            self.init.node_mut(last).copy_from_slice(&x1.to_flat());
        }
        Ok(self)
    }

    /// Fix the final node to `x1`; the initial guess is overwritten there.
    pub fn pinned(mut self, x1: PhaseState) -> Result<Self> {
        if x1.dim() != self.x0.dim() {
            return Err(Error::DimensionMismatch { expected: self.x0.dim(), found: x1.dim() });
        }
        let last = self.grid.n_steps();
        self.init.node_mut(last).copy_from_slice(&x1.to_flat());
        self.endpoint = EndpointPolicy::Pinned(x1);
        Ok(self)
    }

    pub fn with_options(mut self, options: MppOptions) -> Self {
        self.options = options;
        self
    }

    pub fn x0(&self) -> &PhaseState {
        &self.x0
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn endpoint(&self) -> &EndpointPolicy {
        &self.endpoint
    }

    pub fn init(&self) -> &DiscretePath {
        &self.init
    }

    pub fn options(&self) -> &MppOptions {
        &self.options
    }

    fn free_range(&self) -> std::ops::Range<usize> {
        match self.endpoint {
            EndpointPolicy::Free => 1..self.grid.n_nodes(),
            EndpointPolicy::Pinned(_) => 1..self.grid.n_nodes() - 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MppSolution {
    pub path: DiscretePath,
    /// Action after every accepted step, starting with the initial guess.
    pub action_history: Vec<f64>,
    pub grad_norm: f64,
    pub el_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

impl MppSolution {
    pub fn action(&self) -> f64 {
        *self.action_history.last().expect("history starts with the initial action")
    }
}

/// Symmetric positive definite pentadiagonal matrix in `L D L^T` form.
#[derive(Debug, Clone)]
struct Pentadiagonal {
    // row i holds (L[i][i-2], L[i][i-1], D[i])
    rows: Vec<[f64; 3]>,
}

impl Pentadiagonal {
    /// `bands[i] = (A[i][i-2], A[i][i-1], A[i][i])`, factored as `L D L^T`.
    fn factor(mut bands: Vec<[f64; 3]>) -> Self {
        for i in 0..bands.len() {
            let l2 = if i >= 2 { bands[i][0] / bands[i - 2][2] } else { 0.0 };
            let l1 = if i >= 1 {
                let fill = if i >= 2 { l2 * bands[i - 2][2] * bands[i - 1][1] } else { 0.0 };
                (bands[i][1] - fill) / bands[i - 1][2]
            } else {
                0.0
            };
            let mut d = bands[i][2];
            if i >= 1 {
                d -= l1 * l1 * bands[i - 1][2];
            }
            if i >= 2 {
                d -= l2 * l2 * bands[i - 2][2];
            }
            bands[i] = [l2, l1, d];
        }
        Pentadiagonal { rows: bands }
    }

    /// Solve `A x = b` in place (`L D L^T` factors).
    fn solve(&self, x: &mut [f64]) {
        let n = self.rows.len();
        for i in 0..n {
            let [l2, l1, _] = self.rows[i];
            if i >= 1 {
                x[i] -= l1 * x[i - 1];
            }
            if i >= 2 {
                x[i] -= l2 * x[i - 2];
            }
        }
        for i in 0..n {
            x[i] /= self.rows[i][2];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                x[i] -= self.rows[i + 1][1] * x[i + 1];
            }
            if i + 2 < n {
                x[i] -= self.rows[i + 2][0] * x[i + 2];
            }
        }
    }
}

/// Block-diagonal (per channel) preconditioner over the free nodes.
struct Preconditioner {
    width: usize,
    free: std::ops::Range<usize>,
    channels: Vec<Pentadiagonal>,
}

impl Preconditioner {
    fn new<M: HamiltonianModel + ?Sized>(setup: &OmSetup, model: &M, problem: &MppProblem) -> Self {
        let width = 2 * setup.dim;
        let n = setup.dim;
        let n_nodes = setup.grid.n_nodes();
        let dt = setup.grid.dt();
        let free = problem.free_range();
        let x0 = problem.x0();
        // curvature contributed by the drift Jacobian, frozen at x0
        let h = model.hessian(setup.grid.t0(), &x0.q, &x0.p);
        let mut jac_col_sq = vec![0.0; width];
        if let Some(h) = &h {
            for c in 0..width {
                let mut s = 0.0;
                for a in 0..n {
                    // rows of the drift Jacobian: dq' = (H_pq, H_pp), dp' = -(H_qq, H_qp)
                    let (rq, rp) = if c < n {
                        (h.qp[c * n + a], h.qq[a * n + c])
                    } else {
                        (h.pp[a * n + (c - n)], h.qp[a * n + (c - n)])
                    };
                    s += rq * rq + rp * rp;
                }
                jac_col_sq[c] = s;
            }
        }
        let floor = 1.0 / (setup.grid.horizon() * setup.grid.horizon());
        let channels = (0..width)
            .map(|c| {
                let weight = |k: usize| setup.weights[k * width + c];
                let mean_w = (0..n_nodes).map(weight).sum::<f64>() / n_nodes as f64;
                let shift = 2.0 * mean_w * jac_col_sq[c].max(floor);
                let mut bands = vec![[0.0; 3]; free.len()];
                for k in 0..n_nodes {
                    let st = derivative_stencil(k, n_nodes);
                    let wk = 2.0 * weight(k) / (dt * dt);
                    for &(i, ci) in &st {
                        for &(j, cj) in &st {
                            if ci == 0.0 || cj == 0.0 || j > i || i < free.start || j < free.start {
                                continue;
                            }
                            if i >= free.end || j >= free.end {
                                continue;
                            }
                            let (li, lj) = (i - free.start, j - free.start);
                            bands[li][2 - (li - lj)] += wk * ci * cj;
                        }
                    }
                }
                for b in &mut bands {
                    b[2] += shift;
                }
                Pentadiagonal::factor(bands)
            })
            .collect();
        Preconditioner { width, free, channels }
    }

    /// `out = M^-1 g` on free nodes, zero elsewhere.
    fn apply(&self, g: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut col = vec![0.0; self.free.len()];
        for (c, chol) in self.channels.iter().enumerate() {
            for (i, k) in self.free.clone().enumerate() {
                col[i] = g[k * self.width + c];
            }
            chol.solve(&mut col);
            for (i, k) in self.free.clone().enumerate() {
                out[k * self.width + c] = col[i];
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize the discrete action from the problem's initial guess.
pub fn minimize_om<M: HamiltonianModel + ?Sized>(
    model: &M,
    diffusion: &DiffusionSchedule,
    problem: &MppProblem,
) -> Result<MppSolution> {
    let opts = problem.options;
    if !(opts.grad_tol > 0.0) || !(opts.armijo > 0.0 && opts.armijo < 1.0) || !(opts.backtrack > 0.0 && opts.backtrack < 1.0)
    {
        return Err(Error::InvalidParameter("solver tolerances out of range".into()));
    }
    if let SearchDirection::Lbfgs { memory: 0 } = opts.direction {
        return Err(Error::InvalidParameter("L-BFGS memory must be positive".into()));
    }
    let setup = OmSetup::new(model, diffusion, &problem.grid, problem.x0.dim())?;
    if model.hessian(problem.grid.t0(), &problem.x0.q, &problem.x0.p).is_none() {
        return Err(Error::MissingHessian(model.name().to_string()));
    }
    let width = 2 * setup.dim;
    let free = problem.free_range();
    let (lo, hi) = (free.start * width, free.end * width);
    let precond = Preconditioner::new(&setup, model, problem);

    let mut x = problem.init.as_flat().to_vec();
    let mut g = vec![0.0; x.len()];
    let mut f = setup.action_and_gradient(model, &x, &mut g)?;
    let clip = |g: &mut [f64]| {
        g[..lo].iter_mut().for_each(|v| *v = 0.0);
        g[hi..].iter_mut().for_each(|v| *v = 0.0);
    };
    clip(&mut g);
    let mut mg = vec![0.0; x.len()];
    let mut history = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut d = vec![0.0; x.len()];
    let mut x_new = vec![0.0; x.len()];
    let mut g_new = vec![0.0; x.len()];
    let mut iterations = 0;
    let mut step_hint = 1.0;
    let termination = loop {
        precond.apply(&g, &mut mg);
        let grad_norm = dot(&g, &mg).max(0.0).sqrt();
        if grad_norm <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }
        // search direction
        let apply_h0 = |v: &[f64], out: &mut [f64]| {
            if opts.precondition {
                precond.apply(v, out);
            } else {
                out.copy_from_slice(v);
            }
        };
        match opts.direction {
            SearchDirection::Lbfgs { .. } if !pairs.is_empty() => {
                let mut q = g.clone();
                let mut alphas = Vec::with_capacity(pairs.len());
                for (s, y, rho) in pairs.iter().rev() {
                    let a = rho * dot(s, &q);
                    q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                    alphas.push(a);
                }
                apply_h0(&q, &mut d);
                if !opts.precondition {
                    let (s, y, _) = pairs.back().expect("nonempty");
                    let gamma = dot(s, y) / dot(y, y);
                    d.iter_mut().for_each(|v| *v *= gamma);
                }
                for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
                    let b = rho * dot(y, &d);
                    d.iter_mut().zip(s).for_each(|(di, si)| *di += si * (a - b));
                }
                d.iter_mut().for_each(|v| *v = -*v);
            }
            _ => {
                apply_h0(&g, &mut d);
                d.iter_mut().for_each(|v| *v = -*v);
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            pairs.clear();
            apply_h0(&g, &mut d);
            d.iter_mut().for_each(|v| *v = -*v);
            slope = dot(&g, &d);
        }
        // Armijo backtracking
        let mut alpha = match opts.direction {
            SearchDirection::Lbfgs { .. } if !pairs.is_empty() => 1.0,
            SearchDirection::Lbfgs { .. } if opts.precondition => 1.0,
            _ => step_hint,
        };
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            x_new.iter_mut().zip(&x).zip(&d).for_each(|((xn, xi), di)| *xn = xi + alpha * di);
            if let Ok(f_new) = setup.action_and_gradient(model, &x_new, &mut g_new) {
                if f_new <= f + opts.armijo * alpha * slope && f_new < f {
                    accepted = Some(f_new);
                    break;
                }
            }
            alpha *= opts.backtrack;
        }
        let Some(f_new) = accepted else {
            break Termination::LineSearchFailure;
        };
        clip(&mut g_new);
        step_hint = (2.0 * alpha).min(1.0);
        if let SearchDirection::Lbfgs { memory } = opts.direction {
            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                if pairs.len() == memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, 1.0 / sy));
            }
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        history.push(f);
        iterations += 1;
    };
    precond.apply(&g, &mut mg);
    let grad_norm = dot(&g, &mg).max(0.0).sqrt();
    let path = DiscretePath::from_flat(problem.grid, setup.dim, x)?;
    let el_residual = euler_lagrange_residual(&path, model)?;
    Ok(MppSolution {
        path,
        action_history: history,
        grad_norm,
        el_residual,
        iterations,
        converged: termination == Termination::GradientTolerance,
        termination,
    })
}

/// Outcome of checking a path against Hamilton's equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MppReport {
    pub action: f64,
    pub el_residual: f64,
    /// `10 * dt * max(1, sup |phi'|)`.
    pub threshold: f64,
    pub passed: bool,
}

fn residual_threshold(path: &DiscretePath) -> f64 {
    let (w, n_nodes, dt) = (path.node_len(), path.n_nodes(), path.grid().dt());
    let mut d = vec![0.0; w];
    let mut speed: f64 = 1.0;
    for k in 1..n_nodes.saturating_sub(1) {
        node_derivative(path.as_flat(), w, n_nodes, dt, k, &mut d);
        speed = d.iter().fold(speed, |m, v| m.max(v.abs()));
    }
    10.0 * dt * speed
}

/// Check a minimizer: the Euler-Lagrange residual must sit below a threshold
/// proportional to `dt`.
pub fn verify_mpp<M: HamiltonianModel + ?Sized>(solution: &MppSolution, model: &M) -> Result<MppReport> {
    let el_residual = euler_lagrange_residual(&solution.path, model)?;
    let threshold = residual_threshold(&solution.path);
    Ok(MppReport { action: solution.action(), el_residual, threshold, passed: el_residual <= threshold })
}

/// Same check for an arbitrary path, evaluating its action.
pub fn verify_path<M: HamiltonianModel + ?Sized>(
    path: &DiscretePath,
    model: &M,
    diffusion: &DiffusionSchedule,
) -> Result<MppReport> {
    let action = om_functional(path, model, diffusion)?.action;
    let el_residual = euler_lagrange_residual(path, model)?;
    let threshold = residual_threshold(path);
    Ok(MppReport { action, el_residual, threshold, passed: el_residual <= threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::rk4;
    use crate::model::{CoupledOscillators, HarmonicOscillator};

    fn harmonic() -> (HarmonicOscillator, PhaseState) {
        HarmonicOscillator::with_initial(1.0, 1.0, 50.0, 0.0).unwrap()
    }

    fn unit(dim: usize) -> DiffusionSchedule {
        DiffusionSchedule::constant(dim, 1.0, 1.0).unwrap()
    }

    #[test]
    fn pentadiagonal_solve_matches_dense_elimination() {
        let n = 7;
        let bands: Vec<[f64; 3]> = (0..n).map(|i| [0.3 + 0.01 * i as f64, -1.1, 4.0 + i as f64]).collect();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = bands[i][2];
            if i >= 1 {
                dense[i][i - 1] = bands[i][1];
                dense[i - 1][i] = bands[i][1];
            }
            if i >= 2 {
                dense[i][i - 2] = bands[i][0];
                dense[i - 2][i] = bands[i][0];
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let mut x = b.clone();
        Pentadiagonal::factor(bands).solve(&mut x);
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12, "row {i}: {ax} vs {}", b[i]);
        }
    }

    #[test]
    fn recovers_the_flow_from_a_constant_guess() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let sol = minimize_om(&m, &unit(1), &MppProblem::new(x0.clone(), grid)).unwrap();
        assert!(sol.converged, "{:?} after {} iterations", sol.termination, sol.iterations);
        let flow = rk4(&m, &x0, &grid).unwrap();
        assert!(sol.path.sup_distance(&flow).unwrap() <= 1e-3);
        assert!(sol.action() <= 1e-6);
        assert!(sol.action_history.windows(2).all(|w| w[1] < w[0]));
        assert!(verify_mpp(&sol, &m).unwrap().passed);
    }

    #[test]
    fn starting_at_the_flow_is_already_optimal() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 10_000).unwrap();
        let flow = rk4(&m, &x0, &grid).unwrap();
        let problem = MppProblem::new(x0, grid).with_init(flow).unwrap();
        let sol = minimize_om(&m, &unit(1), &problem).unwrap();
        assert!(sol.converged && sol.iterations <= 2, "{} iterations", sol.iterations);
        assert!((sol.action() - sol.action_history[0]).abs() <= 1e-12);
    }

    #[test]
    fn pinned_at_the_flow_endpoint_matches_free() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 500).unwrap();
        let flow = rk4(&m, &x0, &grid).unwrap();
        let free = minimize_om(&m, &unit(1), &MppProblem::new(x0.clone(), grid)).unwrap();
        let pinned = minimize_om(&m, &unit(1), &MppProblem::new(x0, grid).pinned(flow.last()).unwrap()).unwrap();
        assert!(free.converged && pinned.converged);
        assert!(free.path.sup_distance(&pinned.path).unwrap() <= 1e-3);
        assert_eq!(pinned.path.last(), flow.last());
    }

    #[test]
    fn common_sigma_rescaling_keeps_the_minimizer() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 400).unwrap();
        let a = minimize_om(&m, &unit(1), &MppProblem::new(x0.clone(), grid)).unwrap();
        let b = minimize_om(&m, &unit(1).scaled(3.0), &MppProblem::new(x0, grid)).unwrap();
        assert!(a.path.sup_distance(&b.path).unwrap() <= 1e-4);
    }

    #[test]
    fn coupled_minimizer_tracks_the_flow() {
        let m = CoupledOscillators::new(0.01).unwrap();
        let x0 = CoupledOscillators::default_initial();
        let grid = TimeGrid::new(0.0, 10.0, 10_000).unwrap();
        let sol = minimize_om(&m, &unit(2), &MppProblem::new(x0.clone(), grid)).unwrap();
        assert!(sol.converged, "{:?}", sol.termination);
        let flow = rk4(&m, &x0, &grid).unwrap();
        assert!(sol.path.sup_distance(&flow).unwrap() <= 1e-2);
        assert!(verify_mpp(&sol, &m).unwrap().passed);
    }

    #[test]
    fn steepest_descent_also_decreases() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let opts = MppOptions { direction: SearchDirection::SteepestDescent, max_iter: 50, ..MppOptions::default() };
        let sol = minimize_om(&m, &unit(1), &MppProblem::new(x0, grid).with_options(opts)).unwrap();
        assert!(sol.action() < 0.01 * sol.action_history[0]);
        assert!(sol.action_history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn constant_path_fails_verification() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let report = verify_path(&DiscretePath::constant(grid, &x0), &m, &unit(1)).unwrap();
        assert!(!report.passed);
        assert!((report.el_residual - 50.0).abs() < 1e-9);
    }

    #[test]
    fn init_must_start_at_x0() {
        let (_, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let other = DiscretePath::constant(grid, &PhaseState::zeros(1));
        assert!(MppProblem::new(x0, grid).with_init(other).is_err());
    }
}
