//! Time stepping: Euler-Maruyama for the noisy system, RK4 and Stormer-Verlet
//! for the deterministic flow.

use std::ops::ControlFlow;

use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{vector_field, HamiltonianModel};
use crate::noise::NoiseStream;
use crate::path::DiscretePath;
use crate::state::PhaseState;

/// Runs abort once `|state|_inf` exceeds this.
pub const BLOW_UP_THRESHOLD: f64 = 1e150;

fn check_dims<M: HamiltonianModel + ?Sized>(model: &M, x0: &PhaseState) -> Result<()> {
    if model.dim() != x0.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: x0.dim() });
    }
    Ok(())
}

#[inline]
fn guard(step: usize, x: &[f64]) -> Result<()> {
    let mut mag: f64 = 0.0;
    for v in x {
        if !v.is_finite() {
            return Err(Error::BlowUp { step, magnitude: f64::INFINITY });
        }
        mag = mag.max(v.abs());
    }
    if mag > BLOW_UP_THRESHOLD {
        return Err(Error::BlowUp { step, magnitude: mag });
    }
    Ok(())
}

/// Euler-Maruyama with diffusion evaluated at the left endpoint:
///
/// `x_{k+1} = x_k + f(t_k, x_k) dt + eps * sigma(t_k) dW_k`.
///
/// `observe(k, t_k, x_k)` sees every node including the initial one; returning
/// `ControlFlow::Break` stops the run early. Returns the index of the last
/// node visited.
pub fn euler_maruyama_with<M, F>(
    model: &M,
    diffusion: &DiffusionSchedule,
    x0: &PhaseState,
    grid: &TimeGrid,
    stream: &mut NoiseStream,
    mut observe: F,
) -> Result<usize>
where
    M: HamiltonianModel + ?Sized,
    F: FnMut(usize, f64, &[f64]) -> ControlFlow<()>,
{
    check_dims(model, x0)?;
    let n = model.dim();
    if diffusion.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: diffusion.dim() });
    }
    if stream.channels() != 2 * n {
        return Err(Error::DimensionMismatch { expected: 2 * n, found: stream.channels() });
    }
    let dt = grid.dt();
    let eps = diffusion.intensity();
    let mut x = x0.to_flat();
    let mut f = vec![0.0; 2 * n];
    let mut sigma = vec![0.0; 2 * n];
    let mut dw = vec![0.0; 2 * n];
    if observe(0, grid.t0(), &x).is_break() {
        return Ok(0);
    }
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        vector_field(model, t, &x, &mut f);
        if eps != 0.0 {
            diffusion.eval(t, &mut sigma);
            stream.increments(k as u64, dt, &mut dw);
            for i in 0..2 * n {
                x[i] += f[i] * dt + eps * sigma[i] * dw[i];
            }
        } else {
            for i in 0..2 * n {
                x[i] += f[i] * dt;
            }
        }
        guard(k + 1, &x)?;
        if observe(k + 1, grid.time(k + 1), &x).is_break() {
            return Ok(k + 1);
        }
    }
    Ok(grid.n_steps())
}

/// Full Euler-Maruyama path.
pub fn euler_maruyama<M: HamiltonianModel + ?Sized>(
    model: &M,
    diffusion: &DiffusionSchedule,
    x0: &PhaseState,
    grid: &TimeGrid,
    stream: &mut NoiseStream,
) -> Result<DiscretePath> {
    let mut data = Vec::with_capacity(grid.n_nodes() * 2 * x0.dim());
    euler_maruyama_with(model, diffusion, x0, grid, stream, |_, _, x| {
        data.extend_from_slice(x);
        ControlFlow::Continue(())
    })?;
    DiscretePath::from_flat(*grid, x0.dim(), data)
}

/// Classical fourth-order Runge-Kutta on Hamilton's equations.
pub fn rk4<M: HamiltonianModel + ?Sized>(model: &M, x0: &PhaseState, grid: &TimeGrid) -> Result<DiscretePath> {
    check_dims(model, x0)?;
    let w = 2 * model.dim();
    let dt = grid.dt();
    let mut data = Vec::with_capacity(grid.n_nodes() * w);
    let mut x = x0.to_flat();
    data.extend_from_slice(&x);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; w], vec![0.0; w], vec![0.0; w], vec![0.0; w]);
    let mut tmp = vec![0.0; w];
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        vector_field(model, t, &x, &mut k1);
        for i in 0..w {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        vector_field(model, t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..w {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        vector_field(model, t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..w {
            tmp[i] = x[i] + dt * k3[i];
        }
        vector_field(model, t + dt, &tmp, &mut k4);
        for i in 0..w {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        guard(k + 1, &x)?;
        data.extend_from_slice(&x);
    }
    DiscretePath::from_flat(*grid, model.dim(), data)
}

/// Kick-drift-kick leapfrog for separable `H = T(p) + V(t, q)`.
pub fn stormer_verlet<M: HamiltonianModel + ?Sized>(
    model: &M,
    x0: &PhaseState,
    grid: &TimeGrid,
) -> Result<DiscretePath> {
    check_dims(model, x0)?;
    if !model.is_separable() {
        return Err(Error::UnsupportedStructure(format!(
            "Stormer-Verlet needs a separable Hamiltonian; `{}` is not",
            model.name()
        )));
    }
    let n = model.dim();
    let dt = grid.dt();
    let mut data = Vec::with_capacity(grid.n_nodes() * 2 * n);
    let mut q = x0.q.clone();
    let mut p = x0.p.clone();
    data.extend_from_slice(&q);
    data.extend_from_slice(&p);
    let mut g = vec![0.0; n];
    model.grad_q(grid.t0(), &q, &p, &mut g);
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        for i in 0..n {
            p[i] -= 0.5 * dt * g[i];
        }
        model.grad_p(t + 0.5 * dt, &q, &p, &mut g);
        for i in 0..n {
            q[i] += dt * g[i];
        }
        model.grad_q(grid.time(k + 1), &q, &p, &mut g);
        for i in 0..n {
            p[i] -= 0.5 * dt * g[i];
        }
        let start = data.len();
        data.extend_from_slice(&q);
        data.extend_from_slice(&p);
        guard(k + 1, &data[start..])?;
    }
    DiscretePath::from_flat(*grid, n, data)
}
