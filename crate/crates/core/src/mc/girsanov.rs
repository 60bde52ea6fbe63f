use std::ops::ControlFlow;

use serde::Serialize;

use super::ensemble::EnsembleSpec;
use super::map_runs;
use super::tube::TubeSpec;
use crate::error::{Error, Result};
use crate::integrate::BLOW_UP_THRESHOLD;
use crate::model::{vector_field, HamiltonianModel};
use crate::pathspace::derivative_energy;

/// Log-weights are clamped to `[-LOG_WEIGHT_CLAMP, LOG_WEIGHT_CLAMP]`.
pub const LOG_WEIGHT_CLAMP: f64 = 700.0;

/// How proposal paths are steered towards the reference `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiltKind {
    /// Drift `b(t, y) + u_k` with the open-loop control
    /// `u_k = (phi_{k+1} - phi_k) / dt - b(t_k, phi_k)`; a reference that
    /// already follows the flow gives unit weights.
    DriftControl,
    /// `y = phi + eps * W^sigma`: the proposal ignores the model drift and
    /// translates the noise along the reference.
    PathShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GirsanovEstimate {
    /// Mean of `1{inside} * weight` over all proposal runs.
    pub p_hat: f64,
    pub stderr: f64,
    pub n_runs: usize,
    /// Proposal runs ending inside the tube (unweighted).
    pub hits: usize,
    /// Runs whose log-weight had to be clamped.
    pub clamped: usize,
    /// Kish effective sample size of the weighted hits.
    pub effective_hits: f64,
}

/// Importance-sampled tube probability. The weight of each proposal path is
/// the exact likelihood ratio of the Euler-Maruyama transition densities,
/// `sum_k sum_c [-v dW / (eps sigma) - v^2 dt / (2 eps^2 sigma^2)]` with `v`
/// the proposal drift minus the model drift.
pub fn girsanov_tube_probability<M: HamiltonianModel + ?Sized>(
    spec: &EnsembleSpec<'_, M>,
    tube: &TubeSpec,
    kind: TiltKind,
) -> Result<GirsanovEstimate> {
    spec.validate()?;
    tube.check(spec)?;
    let eps = spec.diffusion.intensity();
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("importance sampling needs positive noise intensity".into()));
    }
    spec.diffusion.check_bounds(spec.grid.t0(), spec.grid.t1())?;
    if !derivative_energy(&tube.reference).is_finite() {
        return Err(Error::InvalidParameter("reference path has infinite derivative energy".into()));
    }
    let n = spec.model.dim();
    let w = 2 * n;
    let grid = spec.grid;
    let dt = grid.dt();
    let phi = &tube.reference;
    // per-step reference velocity and, for the drift control, the open-loop correction
    let mut steer = vec![0.0; grid.n_steps() * w];
    let mut f = vec![0.0; w];
    for k in 0..grid.n_steps() {
        let row = &mut steer[k * w..(k + 1) * w];
        let (a, b) = (phi.node(k), phi.node(k + 1));
        for c in 0..w {
            row[c] = (b[c] - a[c]) / dt;
        }
        if kind == TiltKind::DriftControl {
            vector_field(spec.model, grid.time(k), a, &mut f);
            row.iter_mut().zip(&f).for_each(|(r, fc)| *r -= fc);
        }
    }

    let outcomes = map_runs(spec.n_runs, |run| -> Result<(f64, bool, bool)> {
        let mut stream = spec.stream(run);
        let mut tracker = tube.tracker();
        let mut x = spec.x0.to_flat();
        let (mut b, mut sigma, mut dw, mut v) = (vec![0.0; w], vec![0.0; w], vec![0.0; w], vec![0.0; w]);
        let mut log_w = 0.0;
        if tracker.visit(0, &x).is_break() {
            return Ok((0.0, false, false));
        }
        for k in 0..grid.n_steps() {
            let t = grid.time(k);
            vector_field(spec.model, t, &x, &mut b);
            spec.diffusion.eval(t, &mut sigma);
            stream.increments(k as u64, dt, &mut dw);
            let s = &steer[k * w..(k + 1) * w];
            for c in 0..w {
                v[c] = match kind {
                    TiltKind::DriftControl => s[c],
                    TiltKind::PathShift => s[c] - b[c],
                };
                let es = eps * sigma[c];
                log_w += -v[c] * dw[c] / es - 0.5 * v[c] * v[c] * dt / (es * es);
                x[c] += (b[c] + v[c]) * dt + es * dw[c];
            }
            if x.iter().any(|u| !u.is_finite() || u.abs() > BLOW_UP_THRESHOLD) {
                return Ok((0.0, false, false));
            }
            if let ControlFlow::Break(()) = tracker.visit(k + 1, &x) {
                return Ok((0.0, false, false));
            }
        }
        if !tracker.inside(true) {
            return Ok((0.0, false, false));
        }
        let clamped = log_w.abs() > LOG_WEIGHT_CLAMP;
        Ok((log_w.clamp(-LOG_WEIGHT_CLAMP, LOG_WEIGHT_CLAMP).exp(), true, clamped))
    });

    let nf = spec.n_runs as f64;
    let (mut sum, mut sum_sq, mut hits, mut clamped) = (0.0, 0.0, 0, 0);
    for o in outcomes {
        let (weight, hit, clip) = o?;
        sum += weight;
        sum_sq += weight * weight;
        hits += hit as usize;
        clamped += clip as usize;
    }
    let p_hat = sum / nf;
    let var = if spec.n_runs > 1 { ((sum_sq - nf * p_hat * p_hat) / (nf - 1.0)).max(0.0) } else { 0.0 };
    let effective_hits = if sum_sq > 0.0 { sum * sum / sum_sq } else { 0.0 };
    Ok(GirsanovEstimate { p_hat, stderr: (var / nf).sqrt(), n_runs: spec.n_runs, hits, clamped, effective_hits })
}
