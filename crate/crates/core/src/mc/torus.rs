use std::ops::ControlFlow;

use serde::Serialize;

use super::fit::{binomial_stderr, ScalingFit, ScalingPoint};
use super::map_runs;
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::integrate::euler_maruyama_with;
use crate::model::HamiltonianModel;
use crate::noise::NoiseStream;
use crate::state::PhaseState;

/// The unperturbed torus through `x0` and how far the actions may stray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusSpec {
    pub delta: f64,
    /// Use `delta * eps2` as the stay radius.
    pub scale_with_noise: bool,
}

impl TorusSpec {
    pub fn radius(&self, eps2: f64) -> f64 {
        if self.scale_with_noise {
            self.delta * eps2
        } else {
            self.delta
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusPoint {
    pub eps1: f64,
    pub eps2: f64,
    pub ratio_sq: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub hits: usize,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusScan {
    pub points: Vec<TorusPoint>,
    /// `param = eps1 / eps2`, `x = (eps1 / eps2)^2`, `y = ln p_hat`.
    pub scaling: ScalingFit,
    /// Whether the stay probability never rises by more than two combined
    /// standard errors as the ratio grows.
    pub monotone: bool,
}

fn action_gap<M: HamiltonianModel + ?Sized>(model: &M, t: f64, x: &[f64], reference: &[f64]) -> f64 {
    let n = model.dim();
    let actions = model.actions(t, &x[..n], &x[n..]).expect("checked before simulating");
    actions.iter().zip(reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

fn reference_actions<M: HamiltonianModel + ?Sized>(model: &M, t0: f64, x0: &PhaseState) -> Result<Vec<f64>> {
    model
        .actions(t0, &x0.q, &x0.p)
        .ok_or_else(|| Error::UnsupportedStructure(format!("model `{}` has no action variables", model.name())))
}

/// Probability that the actions stay within the torus radius of their
/// initial values for the whole horizon, for each `(eps1, eps2)` pair. The
/// model is rebuilt for each `eps1` by `make_model`; the diffusion takes
/// `eps2` as its intensity.
#[allow(clippy::too_many_arguments)]
pub fn torus_deviation<M, F>(
    make_model: F,
    diffusion: &DiffusionSchedule,
    x0: &PhaseState,
    grid: &TimeGrid,
    pairs: &[(f64, f64)],
    torus: &TorusSpec,
    n_runs: usize,
    seed: u64,
) -> Result<TorusScan>
where
    M: HamiltonianModel,
    F: Fn(f64) -> Result<M>,
{
    if n_runs == 0 || pairs.is_empty() {
        return Err(Error::InvalidParameter("torus scan needs runs and at least one (eps1, eps2) pair".into()));
    }
    if pairs.iter().any(|&(e1, e2)| !(e2 > 0.0) || !e1.is_finite()) {
        return Err(Error::InvalidParameter("noise intensities must be positive and eps1 finite".into()));
    }
    let mut points = Vec::with_capacity(pairs.len());
    for &(eps1, eps2) in pairs {
        let model = make_model(eps1)?;
        let reference = reference_actions(&model, grid.t0(), x0)?;
        let d = diffusion.clone().with_intensity(eps2);
        let radius = torus.radius(eps2);
        let last = grid.n_steps();
        let outcomes = map_runs(n_runs, |run| {
            let mut stream = NoiseStream::new(seed, run, 2 * model.dim());
            let reached = euler_maruyama_with(&model, &d, x0, grid, &mut stream, |_, t, x| {
                if action_gap(&model, t, x, &reference) > radius {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            });
            match reached {
                Ok(k) => Ok(k == last),
                Err(Error::BlowUp { .. }) => Ok(false),
                Err(e) => Err(e),
            }
        });
        let mut hits = 0;
        for o in outcomes {
            hits += o? as usize;
        }
        let p_hat = hits as f64 / n_runs as f64;
        let ratio = eps1 / eps2;
        points.push(TorusPoint {
            eps1,
            eps2,
            ratio_sq: ratio * ratio,
            p_hat,
            stderr: binomial_stderr(p_hat, n_runs),
            hits,
            n_runs,
        });
    }
    let mut ordered = points.clone();
    ordered.sort_by(|a, b| a.ratio_sq.total_cmp(&b.ratio_sq));
    let monotone = ordered
        .windows(2)
        .all(|w| w[1].p_hat <= w[0].p_hat + 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt());
    let scaling = ScalingFit::from_points(
        points
            .iter()
            .map(|p| ScalingPoint {
                param: p.eps1 / p.eps2,
                x: p.ratio_sq,
                p_hat: p.p_hat,
                stderr: p.stderr,
                y: if p.p_hat > 0.0 { p.p_hat.ln() } else { f64::NEG_INFINITY },
                n_runs: p.n_runs,
            })
            .collect(),
    );
    Ok(TorusScan { points, scaling, monotone })
}

/// Mean over runs of `sup_t |I(t) - I(0)|_inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationStat {
    pub mean: f64,
    pub stderr: f64,
    pub max: f64,
    pub n_runs: usize,
}

pub fn action_deviation<M: HamiltonianModel + ?Sized>(
    model: &M,
    diffusion: &DiffusionSchedule,
    x0: &PhaseState,
    grid: &TimeGrid,
    n_runs: usize,
    seed: u64,
) -> Result<DeviationStat> {
    if n_runs == 0 {
        return Err(Error::InvalidParameter("deviation statistic needs at least one run".into()));
    }
    let reference = reference_actions(model, grid.t0(), x0)?;
    let sups = map_runs(n_runs, |run| {
        let mut stream = NoiseStream::new(seed, run, 2 * model.dim());
        let mut worst: f64 = 0.0;
        euler_maruyama_with(model, diffusion, x0, grid, &mut stream, |_, t, x| {
            worst = worst.max(action_gap(model, t, x, &reference));
            ControlFlow::Continue(())
        })
        .map(|_| worst)
    });
    let mut values = Vec::with_capacity(n_runs);
    for s in sups {
        values.push(s?);
    }
    let n = n_runs as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if n_runs > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let max = values.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(DeviationStat { mean, stderr: (var / n).sqrt(), max, n_runs })
}
