use std::ops::ControlFlow;

use serde::Serialize;

use super::ensemble::EnsembleSpec;
use super::fit::binomial_stderr;
use super::map_runs;
use crate::error::{Error, Result};
use crate::integrate::euler_maruyama_with;
use crate::model::HamiltonianModel;
use crate::path::DiscretePath;
use crate::pathspace::{holder_norm_nodes, HolderConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TubeNorm {
    Sup,
    Holder(HolderConfig),
}

/// The set of paths within `radius` of `reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeSpec {
    pub reference: DiscretePath,
    pub radius: f64,
    pub norm: TubeNorm,
}

impl TubeSpec {
    pub fn new(reference: DiscretePath, radius: f64, norm: TubeNorm) -> Result<Self> {
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::InvalidParameter(format!("tube radius must be nonnegative, got {radius}")));
        }
        Ok(TubeSpec { reference, radius, norm })
    }

    pub fn sup(reference: DiscretePath, radius: f64) -> Result<Self> {
        Self::new(reference, radius, TubeNorm::Sup)
    }

    pub(crate) fn check<M: HamiltonianModel + ?Sized>(&self, spec: &EnsembleSpec<'_, M>) -> Result<()> {
        if self.reference.grid() != &spec.grid || self.reference.dim() != spec.model.dim() {
            return Err(Error::InvalidParameter("tube reference must share the ensemble grid and dimension".into()));
        }
        Ok(())
    }

    /// Tracks one run against the tube, node by node.
    pub(crate) fn tracker(&self) -> TubeTracker<'_> {
        TubeTracker { tube: self, sup: 0.0, diffs: Vec::new() }
    }
}

pub(crate) struct TubeTracker<'a> {
    tube: &'a TubeSpec,
    sup: f64,
    diffs: Vec<f64>,
}

impl TubeTracker<'_> {
    /// Feed node `k`; `Break` once the path has certainly left the tube.
    pub(crate) fn visit(&mut self, k: usize, x: &[f64]) -> ControlFlow<()> {
        let reference = self.tube.reference.node(k);
        for (a, b) in x.iter().zip(reference) {
            let d = a - b;
            self.sup = self.sup.max(d.abs());
            if let TubeNorm::Holder(_) = self.tube.norm {
                self.diffs.push(d);
            }
        }
        // the Holder norm dominates the sup norm, so both can stop early
        if self.sup > self.tube.radius {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }

    pub(crate) fn inside(&self, completed: bool) -> bool {
        if !completed || self.sup > self.tube.radius {
            return false;
        }
        match self.tube.norm {
            TubeNorm::Sup => true,
            TubeNorm::Holder(cfg) => {
                let r = &self.tube.reference;
                holder_norm_nodes(&self.diffs, r.node_len(), r.grid().dt(), cfg.alpha(), cfg.pair_budget()).value
                    <= self.tube.radius
            }
        }
    }
}

/// Norm distance between two paths on the same grid.
pub fn tube_distance(path: &DiscretePath, reference: &DiscretePath, norm: &TubeNorm) -> Result<f64> {
    let diff = path.difference(reference)?;
    Ok(match norm {
        TubeNorm::Sup => crate::pathspace::sup_norm(&diff),
        TubeNorm::Holder(cfg) => crate::pathspace::holder_norm(&diff, cfg).value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TubeEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub hits: usize,
    pub n_runs: usize,
    /// Runs that blew up; they count as misses.
    pub blown_up: usize,
}

/// Fraction of runs staying inside the tube for the whole grid.
pub fn tube_probability<M: HamiltonianModel + ?Sized>(spec: &EnsembleSpec<'_, M>, tube: &TubeSpec) -> Result<TubeEstimate> {
    spec.validate()?;
    tube.check(spec)?;
    let last = spec.grid.n_steps();
    let outcomes = map_runs(spec.n_runs, |run| {
        let mut tracker = tube.tracker();
        let mut stream = spec.stream(run);
        let reached = euler_maruyama_with(spec.model, &spec.diffusion, &spec.x0, &spec.grid, &mut stream, |k, _, x| {
            tracker.visit(k, x)
        });
        match reached {
            Ok(k) => Ok((tracker.inside(k == last), false)),
            Err(Error::BlowUp { .. }) => Ok((false, true)),
            Err(e) => Err(e),
        }
    });
    let mut hits = 0;
    let mut blown_up = 0;
    for o in outcomes {
        let (hit, blew) = o?;
        hits += hit as usize;
        blown_up += blew as usize;
    }
    let p_hat = hits as f64 / spec.n_runs as f64;
    Ok(TubeEstimate { p_hat, stderr: binomial_stderr(p_hat, spec.n_runs), hits, n_runs: spec.n_runs, blown_up })
}
