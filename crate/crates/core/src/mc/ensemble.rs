use std::ops::ControlFlow;

use serde::Serialize;

use super::map_runs;
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::integrate::euler_maruyama_with;
use crate::model::HamiltonianModel;
use crate::noise::NoiseStream;
use crate::path::DiscretePath;
use crate::state::PhaseState;

/// What to record at each sample time.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    Energy,
    /// Every coordinate, as columns `q_1..q_n, p_1..p_n`.
    State,
    /// `|x(t_k) - reference_k|_inf` against a path on the same grid.
    Distance(DiscretePath),
}

/// An ensemble of independent Euler-Maruyama runs.
pub struct EnsembleSpec<'a, M: ?Sized> {
    pub model: &'a M,
    pub diffusion: DiffusionSchedule,
    pub x0: PhaseState,
    pub grid: TimeGrid,
    pub n_runs: usize,
    pub master_seed: u64,
    /// Grid node indices where observables are recorded, increasing.
    pub sample_nodes: Vec<usize>,
    pub observables: Vec<Observable>,
}

impl<M: ?Sized> Clone for EnsembleSpec<'_, M> {
    fn clone(&self) -> Self {
        EnsembleSpec {
            model: self.model,
            diffusion: self.diffusion.clone(),
            x0: self.x0.clone(),
            grid: self.grid,
            n_runs: self.n_runs,
            master_seed: self.master_seed,
            sample_nodes: self.sample_nodes.clone(),
            observables: self.observables.clone(),
        }
    }
}

impl<'a, M: HamiltonianModel + ?Sized> EnsembleSpec<'a, M> {
    /// Energy recorded at every node.
    pub fn new(
        model: &'a M,
        diffusion: DiffusionSchedule,
        x0: PhaseState,
        grid: TimeGrid,
        n_runs: usize,
        master_seed: u64,
    ) -> Self {
        let sample_nodes = (0..grid.n_nodes()).collect();
        EnsembleSpec { model, diffusion, x0, grid, n_runs, master_seed, sample_nodes, observables: vec![Observable::Energy] }
    }

    /// Record every `stride`-th node, starting at the first.
    pub fn sample_every(mut self, stride: usize) -> Self {
        self.sample_nodes = (0..self.grid.n_nodes()).step_by(stride.max(1)).collect();
        self
    }

    pub fn sample_nodes(mut self, nodes: Vec<usize>) -> Self {
        self.sample_nodes = nodes;
        self
    }

    pub fn observables(mut self, observables: Vec<Observable>) -> Self {
        self.observables = observables;
        self
    }

    pub fn with_intensity(&self, intensity: f64) -> Self {
        let mut s = self.clone();
        s.diffusion = s.diffusion.with_intensity(intensity);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.dim();
        if self.x0.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.x0.dim() });
        }
        if self.diffusion.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.diffusion.dim() });
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidParameter("an ensemble needs at least one run".into()));
        }
        if self.sample_nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("sample nodes must be strictly increasing".into()));
        }
        if self.sample_nodes.last().is_some_and(|&k| k >= self.grid.n_nodes()) {
            return Err(Error::InvalidParameter("sample node beyond the grid".into()));
        }
        for obs in &self.observables {
            if let Observable::Distance(reference) = obs {
                if reference.grid() != &self.grid || reference.dim() != n {
                    return Err(Error::InvalidParameter("distance reference must share the ensemble grid".into()));
                }
            }
        }
        Ok(())
    }

    pub fn columns(&self) -> Vec<String> {
        let n = self.model.dim();
        let mut cols = Vec::new();
        for obs in &self.observables {
            match obs {
                Observable::Energy => cols.push("energy".to_string()),
                Observable::State => {
                    cols.extend((1..=n).map(|i| format!("q_{i}")));
                    cols.extend((1..=n).map(|i| format!("p_{i}")));
                }
                Observable::Distance(_) => cols.push("distance".to_string()),
            }
        }
        cols
    }

    pub(crate) fn stream(&self, run: u64) -> NoiseStream {
        NoiseStream::new(self.master_seed, run, 2 * self.model.dim())
    }
}

/// Observables of one run, row-major over `(sample, column)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedRun {
    pub run: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSummary {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    pub var: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub columns: Vec<String>,
    pub sample_times: Vec<f64>,
    pub runs: Vec<RunRecord>,
    pub excluded: Vec<ExcludedRun>,
    pub summaries: Vec<ObservableSummary>,
}

impl EnsembleResult {
    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Every recorded value of a column, run by run.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column_index(name)?;
        let w = self.columns.len();
        Some(self.runs.iter().flat_map(|r| r.values.iter().skip(c).step_by(w).copied()).collect())
    }
}

fn record<M: HamiltonianModel + ?Sized>(spec: &EnsembleSpec<'_, M>, k: usize, t: f64, x: &[f64], out: &mut Vec<f64>) {
    let n = spec.model.dim();
    for obs in &spec.observables {
        match obs {
            Observable::Energy => out.push(spec.model.energy(t, &x[..n], &x[n..])),
            Observable::State => out.extend_from_slice(x),
            Observable::Distance(reference) => {
                let d = x.iter().zip(reference.node(k)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                out.push(d);
            }
        }
    }
}

/// Simulate every run and record the observables. Runs that blow up are
/// excluded and listed.
pub fn run_ensemble<M: HamiltonianModel + ?Sized>(spec: &EnsembleSpec<'_, M>) -> Result<EnsembleResult> {
    spec.validate()?;
    let columns = spec.columns();
    let outcomes = map_runs(spec.n_runs, |run| {
        let mut values = Vec::with_capacity(spec.sample_nodes.len() * columns.len());
        let mut next = 0;
        let mut stream = spec.stream(run);
        let last = spec.sample_nodes.last().copied().unwrap_or(0);
        euler_maruyama_with(spec.model, &spec.diffusion, &spec.x0, &spec.grid, &mut stream, |k, t, x| {
            if next < spec.sample_nodes.len() && spec.sample_nodes[next] == k {
                record(spec, k, t, x, &mut values);
                next += 1;
            }
            if k >= last {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .map(|_| RunRecord { run, values })
    });
    let mut runs = Vec::with_capacity(spec.n_runs);
    let mut excluded = Vec::new();
    for (run, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => runs.push(r),
            Err(e @ Error::BlowUp { .. }) => excluded.push(ExcludedRun { run: run as u64, reason: e.to_string() }),
            Err(e) => return Err(e),
        }
    }
    let w = columns.len();
    let summaries = columns
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let (mut count, mut sum, mut min, mut max) = (0usize, 0.0, f64::INFINITY, f64::NEG_INFINITY);
            for r in &runs {
                for v in r.values.iter().skip(c).step_by(w) {
                    count += 1;
                    sum += v;
                    min = min.min(*v);
                    max = max.max(*v);
                }
            }
            let mean = sum / count as f64;
            let ss: f64 = runs.iter().flat_map(|r| r.values.iter().skip(c).step_by(w)).map(|v| (v - mean).powi(2)).sum();
            let var = if count > 1 { ss / (count - 1) as f64 } else { 0.0 };
            ObservableSummary { name: name.clone(), count, mean, var, min, max }
        })
        .collect();
    Ok(EnsembleResult {
        columns,
        sample_times: spec.sample_nodes.iter().map(|&k| spec.grid.time(k)).collect(),
        runs,
        excluded,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::euler_maruyama;
    use crate::model::HarmonicOscillator;

    fn harmonic() -> (HarmonicOscillator, PhaseState) {
        HarmonicOscillator::with_initial(1.0, 1.0, 50.0, 0.0).unwrap()
    }

    #[test]
    fn noise_free_runs_are_identical() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 2.0, 2000).unwrap();
        let d = DiffusionSchedule::periodic_oscillator().with_intensity(0.0);
        let spec = EnsembleSpec::new(&m, d, x0, grid, 8, 1).sample_every(100).observables(vec![Observable::State]);
        let res = run_ensemble(&spec).unwrap();
        assert!(res.runs.iter().all(|r| r.values == res.runs[0].values));
        assert!(res.summaries.iter().all(|s| s.count == 8 * 21));
    }

    #[test]
    fn records_match_single_path_simulation() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let d = DiffusionSchedule::periodic_oscillator().with_intensity(0.3);
        let spec = EnsembleSpec::new(&m, d.clone(), x0.clone(), grid, 3, 42)
            .sample_nodes(vec![0, 50, 100])
            .observables(vec![Observable::State, Observable::Energy]);
        let res = run_ensemble(&spec).unwrap();
        assert_eq!(res.columns, ["q_1", "p_1", "energy"]);
        assert_eq!(res.sample_times, [0.0, 0.5, 1.0]);
        let path = euler_maruyama(&m, &d, &x0, &grid, &mut NoiseStream::new(42, 2, 2)).unwrap();
        let rec = &res.runs[2].values;
        assert_eq!(&rec[6..8], path.node(100));
        assert_eq!(rec[8], m.energy(1.0, path.q(100), path.p(100)));
    }

    #[test]
    fn distance_to_itself_is_zero_without_noise() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let d = DiffusionSchedule::constant(1, 1.0, 0.0).unwrap();
        let reference = euler_maruyama(&m, &d, &x0, &grid, &mut NoiseStream::new(0, 0, 2)).unwrap();
        let spec = EnsembleSpec::new(&m, d, x0, grid, 2, 0).observables(vec![Observable::Distance(reference)]);
        let res = run_ensemble(&spec).unwrap();
        assert_eq!(res.summaries[0].max, 0.0);
    }

    #[test]
    fn blow_ups_are_excluded_and_counted() {
        struct Cubic;
        impl HamiltonianModel for Cubic {
            fn name(&self) -> &str {
                "cubic"
            }
            fn dim(&self) -> usize {
                1
            }
            fn energy(&self, _: f64, q: &[f64], p: &[f64]) -> f64 {
                0.5 * p[0] * p[0] - q[0].powi(4)
            }
            fn grad_q(&self, _: f64, q: &[f64], _: &[f64], out: &mut [f64]) {
                out[0] = -4.0 * q[0].powi(3);
            }
            fn grad_p(&self, _: f64, _: &[f64], p: &[f64], out: &mut [f64]) {
                out[0] = p[0];
            }
        }
        let grid = TimeGrid::new(0.0, 5.0, 5000).unwrap();
        let d = DiffusionSchedule::constant(1, 1.0, 2.0).unwrap();
        let x0 = PhaseState::new(vec![0.0], vec![0.0]).unwrap();
        let spec = EnsembleSpec::new(&Cubic, d, x0, grid, 20, 3).sample_every(1000);
        let res = run_ensemble(&spec).unwrap();
        assert!(!res.excluded.is_empty());
        assert_eq!(res.runs.len() + res.excluded.len(), 20);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let (m, x0) = harmonic();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let d = DiffusionSchedule::constant(1, 1.0, 0.1).unwrap();
        assert!(run_ensemble(&EnsembleSpec::new(&m, d.clone(), x0.clone(), grid, 0, 0)).is_err());
        let bad = EnsembleSpec::new(&m, d, x0, grid, 1, 0).sample_nodes(vec![3, 2]);
        assert!(run_ensemble(&bad).is_err());
    }
}
