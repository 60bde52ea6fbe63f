//! One function per subcommand, each turning a scenario into a result bundle.

use std::path::Path;

use serde_json::{json, Map, Value};
use stoch_ham::integrate::{euler_maruyama, rk4, stormer_verlet};
use stoch_ham::mc::{
    action_deviation, hamiltonian_density, ldp_scan, run_ensemble, small_ball_exponent, torus_deviation, BinRule,
    Binning, EnsembleResult, EnsembleSpec, LdpEstimator, Observable, ScalingFit, TiltKind, TorusSpec, TubeNorm, TubeSpec,
};
use stoch_ham::model::gradient_selfcheck;
use stoch_ham::mpp::{minimize_om, verify_mpp, MppOptions, MppProblem, SearchDirection};
use stoch_ham::pathspace::{derivative_energy, euler_lagrange_residual, om_functional, rate_function, HolderConfig};
use stoch_ham::{DiscretePath, HamiltonianModel, NoiseStream, PhaseState, TimeGrid};

use crate::config::{
    BinsConfig, DensityConfig, DeterministicIntegrator, DirectionKind, EndpointKind, EstimatorKind, Experiment,
    InitKind, LdpScanConfig, MppConfig, NormKind, ObservableKind, OmConfig, PathSource, ReferenceKind, Resolved,
    Scenario, SimulateConfig, SmallBallConfig, TorusConfig,
};
use crate::error::{CliError, CliResult};
use crate::output::{Bundle, Cell, Metadata, Table};
use crate::svg::{Figure, Panel, Series};

/// Everything a command needs besides its experiment block.
pub struct Context<'a> {
    pub scenario: &'a Scenario,
    pub config_text: &'a str,
    /// Directory of the scenario file, for resolving relative paths in it.
    pub base_dir: &'a Path,
    pub seed: u64,
    pub bundle: Bundle,
}

type Summary = Map<String, Value>;

fn summary(value: Value) -> Summary {
    match value {
        Value::Object(m) => m,
        _ => unreachable!("summaries are objects"),
    }
}

/// Runs the scenario's experiment and writes its bundle; returns the bundle
/// directory. A bundle is written even when the result is a numerical
/// failure, which is then returned as the error.
pub fn execute(ctx: Context<'_>) -> CliResult<std::path::PathBuf> {
    let Context { scenario, config_text, base_dir, seed, mut bundle } = ctx;
    let experiment = scenario.experiment();
    let (results, failure) = match experiment {
        Experiment::Simulate(c) => (simulate(scenario, seed, c, &mut bundle)?, None),
        Experiment::Mpp(c) => mpp(scenario, c, &mut bundle)?,
        Experiment::Om(c) => (om(scenario, seed, base_dir, c, &mut bundle)?, None),
        Experiment::Density(c) => (density(scenario, seed, c, &mut bundle)?, None),
        Experiment::LdpScan(c) => (ldp(scenario, seed, c, &mut bundle)?, None),
        Experiment::SmallBall(c) => (smallball(seed, c, &mut bundle)?, None),
        Experiment::Torus(c) => (torus(scenario, seed, c, &mut bundle)?, None),
    };
    let meta = Metadata::new(experiment.name(), seed, config_text);
    let dir = bundle.finish(&meta, results)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(dir),
    }
}

fn deterministic_path(
    model: &dyn HamiltonianModel,
    x0: &PhaseState,
    grid: &TimeGrid,
    integrator: DeterministicIntegrator,
) -> CliResult<Option<DiscretePath>> {
    Ok(match integrator {
        DeterministicIntegrator::Rk4 => Some(rk4(model, x0, grid)?),
        DeterministicIntegrator::StormerVerlet => Some(stormer_verlet(model, x0, grid)?),
        DeterministicIntegrator::None => None,
    })
}

fn phase_points(path: &DiscretePath, a: usize, b: usize) -> Vec<(f64, f64)> {
    path.nodes().map(|x| (x[a], x[b])).collect()
}

fn energy_points(model: &dyn HamiltonianModel, path: &DiscretePath) -> Vec<(f64, f64)> {
    (0..path.n_nodes()).map(|k| (path.grid().time(k), model.energy(path.grid().time(k), path.q(k), path.p(k)))).collect()
}

/// Phase-plane panels `(q_i, p_i)` for the first three degrees of freedom,
/// the `(q_1, q_2)` projection when there are two or more, and the energy.
fn trajectory_figure(model: &dyn HamiltonianModel, curves: &[(&str, &DiscretePath)]) -> Figure {
    let n = model.dim();
    let mut panels = Vec::new();
    for i in 0..n.min(3) {
        let mut panel = Panel::new(&format!("phase plane, degree {}", i + 1), &format!("q_{}", i + 1), &format!("p_{}", i + 1));
        for (label, path) in curves {
            panel = panel.with(Series::line(label, phase_points(path, i, n + i)));
        }
        panels.push(panel);
    }
    if n >= 2 {
        let mut panel = Panel::new("projection", "q_1", "q_2");
        for (label, path) in curves {
            panel = panel.with(Series::line(label, phase_points(path, 0, 1)));
        }
        panels.push(panel);
    }
    let mut energy = Panel::new("energy", "t", "H");
    for (label, path) in curves {
        energy = energy.with(Series::line(label, energy_points(model, path)));
    }
    panels.push(energy);
    let columns = if panels.len() > 2 { 2 } else { panels.len() };
    Figure::grid(panels, columns)
}

fn ensemble_table(result: &EnsembleResult) -> Table {
    let mut table = Table::new(["run", "t", "observable", "value"]);
    let w = result.columns.len();
    for record in &result.runs {
        for (s, t) in result.sample_times.iter().enumerate() {
            for (c, name) in result.columns.iter().enumerate() {
                table.push(vec![record.run.into(), Cell::Float(*t), name.as_str().into(), record.values[s * w + c].into()]);
            }
        }
    }
    table
}

fn excluded_json(result: &EnsembleResult) -> Value {
    json!(result.excluded.iter().map(|e| json!({ "run": e.run, "reason": e.reason })).collect::<Vec<_>>())
}

fn simulate(scenario: &Scenario, seed: u64, cfg: &SimulateConfig, bundle: &mut Bundle) -> CliResult<Summary> {
    let Resolved { model, x0, diffusion, grid } = scenario.resolve()?;
    let model = &*model;
    let n = model.dim();
    let path = euler_maruyama(model, &diffusion, &x0, &grid, &mut NoiseStream::new(seed, 0, 2 * n))?;
    bundle.table("path", &Table::from_path(&path))?;
    let det = deterministic_path(model, &x0, &grid, cfg.deterministic)?;
    if let Some(d) = &det {
        bundle.table("deterministic", &Table::from_path(d))?;
    }
    let block = scenario.model_block()?;
    let integrable = match model.perturbation_strength() {
        Some(eps1) if cfg.integrable && eps1 != 0.0 && block.has_perturbation() => {
            let free = block.with_perturbation(0.0)?;
            Some(rk4(&*free, &x0, &grid)?)
        }
        _ => None,
    };
    if let Some(i) = &integrable {
        bundle.table("integrable", &Table::from_path(i))?;
    }

    let mut out = summary(json!({
        "model": model.name(),
        "noise_intensity": diffusion.intensity(),
        "n_steps": grid.n_steps(),
        "energy_start": model.energy(grid.t0(), &x0.q, &x0.p),
        "energy_end": model.energy(grid.t1(), path.last().q.as_slice(), path.last().p.as_slice()),
    }));
    if let Some(d) = &det {
        let last = d.last();
        out.insert("deterministic_energy_end".into(), json!(model.energy(grid.t1(), &last.q, &last.p)));
    }
    if cfg.runs > 1 {
        let observables = cfg
            .observables
            .iter()
            .map(|o| match o {
                ObservableKind::Energy => Observable::Energy,
                ObservableKind::State => Observable::State,
            })
            .collect();
        let spec = EnsembleSpec::new(model, diffusion.clone(), x0.clone(), grid, cfg.runs, seed)
            .sample_every(cfg.sample_every)
            .observables(observables);
        let result = run_ensemble(&spec)?;
        bundle.table("ensemble", &ensemble_table(&result))?;
        out.insert("n_runs".into(), json!(cfg.runs));
        out.insert("excluded_runs".into(), excluded_json(&result));
        out.insert("observables".into(), serde_json::to_value(&result.summaries)?);
    }

    let mut curves: Vec<(&str, &DiscretePath)> = Vec::new();
    if diffusion.intensity() > 0.0 || det.is_none() {
        curves.push(("stochastic", &path));
    }
    if let Some(d) = &det {
        curves.push(("deterministic", d));
    }
    if let Some(i) = &integrable {
        curves.push(("integrable", i));
    }
    bundle.plot("phase", &trajectory_figure(model, &curves))?;
    Ok(out)
}

fn mpp(scenario: &Scenario, cfg: &MppConfig, bundle: &mut Bundle) -> CliResult<(Summary, Option<CliError>)> {
    let Resolved { model, x0, diffusion, grid } = scenario.resolve()?;
    let model = &*model;
    let defaults = MppOptions::default();
    let options = MppOptions {
        grad_tol: cfg.grad_tol.unwrap_or(defaults.grad_tol),
        max_iter: cfg.max_iter.unwrap_or(defaults.max_iter),
        direction: match cfg.direction {
            DirectionKind::Lbfgs => SearchDirection::Lbfgs { memory: cfg.memory.unwrap_or(10) },
            DirectionKind::SteepestDescent => SearchDirection::SteepestDescent,
        },
        precondition: cfg.precondition,
        ..defaults
    };
    let flow = rk4(model, &x0, &grid)?;
    let mut problem = MppProblem::new(x0.clone(), grid).with_options(options);
    if cfg.init == InitKind::Rk4 {
        problem = problem.with_init(flow.clone())?;
    }
    match (cfg.endpoint, &cfg.x1) {
        (EndpointKind::Pinned, Some(x1)) => problem = problem.pinned(x1.state()?)?,
        (EndpointKind::Pinned, None) => return Err(CliError::Config("a pinned endpoint needs `x1`".into())),
        (EndpointKind::Free, Some(_)) => return Err(CliError::Config("`x1` only applies to a pinned endpoint".into())),
        (EndpointKind::Free, None) => {}
    }
    let solution = minimize_om(model, &diffusion, &problem)?;
    let report = verify_mpp(&solution, model)?;
    bundle.table("path", &Table::from_path(&solution.path))?;
    bundle.table("reference", &Table::from_path(&flow))?;
    let mut history = Table::new(["iteration", "action"]);
    for (i, a) in solution.action_history.iter().enumerate() {
        history.push(vec![i.into(), (*a).into()]);
    }
    bundle.table("convergence", &history)?;

    let mut fig = trajectory_figure(model, &[("most probable path", &solution.path), ("rk4 flow", &flow)]);
    let floor = f64::MIN_POSITIVE;
    let curve = solution.action_history.iter().enumerate().map(|(i, a)| (i as f64, a.max(floor).log10())).collect();
    fig.panels.push(Panel::new("convergence", "iteration", "log10 action").with(Series::line("", curve)));
    bundle.plot("mpp", &fig)?;

    let out = summary(json!({
        "action": solution.action(),
        "el_residual": report.el_residual,
        "el_threshold": report.threshold,
        "verified": report.passed,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "termination": solution.termination,
        "grad_norm": solution.grad_norm,
        "sup_distance_to_flow": solution.path.sup_distance(&flow)?,
    }));
    let failure = (!solution.converged).then(|| {
        CliError::Numerical(format!(
            "minimizer stopped after {} iterations ({:?}) with preconditioned gradient norm {:e}",
            solution.iterations, solution.termination, solution.grad_norm
        ))
    });
    Ok((out, failure))
}

/// Reads a `t, q_1..q_n, p_1..p_n` table onto the scenario grid.
fn read_path(file: &Path, grid: TimeGrid, dim: usize) -> CliResult<DiscretePath> {
    let mut reader = csv::Reader::from_path(file)
        .map_err(|e| CliError::Config(format!("cannot read path file {}: {e}", file.display())))?;
    let width = reader.headers()?.len();
    if width != 2 * dim + 1 {
        return Err(CliError::Config(format!("path file has {width} columns, expected {}", 2 * dim + 1)));
    }
    let mut data = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let values: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = values.map_err(|e| CliError::Config(format!("path file row {}: {e}", k + 1)))?;
        if k < grid.n_nodes() && (values[0] - grid.time(k)).abs() > 1e-9 * grid.horizon().max(1.0) {
            return Err(CliError::Config(format!("path file row {} has t = {}, grid expects {}", k + 1, values[0], grid.time(k))));
        }
        data.extend_from_slice(&values[1..]);
    }
    Ok(DiscretePath::from_flat(grid, dim, data)?)
}

fn om(scenario: &Scenario, seed: u64, base_dir: &Path, cfg: &OmConfig, bundle: &mut Bundle) -> CliResult<Summary> {
    let Resolved { model, x0, diffusion, grid } = scenario.resolve()?;
    let model = &*model;
    if cfg.file.is_some() && cfg.path != PathSource::File {
        return Err(CliError::Config("`file` only applies to path = \"file\"".into()));
    }
    let path = match cfg.path {
        PathSource::Rk4 => rk4(model, &x0, &grid)?,
        PathSource::StormerVerlet => stormer_verlet(model, &x0, &grid)?,
        PathSource::Constant => DiscretePath::constant(grid, &x0),
        PathSource::EulerMaruyama => {
            euler_maruyama(model, &diffusion, &x0, &grid, &mut NoiseStream::new(seed, cfg.run, 2 * model.dim()))?
        }
        PathSource::File => {
            let file = cfg.file.as_ref().ok_or_else(|| CliError::Config("path = \"file\" needs `file`".into()))?;
            read_path(&base_dir.join(file), grid, model.dim())?
        }
    };
    let value = om_functional(&path, model, &diffusion)?;
    bundle.table("path", &Table::from_path(&path))?;
    bundle.plot("path", &trajectory_figure(model, &[("path", &path)]))?;
    Ok(summary(json!({
        "action": value.action,
        "term_q": value.term_q,
        "term_p": value.term_p,
        "rate_function": rate_function(&path, model, &diffusion)?,
        "el_residual": euler_lagrange_residual(&path, model)?,
        "derivative_energy": derivative_energy(&path),
        "quadrature": value.quadrature,
        "derivative_scheme": value.derivative_scheme,
    })))
}

fn binning(cfg: &DensityConfig) -> CliResult<Binning> {
    let rule = match &cfg.bins {
        None => BinRule::FreedmanDiaconis,
        Some(BinsConfig::Count(0)) => return Err(CliError::Config("bin count must be positive".into())),
        Some(BinsConfig::Count(n)) => BinRule::Fixed(*n),
        Some(BinsConfig::Rule(r)) => match r.as_str() {
            "freedman-diaconis" => BinRule::FreedmanDiaconis,
            "scott" => BinRule::Scott,
            other => return Err(CliError::Config(format!("unknown bin rule `{other}`"))),
        },
    };
    Ok(Binning { rule, kde: cfg.kde })
}

fn density(scenario: &Scenario, seed: u64, cfg: &DensityConfig, bundle: &mut Bundle) -> CliResult<Summary> {
    let Resolved { model, x0, diffusion, grid } = scenario.resolve()?;
    let model = &*model;
    let stride = match (cfg.sample_every, cfg.sample_interval) {
        (Some(k), None) => k,
        (None, Some(dt)) if dt > 0.0 => ((dt / grid.dt()).round() as usize).max(1),
        (None, None) => 1,
        _ => return Err(CliError::Config("give at most one positive `sample_every` or `sample_interval`".into())),
    };
    if stride == 0 {
        return Err(CliError::Config("`sample_every` must be positive".into()));
    }
    let binning = binning(cfg)?;
    let spec = EnsembleSpec::new(model, diffusion, x0, grid, cfg.runs, seed).sample_every(stride);
    let result = run_ensemble(&spec)?;
    let est = hamiltonian_density(&result, &binning)?;
    let mut table = Table::new(["bin_left", "bin_right", "count", "density"]);
    let mut bars = Vec::with_capacity(est.counts.len());
    for (i, (&count, &dens)) in est.counts.iter().zip(&est.density).enumerate() {
        table.push(vec![est.edges[i].into(), est.edges[i + 1].into(), count.into(), dens.into()]);
        bars.push((est.edges[i], est.edges[i + 1], dens));
    }
    bundle.table("density", &table)?;
    if cfg.emit_samples {
        bundle.table("ensemble", &ensemble_table(&result))?;
    }
    let panel = Panel::new("energy density", "H", "density").with(Series::bars("histogram", bars)).with(Series::vline("mode", est.mode));
    bundle.plot("density", &Figure::single(panel))?;
    Ok(summary(json!({
        "mode": est.mode,
        "mode_density": est.mode_density,
        "histogram_mode": est.histogram_mode,
        "kde": est.kde,
        "n_runs": cfg.runs,
        "n_samples": est.n_samples,
        "n_bins": est.counts.len(),
        "sample_interval": stride as f64 * grid.dt(),
        "excluded_runs": excluded_json(&result),
        "energy": result.summaries.first(),
    })))
}

fn fit_json(scaling: &ScalingFit) -> Value {
    match scaling.fit {
        Some(f) => json!({ "slope": f.slope, "intercept": f.intercept, "r2": f.r2 }),
        None => Value::Null,
    }
}

fn scaling_table(scaling: &ScalingFit) -> Table {
    let mut table = Table::new(["x", "p_hat", "stderr", "y"]);
    for p in &scaling.points {
        table.push(vec![p.x.into(), p.p_hat.into(), p.stderr.into(), p.y.into()]);
    }
    table
}

fn scaling_figure(title: &str, x_label: &str, y_label: &str, scaling: &ScalingFit) -> Figure {
    let pts: Vec<(f64, f64)> = scaling.points.iter().map(|p| (p.x, p.y)).collect();
    let mut panel = Panel::new(title, x_label, y_label).with(Series::scatter("estimates", pts.clone()));
    if let Some(f) = scaling.fit {
        let xs = pts.iter().map(|p| p.0).filter(|x| x.is_finite());
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        panel = panel.with(Series::line("least-squares fit", vec![(lo, f.slope * lo + f.intercept), (hi, f.slope * hi + f.intercept)]));
    }
    Figure::single(panel)
}

fn reference_path(
    model: &dyn HamiltonianModel,
    x0: &PhaseState,
    grid: TimeGrid,
    kind: ReferenceKind,
    shift: Option<&[f64]>,
) -> CliResult<DiscretePath> {
    let mut path = match kind {
        ReferenceKind::Rk4 => rk4(model, x0, &grid)?,
        ReferenceKind::Euler => {
            let quiet = stoch_ham::DiffusionSchedule::constant(model.dim(), 1.0, 0.0)?;
            euler_maruyama(model, &quiet, x0, &grid, &mut NoiseStream::new(0, 0, 2 * model.dim()))?
        }
        ReferenceKind::Constant => DiscretePath::constant(grid, x0),
    };
    if let Some(v) = shift {
        if v.len() != 2 * model.dim() {
            return Err(CliError::Config(format!("`shift` needs {} entries (q then p)", 2 * model.dim())));
        }
        for k in 0..path.n_nodes() {
            let t = grid.time(k) - grid.t0();
            path.node_mut(k).iter_mut().zip(v).for_each(|(x, s)| *x += s * t);
        }
    }
    Ok(path)
}

fn ldp(scenario: &Scenario, seed: u64, cfg: &LdpScanConfig, bundle: &mut Bundle) -> CliResult<Summary> {
    let Resolved { model, x0, diffusion, grid } = scenario.resolve()?;
    let model = &*model;
    let norm = match cfg.norm {
        NormKind::Sup => {
            if cfg.alpha.is_some() || cfg.pair_budget.is_some() {
                return Err(CliError::Config("`alpha` and `pair_budget` only apply to norm = \"holder\"".into()));
            }
            TubeNorm::Sup
        }
        NormKind::Holder => {
            let alpha = cfg.alpha.ok_or_else(|| CliError::Config("norm = \"holder\" needs `alpha`".into()))?;
            let budget = cfg.pair_budget.unwrap_or(HolderConfig::DEFAULT_PAIR_BUDGET);
            TubeNorm::Holder(HolderConfig::new(alpha, budget)?)
        }
    };
    let reference = reference_path(model, &x0, grid, cfg.reference, cfg.shift.as_deref())?;
    let tube = TubeSpec::new(reference, cfg.radius, norm)?;
    let estimator = match cfg.estimator {
        EstimatorKind::Plain => LdpEstimator::Plain,
        EstimatorKind::DriftControl => LdpEstimator::Girsanov(TiltKind::DriftControl),
        EstimatorKind::PathShift => LdpEstimator::Girsanov(TiltKind::PathShift),
    };
    let spec = EnsembleSpec::new(model, diffusion, x0, grid, cfg.runs, seed).observables(Vec::new());
    let scan = ldp_scan(&spec, &tube, &cfg.eps, estimator)?;
    bundle.table("scaling", &scaling_table(&scan.scaling))?;
    bundle.plot("scaling", &scaling_figure("tube probability scaling", "eps^2", "eps^2 ln P", &scan.scaling))?;
    Ok(summary(json!({
        "fit": fit_json(&scan.scaling),
        "eps": cfg.eps,
        "monotone": scan.monotone,
        "smallest_eps_value": scan.smallest_eps_value(),
        "excluded_eps": scan.scaling.excluded,
        "clamped_weights": scan.clamped,
        "estimator": estimator,
        "n_runs": cfg.runs,
    })))
}

fn smallball(seed: u64, cfg: &SmallBallConfig, bundle: &mut Bundle) -> CliResult<Summary> {
    let ball = stoch_ham::mc::SmallBallConfig {
        alpha: cfg.alpha,
        eps_list: cfg.eps.clone(),
        n_runs: cfg.runs,
        seed,
        n_steps: cfg.n_steps,
        channels: cfg.channels,
        sigma_scale: cfg.sigma_scale,
    };
    let result = small_ball_exponent(&ball)?;
    bundle.table("scaling", &scaling_table(&result.scaling))?;
    bundle.plot("scaling", &scaling_figure("small-ball exponent", "ln eps", "ln(-ln P)", &result.scaling))?;
    Ok(summary(json!({
        "fit": fit_json(&result.scaling),
        "eps": cfg.eps,
        "alpha": cfg.alpha,
        "target_slope": result.target_slope,
        "relative_error": result.relative_error,
        "excluded_eps": result.scaling.excluded,
        "n_runs": cfg.runs,
    })))
}

fn torus(scenario: &Scenario, seed: u64, cfg: &TorusConfig, bundle: &mut Bundle) -> CliResult<Summary> {
    let block = scenario.model_block()?;
    if !block.has_perturbation() {
        return Err(CliError::Config(format!("torus experiments need a nearly integrable model, got {:?}", block.kind)));
    }
    let Resolved { x0, diffusion, grid, .. } = scenario.resolve()?;
    let eps1: Vec<f64> = match (&cfg.eps1, &cfg.ratios) {
        (Some(e), None) => e.clone(),
        (None, Some(r)) => r.iter().map(|r| r * cfg.eps2).collect(),
        _ => return Err(CliError::Config("give exactly one of `eps1` and `ratios`".into())),
    };
    let pairs: Vec<(f64, f64)> = eps1.iter().map(|&e| (e, cfg.eps2)).collect();
    let spec = TorusSpec { delta: cfg.delta, scale_with_noise: cfg.scale_with_noise };
    let make_model = |e: f64| {
        block.with_perturbation(e).map_err(|err| stoch_ham::Error::InvalidParameter(err.to_string()))
    };
    let scan = torus_deviation(make_model, &diffusion, &x0, &grid, &pairs, &spec, cfg.runs, seed)?;
    bundle.table("scaling", &scaling_table(&scan.scaling))?;
    let mut fig = scaling_figure("torus stay probability", "(eps1/eps2)^2", "ln P(stay)", &scan.scaling);

    let mut out = summary(json!({
        "fit": fit_json(&scan.scaling),
        "monotone": scan.monotone,
        "points": scan.points,
        "radius": spec.radius(cfg.eps2),
        "n_runs": cfg.runs,
    }));
    if let Some(dev) = &cfg.deviation {
        let dev_grid = match dev.t1 {
            Some(t1) => TimeGrid::with_step(grid.t0(), t1, grid.dt())?,
            None => grid,
        };
        let base = match &dev.diffusion {
            Some(d) => d.build(block)?,
            None => diffusion.clone(),
        };
        let mut table = Table::new(["eps", "mean", "stderr", "max", "n_runs"]);
        let mut curve = Vec::new();
        let mut stats = Vec::new();
        for &eps in &dev.eps {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(CliError::Config(format!("deviation intensities must be finite and >= 0, got {eps}")));
            }
            let model = block.with_perturbation(eps)?;
            let d = base.clone().with_intensity(eps);
            let stat = action_deviation(&*model, &d, &x0, &dev_grid, dev.runs, seed)?;
            table.push(vec![eps.into(), stat.mean.into(), stat.stderr.into(), stat.max.into(), stat.n_runs.into()]);
            curve.push((eps.log10(), stat.mean.log10()));
            stats.push(json!({ "eps": eps, "mean": stat.mean, "stderr": stat.stderr, "max": stat.max }));
        }
        bundle.table("deviation", &table)?;
        fig.panels.push(Panel::new("sup action deviation", "log10 eps", "log10 mean deviation").with(Series::line("", curve.clone())).with(Series::scatter("", curve)));
        fig.columns = 2;
        let growth = match (stats.first(), stats.last()) {
            (Some(a), Some(b)) if stats.len() > 1 => json!(b["mean"].as_f64().unwrap_or(f64::NAN) / a["mean"].as_f64().unwrap_or(f64::NAN)),
            _ => Value::Null,
        };
        out.insert("deviation".into(), json!({ "horizon": dev_grid.horizon(), "n_runs": dev.runs, "stats": stats, "growth": growth }));
    }
    bundle.plot("torus", &fig)?;
    Ok(out)
}

/// Outcome of `validate`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub experiment: String,
    pub gradient_max_rel_error: Option<f64>,
    pub gradient_threshold: Option<f64>,
    /// Observed `(min, max)` of the diffusion over the grid when admissible.
    pub diffusion_range: Option<(f64, f64)>,
    pub warnings: Vec<String>,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Gradient self-check tolerance; the gravitational model's energies are so
/// large that central differences lose about one more digit.
fn gradient_tolerance(model: &dyn HamiltonianModel) -> f64 {
    if model.name() == "three_body" {
        1e-5
    } else {
        1e-6
    }
}

pub fn validate(scenario: &Scenario, seed: u64) -> CliResult<ValidationReport> {
    let experiment = scenario.experiment();
    let mut report = ValidationReport {
        experiment: experiment.name().into(),
        gradient_max_rel_error: None,
        gradient_threshold: None,
        diffusion_range: None,
        warnings: Vec::new(),
        failures: Vec::new(),
    };
    if !experiment.needs_model() {
        if scenario.model.is_some() || scenario.diffusion.is_some() || scenario.grid.is_some() {
            report.warnings.push(format!("{} ignores the model, diffusion and grid blocks", experiment.name()));
        }
        return Ok(report);
    }
    let resolved = scenario.resolve()?;
    let tol = gradient_tolerance(&*resolved.model);
    let check = gradient_selfcheck(&*resolved.model, 100, seed, tol);
    report.gradient_max_rel_error = Some(check.max_rel_error);
    report.gradient_threshold = Some(tol);
    if !check.passed() {
        report.failures.push(format!("gradient self-check: relative error {:e} > {tol:e}", check.max_rel_error));
    }
    match resolved.diffusion.check_bounds(resolved.grid.t0(), resolved.grid.t1()) {
        Ok(range) => report.diffusion_range = Some(range),
        Err(e) if experiment.needs_bounded_diffusion() => report.failures.push(format!("diffusion must stay bounded away from zero: {e}")),
        Err(e) => report.warnings.push(format!("diffusion is not bounded away from zero ({e}); fine for plain simulation")),
    }
    if let Experiment::Torus(_) = experiment {
        if resolved.model.actions(resolved.grid.t0(), &resolved.x0.q, &resolved.x0.p).is_none() {
            report.failures.push(format!("model `{}` has no action variables", resolved.model.name()));
        }
    }
    Ok(report)
}
