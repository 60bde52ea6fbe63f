//! Scenario files.
//!
//! A scenario is one TOML document with a required `seed`, optional
//! `[model]`, `[initial]`, `[diffusion]` and `[grid]` blocks, exactly one
//! `[experiment.<kind>]` block and an optional `[output]` block. Unknown keys
//! are rejected everywhere.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use stoch_ham::model::{ActionAngleModel, CoupledOscillators, HarmonicOscillator, KickedRotors, ThreeBody, ThreeBodyParams};
use stoch_ham::{ChannelSchedule, DiffusionSchedule, HamiltonianModel, PhaseState, TimeGrid};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub model: Option<ModelBlock>,
    pub initial: Option<StateBlock>,
    pub diffusion: Option<DiffusionBlock>,
    pub grid: Option<GridBlock>,
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[serde(alias = "harmonic_1d")]
    Harmonic,
    #[serde(alias = "coupled_2d")]
    Coupled,
    #[serde(alias = "three_body")]
    ThreeBody,
    #[serde(alias = "action_angle")]
    Rotors,
}

/// Catalog model and its parameters. Which keys apply depends on `kind`:
/// `mass`/`spring_k` for `harmonic`, `eps` for `coupled`, `n`/`eps` for
/// `rotors`, `[model.params]` for `three-body`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: ModelKind,
    pub mass: Option<f64>,
    pub spring_k: Option<f64>,
    pub eps: Option<f64>,
    pub n: Option<usize>,
    pub params: Option<ThreeBodyParams>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBlock {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl StateBlock {
    pub fn state(&self) -> CliResult<PhaseState> {
        Ok(PhaseState::new(self.q.clone(), self.p.clone())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// `1 + sin t`, `1 + 2 cos 3t`; one degree of freedom.
    PeriodicOscillator,
    /// The coupled oscillators' schedule; two degrees of freedom.
    PeriodicCoupled,
    /// `value` in every channel.
    Constant,
    /// The three-body model's per-body coefficients.
    ThreeBody,
    /// Explicit `sigma_q` / `sigma_p` channel lists.
    Channels,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionBlock {
    pub schedule: ScheduleKind,
    #[serde(default = "one")]
    pub intensity: f64,
    pub value: Option<f64>,
    pub sigma_q: Option<Vec<ChannelSchedule>>,
    pub sigma_p: Option<Vec<ChannelSchedule>>,
    /// Declared admissible band `[m, M]`.
    pub bounds: Option<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub n_steps: Option<usize>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
    #[serde(default = "yes")]
    pub plots: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: default_dir(), format: Format::Csv, plots: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentBlock {
    pub simulate: Option<SimulateConfig>,
    pub mpp: Option<MppConfig>,
    pub om: Option<OmConfig>,
    pub density: Option<DensityConfig>,
    pub ldp_scan: Option<LdpScanConfig>,
    pub smallball: Option<SmallBallConfig>,
    pub torus: Option<TorusConfig>,
}

/// The single experiment a scenario describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Experiment<'a> {
    Simulate(&'a SimulateConfig),
    Mpp(&'a MppConfig),
    Om(&'a OmConfig),
    Density(&'a DensityConfig),
    LdpScan(&'a LdpScanConfig),
    SmallBall(&'a SmallBallConfig),
    Torus(&'a TorusConfig),
}

impl Experiment<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::Mpp(_) => "mpp",
            Experiment::Om(_) => "om",
            Experiment::Density(_) => "density",
            Experiment::LdpScan(_) => "ldp-scan",
            Experiment::SmallBall(_) => "smallball",
            Experiment::Torus(_) => "torus",
        }
    }

    /// Whether the experiment evaluates the action or a likelihood ratio, which
    /// require the diffusion to stay bounded away from zero.
    pub fn needs_bounded_diffusion(&self) -> bool {
        match self {
            Experiment::Mpp(_) | Experiment::Om(_) => true,
            Experiment::LdpScan(c) => c.estimator != EstimatorKind::Plain,
            _ => false,
        }
    }

    /// Whether the experiment simulates the scenario's model.
    pub fn needs_model(&self) -> bool {
        !matches!(self, Experiment::SmallBall(_))
    }
}

impl ExperimentBlock {
    pub fn single(&self) -> CliResult<Experiment<'_>> {
        let mut found = Vec::new();
        if let Some(c) = &self.simulate {
            found.push(Experiment::Simulate(c));
        }
        if let Some(c) = &self.mpp {
            found.push(Experiment::Mpp(c));
        }
        if let Some(c) = &self.om {
            found.push(Experiment::Om(c));
        }
        if let Some(c) = &self.density {
            found.push(Experiment::Density(c));
        }
        if let Some(c) = &self.ldp_scan {
            found.push(Experiment::LdpScan(c));
        }
        if let Some(c) = &self.smallball {
            found.push(Experiment::SmallBall(c));
        }
        if let Some(c) = &self.torus {
            found.push(Experiment::Torus(c));
        }
        match found.as_slice() {
            [one] => Ok(*one),
            [] => Err(CliError::Config("the scenario has no [experiment.<kind>] block".into())),
            many => Err(CliError::Config(format!(
                "exactly one experiment block is allowed, found {}",
                many.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeterministicIntegrator {
    Rk4,
    StormerVerlet,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservableKind {
    Energy,
    State,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "one_run")]
    pub runs: usize,
    #[serde(default = "rk4")]
    pub deterministic: DeterministicIntegrator,
    /// Also integrate the unperturbed system when the model has a
    /// perturbation strength.
    #[serde(default = "yes")]
    pub integrable: bool,
    /// Node stride for `ensemble.csv` when `runs > 1`.
    #[serde(default = "one_run")]
    pub sample_every: usize,
    #[serde(default = "energy_only")]
    pub observables: Vec<ObservableKind>,
}

fn one_run() -> usize {
    1
}

fn rk4() -> DeterministicIntegrator {
    DeterministicIntegrator::Rk4
}

fn energy_only() -> Vec<ObservableKind> {
    vec![ObservableKind::Energy]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Constant,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointKind {
    Free,
    Pinned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionKind {
    Lbfgs,
    SteepestDescent,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppConfig {
    #[serde(default = "constant_init")]
    pub init: InitKind,
    #[serde(default = "free")]
    pub endpoint: EndpointKind,
    /// Target state for a pinned endpoint.
    pub x1: Option<StateBlock>,
    pub grad_tol: Option<f64>,
    pub max_iter: Option<usize>,
    #[serde(default = "lbfgs")]
    pub direction: DirectionKind,
    pub memory: Option<usize>,
    #[serde(default = "yes")]
    pub precondition: bool,
}

fn constant_init() -> InitKind {
    InitKind::Constant
}

fn free() -> EndpointKind {
    EndpointKind::Free
}

fn lbfgs() -> DirectionKind {
    DirectionKind::Lbfgs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathSource {
    Rk4,
    StormerVerlet,
    Constant,
    EulerMaruyama,
    File,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmConfig {
    pub path: PathSource,
    /// `path.csv`-style table read when `path = "file"`, relative to the
    /// scenario file.
    pub file: Option<PathBuf>,
    /// Run index of the noise stream when `path = "euler-maruyama"`.
    #[serde(default)]
    pub run: u64,
}

/// Histogram rule: `"freedman-diaconis"`, `"scott"` or a fixed bin count.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BinsConfig {
    Count(usize),
    Rule(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub runs: usize,
    /// Record the energy every this many grid nodes.
    pub sample_every: Option<usize>,
    /// Record the energy every this many time units (rounded to nodes).
    pub sample_interval: Option<f64>,
    pub bins: Option<BinsConfig>,
    #[serde(default = "yes")]
    pub kde: bool,
    /// Also write every energy sample to `ensemble.csv`.
    #[serde(default)]
    pub emit_samples: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// The deterministic flow by RK4.
    Rk4,
    /// The noise-free Euler scheme, which the drift-control tilt follows exactly.
    Euler,
    /// The constant path at the initial state.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Sup,
    Holder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Plain,
    DriftControl,
    PathShift,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpScanConfig {
    pub eps: Vec<f64>,
    pub runs: usize,
    pub radius: f64,
    #[serde(default = "rk4_reference")]
    pub reference: ReferenceKind,
    /// Per-coordinate velocity added to the reference, `phi(t) + shift (t - t0)`,
    /// ordered `q_1..q_n, p_1..p_n`.
    pub shift: Option<Vec<f64>>,
    #[serde(default = "sup")]
    pub norm: NormKind,
    pub alpha: Option<f64>,
    pub pair_budget: Option<usize>,
    #[serde(default = "plain")]
    pub estimator: EstimatorKind,
}

fn rk4_reference() -> ReferenceKind {
    ReferenceKind::Rk4
}

fn sup() -> NormKind {
    NormKind::Sup
}

fn plain() -> EstimatorKind {
    EstimatorKind::Plain
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallConfig {
    pub alpha: f64,
    pub eps: Vec<f64>,
    pub runs: usize,
    #[serde(default = "default_ball_steps")]
    pub n_steps: usize,
    #[serde(default = "one_run")]
    pub channels: usize,
    #[serde(default = "one")]
    pub sigma_scale: f64,
}

fn default_ball_steps() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusConfig {
    pub eps2: f64,
    /// Perturbation strengths; alternatively give `ratios = eps1 / eps2`.
    pub eps1: Option<Vec<f64>>,
    pub ratios: Option<Vec<f64>>,
    pub delta: f64,
    #[serde(default = "yes")]
    pub scale_with_noise: bool,
    pub runs: usize,
    pub deviation: Option<DeviationConfig>,
}

/// Sup action deviation with `eps1 = eps2 = eps` for each listed `eps`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationConfig {
    pub eps: Vec<f64>,
    pub runs: usize,
    /// Horizon override; the step size of `[grid]` is kept.
    pub t1: Option<f64>,
    /// Diffusion override; its intensity is replaced by each `eps`.
    pub diffusion: Option<DiffusionBlock>,
}

/// The model, diffusion, initial state and grid of a scenario, built.
pub struct Resolved {
    pub model: Box<dyn HamiltonianModel>,
    pub x0: PhaseState,
    pub diffusion: DiffusionSchedule,
    pub grid: TimeGrid,
}

impl Scenario {
    pub fn parse(text: &str) -> CliResult<Scenario> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        scenario.experiment.single()?;
        Ok(scenario)
    }

    /// Reads and parses a scenario file, returning the raw text as well.
    pub fn load(path: &Path) -> CliResult<(Scenario, String)> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Ok((Scenario::parse(&text)?, text))
    }

    pub fn experiment(&self) -> Experiment<'_> {
        self.experiment.single().expect("checked when parsed")
    }

    pub fn model_block(&self) -> CliResult<&ModelBlock> {
        self.model.as_ref().ok_or_else(|| CliError::Config("this experiment needs a [model] block".into()))
    }

    pub fn grid(&self) -> CliResult<TimeGrid> {
        self.grid.as_ref().ok_or_else(|| CliError::Config("this experiment needs a [grid] block".into()))?.build()
    }

    pub fn resolve(&self) -> CliResult<Resolved> {
        let block = self.model_block()?;
        let model = block.build()?;
        let x0 = match &self.initial {
            Some(s) => s.state()?,
            None => block.default_initial()?,
        };
        if x0.dim() != model.dim() {
            return Err(CliError::Config(format!(
                "initial state has {} degrees of freedom, model `{}` has {}",
                x0.dim(),
                model.name(),
                model.dim()
            )));
        }
        let diffusion = self
            .diffusion
            .as_ref()
            .ok_or_else(|| CliError::Config("this experiment needs a [diffusion] block".into()))?
            .build(block)?;
        Ok(Resolved { model, x0, diffusion, grid: self.grid()? })
    }
}

impl ModelBlock {
    fn check_keys(&self) -> CliResult<()> {
        let allowed: &[&str] = match self.kind {
            ModelKind::Harmonic => &["mass", "spring_k"],
            ModelKind::Coupled => &["eps"],
            ModelKind::ThreeBody => &["params"],
            ModelKind::Rotors => &["n", "eps"],
        };
        let present = [
            ("mass", self.mass.is_some()),
            ("spring_k", self.spring_k.is_some()),
            ("eps", self.eps.is_some()),
            ("n", self.n.is_some()),
            ("params", self.params.is_some()),
        ];
        for (key, set) in present {
            if set && !allowed.contains(&key) {
                return Err(CliError::Config(format!("key `{key}` does not apply to model kind {:?}", self.kind)));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> CliResult<Box<dyn HamiltonianModel>> {
        self.check_keys()?;
        match self.kind {
            ModelKind::Coupled => {
                let eps = self.eps.ok_or_else(|| CliError::Config("model `coupled` needs `eps`".into()))?;
                self.with_perturbation(eps)
            }
            ModelKind::Rotors => self.with_perturbation(self.eps.unwrap_or(0.0)),
            ModelKind::Harmonic => Ok(Box::new(HarmonicOscillator::new(
                self.mass.unwrap_or(1.0),
                self.spring_k.unwrap_or(1.0),
            )?)),
            ModelKind::ThreeBody => Ok(Box::new(ThreeBody::new(self.params.clone().unwrap_or_default())?)),
        }
    }

    /// The model with its perturbation strength replaced by `eps1`.
    pub fn with_perturbation(&self, eps1: f64) -> CliResult<Box<dyn HamiltonianModel>> {
        match self.kind {
            ModelKind::Coupled => Ok(Box::new(CoupledOscillators::new(eps1)?)),
            ModelKind::Rotors => Ok(Box::new(ActionAngleModel::new(KickedRotors::new(self.n.unwrap_or(2))?, eps1)?)),
            kind => Err(CliError::Config(format!("model kind {kind:?} has no perturbation parameter"))),
        }
    }

    pub fn has_perturbation(&self) -> bool {
        matches!(self.kind, ModelKind::Coupled | ModelKind::Rotors)
    }

    pub fn default_initial(&self) -> CliResult<PhaseState> {
        Ok(match self.kind {
            ModelKind::Harmonic => PhaseState { q: vec![50.0], p: vec![0.0] },
            ModelKind::Coupled => CoupledOscillators::default_initial(),
            ModelKind::ThreeBody => ThreeBody::new(self.params.clone().unwrap_or_default())?.initial_state(),
            ModelKind::Rotors => {
                let n = self.n.unwrap_or(2);
                PhaseState { q: vec![0.0; n], p: (0..n).map(|i| 1.0 + 0.5 * i as f64).collect() }
            }
        })
    }
}

impl DiffusionBlock {
    pub fn build(&self, model: &ModelBlock) -> CliResult<DiffusionSchedule> {
        let dim = model.build()?.dim();
        let misplaced = |key: &str| CliError::Config(format!("key `{key}` does not apply to schedule {:?}", self.schedule));
        if self.value.is_some() && self.schedule != ScheduleKind::Constant {
            return Err(misplaced("value"));
        }
        if (self.sigma_q.is_some() || self.sigma_p.is_some()) && self.schedule != ScheduleKind::Channels {
            return Err(misplaced("sigma_q/sigma_p"));
        }
        if !(self.intensity >= 0.0 && self.intensity.is_finite()) {
            return Err(CliError::Config(format!("intensity must be finite and >= 0, got {}", self.intensity)));
        }
        let base = match self.schedule {
            ScheduleKind::PeriodicOscillator => DiffusionSchedule::periodic_oscillator(),
            ScheduleKind::PeriodicCoupled => DiffusionSchedule::periodic_coupled(1.0)?,
            ScheduleKind::Constant => {
                let value = self.value.ok_or_else(|| CliError::Config("schedule `constant` needs `value`".into()))?;
                DiffusionSchedule::constant(dim, value, 1.0)?
            }
            ScheduleKind::ThreeBody => {
                if model.kind != ModelKind::ThreeBody {
                    return Err(CliError::Config("schedule `three-body` needs the three-body model".into()));
                }
                ThreeBody::new(model.params.clone().unwrap_or_default())?.diffusion(1.0)
            }
            ScheduleKind::Channels => {
                let (Some(q), Some(p)) = (&self.sigma_q, &self.sigma_p) else {
                    return Err(CliError::Config("schedule `channels` needs `sigma_q` and `sigma_p`".into()));
                };
                DiffusionSchedule::new(q.clone(), p.clone(), 1.0)?
            }
        };
        if base.dim() != dim {
            return Err(CliError::Config(format!(
                "schedule {:?} has {} channels per block, the model has {dim} degrees of freedom",
                self.schedule,
                base.dim()
            )));
        }
        let schedule = base.with_intensity(self.intensity);
        match self.bounds {
            Some([m, big_m]) => Ok(schedule.with_bounds(m, big_m)?),
            None => Ok(schedule),
        }
    }
}

impl GridBlock {
    pub fn build(&self) -> CliResult<TimeGrid> {
        match (self.n_steps, self.dt) {
            (Some(n), None) => Ok(TimeGrid::new(self.t0, self.t1, n)?),
            (None, Some(dt)) => Ok(TimeGrid::with_step(self.t0, self.t1, dt)?),
            _ => Err(CliError::Config("[grid] needs exactly one of `n_steps` and `dt`".into())),
        }
    }
}
