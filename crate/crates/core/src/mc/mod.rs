//! Monte Carlo estimators over seeded, parallel ensembles.
//!
//! Run `i` always draws its noise from `NoiseStream::new(seed, i, ..)`, runs
//! are evaluated in parallel but collected in index order, and every reduction
//! is a sequential fold over that order. Results therefore do not depend on
//! the number of worker threads.

mod density;
mod ensemble;
mod fit;
mod girsanov;
mod ldp;
mod smallball;
mod torus;
mod tube;

pub use density::{density_estimate, hamiltonian_density, BinRule, Binning, DensityEstimate, KdeSummary};
pub use ensemble::{run_ensemble, EnsembleResult, EnsembleSpec, ExcludedRun, Observable, ObservableSummary, RunRecord};
pub use fit::{binomial_stderr, linear_fit, LinearFit, ScalingFit, ScalingPoint};
pub use girsanov::{girsanov_tube_probability, GirsanovEstimate, TiltKind, LOG_WEIGHT_CLAMP};
pub use ldp::{ldp_scan, LdpEstimator, LdpScan};
pub use smallball::{small_ball_exponent, small_ball_norms, SmallBallConfig, SmallBallResult};
pub use torus::{action_deviation, torus_deviation, DeviationStat, TorusScan, TorusSpec};
pub use tube::{tube_distance, tube_probability, TubeEstimate, TubeNorm, TubeSpec};

use rayon::prelude::*;

/// Evaluate `f(run)` for every run index in parallel, in index order.
pub(crate) fn map_runs<T, F>(n_runs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n_runs as u64).into_par_iter().map(f).collect()
}
