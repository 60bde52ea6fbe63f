use serde::Serialize;

use super::fit::{binomial_stderr, ScalingFit, ScalingPoint};
use super::map_runs;
use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::pathspace::holder_norm_nodes;

/// Monte Carlo estimate of `P(||c W||_alpha <= eps)` for a Brownian motion
/// `W` on `[0, 1]` with `channels` independent components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallBallConfig {
    pub alpha: f64,
    pub eps_list: Vec<f64>,
    pub n_runs: usize,
    pub seed: u64,
    pub n_steps: usize,
    pub channels: usize,
    /// Constant diffusion `c`; with bounds `m = M = c` the probabilities are
    /// those of `W` at `eps / c`.
    pub sigma_scale: f64,
}

impl SmallBallConfig {
    pub fn new(alpha: f64, eps_list: Vec<f64>, n_runs: usize, seed: u64) -> Self {
        SmallBallConfig { alpha, eps_list, n_runs, seed, n_steps: 512, channels: 1, sigma_scale: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidParameter(format!("small-ball exponent needs 0 < alpha < 1/2, got {}", self.alpha)));
        }
        if self.n_runs == 0 || self.n_steps == 0 || self.channels == 0 {
            return Err(Error::InvalidParameter("runs, steps and channels must be positive".into()));
        }
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return Err(Error::InvalidParameter("sigma scale must be positive".into()));
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidParameter("ball radii must be positive".into()));
        }
        Ok(())
    }

    /// `-2 / (1 - 2 alpha)`.
    pub fn target_slope(&self) -> f64 {
        -2.0 / (1.0 - 2.0 * self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallBallResult {
    /// `param = eps`, `x = ln eps`, `y = ln(-ln p_hat)`.
    pub scaling: ScalingFit,
    pub target_slope: f64,
    /// `|slope / target - 1|` when a fit exists.
    pub relative_error: Option<f64>,
}

/// The Holder norm of every simulated path, in run order.
pub fn small_ball_norms(cfg: &SmallBallConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let dt = 1.0 / cfg.n_steps as f64;
    let w = cfg.channels;
    Ok(map_runs(cfg.n_runs, |run| {
        let mut stream = NoiseStream::new(cfg.seed, run, w);
        let mut data = vec![0.0; (cfg.n_steps + 1) * w];
        let mut dw = vec![0.0; w];
        for k in 0..cfg.n_steps {
            stream.increments(k as u64, dt, &mut dw);
            for c in 0..w {
                data[(k + 1) * w + c] = data[k * w + c] + cfg.sigma_scale * dw[c];
            }
        }
        holder_norm_nodes(&data, w, dt, cfg.alpha, usize::MAX).value
    }))
}

/// Fit `ln(-ln P(||W||_alpha <= eps))` against `ln eps`.
pub fn small_ball_exponent(cfg: &SmallBallConfig) -> Result<SmallBallResult> {
    let mut norms = small_ball_norms(cfg)?;
    norms.sort_by(f64::total_cmp);
    let n = cfg.n_runs;
    let points = cfg
        .eps_list
        .iter()
        .map(|&eps| {
            let hits = norms.partition_point(|&v| v <= eps);
            let p_hat = hits as f64 / n as f64;
            let y = if p_hat > 0.0 && p_hat < 1.0 { (-p_hat.ln()).ln() } else { f64::NAN };
            ScalingPoint { param: eps, x: eps.ln(), p_hat, stderr: binomial_stderr(p_hat, n), y, n_runs: n }
        })
        .collect();
    let scaling = ScalingFit::from_points(points);
    let target_slope = cfg.target_slope();
    let relative_error = scaling.fit.map(|f| (f.slope / target_slope - 1.0).abs());
    Ok(SmallBallResult { scaling, target_slope, relative_error })
}
