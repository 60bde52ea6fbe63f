use serde::Serialize;

use super::ensemble::EnsembleSpec;
use super::fit::{ScalingFit, ScalingPoint};
use super::girsanov::{girsanov_tube_probability, TiltKind};
use super::tube::{tube_probability, TubeSpec};
use crate::error::{Error, Result};
use crate::model::HamiltonianModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LdpEstimator {
    Plain,
    Girsanov(TiltKind),
}

/// `eps^2 ln P(X in tube)` across noise intensities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpScan {
    /// `param = eps`, `x = eps^2`, `y = eps^2 ln p_hat`; the intercept of
    /// the fit extrapolates to `-inf J` over the tube.
    pub scaling: ScalingFit,
    /// Whether `y` never decreases as `eps` shrinks.
    pub monotone: bool,
    /// Importance-sampling runs whose log-weight was clamped, all intensities.
    pub clamped: usize,
}

impl LdpScan {
    /// `y` at the smallest resolvable intensity.
    pub fn smallest_eps_value(&self) -> Option<f64> {
        self.scaling
            .points
            .iter()
            .filter(|p| p.y.is_finite())
            .min_by(|a, b| a.param.total_cmp(&b.param))
            .map(|p| p.y)
    }
}

pub fn ldp_scan<M: HamiltonianModel + ?Sized>(
    spec: &EnsembleSpec<'_, M>,
    tube: &TubeSpec,
    eps_list: &[f64],
    estimator: LdpEstimator,
) -> Result<LdpScan> {
    if eps_list.len() < 3 {
        return Err(Error::InvalidParameter(format!("an LDP scan needs at least three intensities, got {}", eps_list.len())));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidParameter("noise intensities must be positive".into()));
    }
    let mut points = Vec::with_capacity(eps_list.len());
    let mut clamped = 0;
    for &eps in eps_list {
        let s = spec.with_intensity(eps);
        let (p_hat, stderr) = match estimator {
            LdpEstimator::Plain => {
                let e = tube_probability(&s, tube)?;
                (e.p_hat, e.stderr)
            }
            LdpEstimator::Girsanov(kind) => {
                let e = girsanov_tube_probability(&s, tube, kind)?;
                clamped += e.clamped;
                (e.p_hat, e.stderr)
            }
        };
        let y = if p_hat > 0.0 { eps * eps * p_hat.ln() } else { f64::NEG_INFINITY };
        points.push(ScalingPoint { param: eps, x: eps * eps, p_hat, stderr, y, n_runs: s.n_runs });
    }
    let mut ordered: Vec<&ScalingPoint> = points.iter().filter(|p| p.y.is_finite()).collect();
    ordered.sort_by(|a, b| b.param.total_cmp(&a.param));
    let monotone = ordered.windows(2).all(|w| w[1].y >= w[0].y);
    Ok(LdpScan { scaling: ScalingFit::from_points(points), monotone, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DiffusionSchedule;
    use crate::grid::TimeGrid;
    use crate::integrate::rk4;
    use crate::model::HarmonicOscillator;
    use crate::path::DiscretePath;
    use crate::state::PhaseState;

    #[test]
    fn flow_centred_tube_tends_to_zero() {
        let (m, x0) = HarmonicOscillator::with_initial(1.0, 1.0, 50.0, 0.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let tube = TubeSpec::sup(rk4(&m, &x0, &grid).unwrap(), 1.0).unwrap();
        let spec = EnsembleSpec::new(&m, DiffusionSchedule::constant(1, 1.0, 1.0).unwrap(), x0, grid, 2000, 3);
        let scan = ldp_scan(&spec, &tube, &[0.8, 0.4, 0.2], LdpEstimator::Plain).unwrap();
        assert!(scan.monotone, "{:?}", scan.scaling.points);
        assert!(scan.smallest_eps_value().unwrap() > -0.05);
    }

    #[test]
    fn off_flow_tube_has_a_negative_limit() {
        // zero-drift system, tube around a straight line of slope 1 in q
        let free = HarmonicOscillator::new(1.0, 1e-12).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let line = DiscretePath::from_fn(grid, 1, |t| PhaseState { q: vec![t], p: vec![0.0] }).unwrap();
        let tube = TubeSpec::sup(line, 0.3).unwrap();
        let x0 = PhaseState::new(vec![0.0], vec![0.0]).unwrap();
        let spec = EnsembleSpec::new(&free, DiffusionSchedule::constant(1, 1.0, 1.0).unwrap(), x0, grid, 4000, 5);
        let scan = ldp_scan(&spec, &tube, &[0.3, 0.2, 0.15, 0.1], LdpEstimator::Girsanov(TiltKind::DriftControl)).unwrap();
        let fit = scan.scaling.require_fit().unwrap();
        // inf J over the tube is below J(line) = 1/2 and well above zero
        assert!(fit.intercept < -0.05 && fit.intercept > -0.5, "{fit:?}");
    }

    #[test]
    fn needs_three_intensities() {
        let (m, x0) = HarmonicOscillator::with_initial(1.0, 1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let tube = TubeSpec::sup(rk4(&m, &x0, &grid).unwrap(), 1.0).unwrap();
        let spec = EnsembleSpec::new(&m, DiffusionSchedule::constant(1, 1.0, 1.0).unwrap(), x0, grid, 10, 3);
        assert!(ldp_scan(&spec, &tube, &[0.2, 0.1], LdpEstimator::Plain).is_err());
    }
}
