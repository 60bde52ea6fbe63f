use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares on at least two points with distinct abscissae.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!("a line needs two points, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r2 })
}

/// One Monte Carlo estimate in a scaling study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    /// The raw parameter (noise intensity, ratio, ball radius).
    pub param: f64,
    /// Abscissa used in the fit.
    pub x: f64,
    pub p_hat: f64,
    pub stderr: f64,
    /// Ordinate used in the fit; not finite when `p_hat` is 0 (or 1 where the
    /// transform needs `p_hat < 1`).
    pub y: f64,
    pub n_runs: usize,
}

/// A table of estimates with a line fitted through the resolvable ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub points: Vec<ScalingPoint>,
    /// Parameters whose ordinate was not finite and were left out of the fit.
    pub excluded: Vec<f64>,
    /// Present when at least three points were usable.
    pub fit: Option<LinearFit>,
}

impl ScalingFit {
    pub const MIN_POINTS: usize = 3;

    pub fn from_points(points: Vec<ScalingPoint>) -> Self {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            points.iter().filter(|p| p.y.is_finite() && p.p_hat > 0.0).map(|p| (p.x, p.y)).unzip();
        let excluded = points.iter().filter(|p| !(p.y.is_finite() && p.p_hat > 0.0)).map(|p| p.param).collect();
        let fit = if xs.len() >= Self::MIN_POINTS { linear_fit(&xs, &ys).ok() } else { None };
        ScalingFit { points, excluded, fit }
    }

    pub fn require_fit(&self) -> Result<LinearFit> {
        self.fit.ok_or_else(|| {
            Error::InsufficientData(format!(
                "{} of {} points resolvable, need {}",
                self.points.len() - self.excluded.len(),
                self.points.len(),
                Self::MIN_POINTS
            ))
        })
    }
}

/// Binomial standard error `sqrt(p (1 - p) / n)`.
pub fn binomial_stderr(p_hat: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line_is_recovered() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 0.5).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14 && (f.intercept - 0.5).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unresolvable_points_are_excluded() {
        let pt = |param: f64, p_hat: f64| ScalingPoint {
            param,
            x: param,
            p_hat,
            stderr: 0.0,
            y: p_hat.ln(),
            n_runs: 10,
        };
        let s = ScalingFit::from_points(vec![pt(1.0, 0.5), pt(2.0, 0.0), pt(3.0, 0.2)]);
        assert_eq!(s.excluded, vec![2.0]);
        assert!(s.fit.is_none());
        assert!(s.require_fit().is_err());
        let s = ScalingFit::from_points(vec![pt(1.0, 0.5), pt(2.0, 0.3), pt(3.0, 0.2)]);
        assert!(s.fit.is_some());
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn r2_is_a_fraction(
            pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            if let Ok(f) = linear_fit(&x, &y) {
                prop_assert!(f.r2 >= -1e-12 && f.r2 <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn binomial_stderr_is_bounded(p in 0.0f64..=1.0, n in 1usize..100_000) {
            let s = binomial_stderr(p, n);
            prop_assert!(s >= 0.0 && s <= 0.5 / (n as f64).sqrt() + 1e-15);
        }
    }
}
