use serde::Serialize;

use crate::error::{Error, Result};
use crate::path::DiscretePath;

/// Paths with at most this many nodes get an exact all-pairs Holder scan.
pub const EXACT_PAIR_NODES: usize = 2000;

/// Holder norm settings for tubes: `0 < alpha < 1/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderConfig {
    alpha: f64,
    pair_budget: usize,
}

impl HolderConfig {
    pub const DEFAULT_PAIR_BUDGET: usize = 2_000_000;

    pub fn new(alpha: f64, pair_budget: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.25) {
            return Err(Error::InvalidParameter(format!("Holder exponent must lie in (0, 1/4), got {alpha}")));
        }
        if pair_budget == 0 {
            return Err(Error::InvalidParameter("pair budget must be positive".into()));
        }
        Ok(HolderConfig { alpha, pair_budget })
    }

    pub fn with_alpha(alpha: f64) -> Result<Self> {
        Self::new(alpha, Self::DEFAULT_PAIR_BUDGET)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pair_budget(&self) -> usize {
        self.pair_budget
    }
}

/// `value = sup + seminorm`; `stride > 1` means the seminorm was scanned on
/// every `stride`-th node only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderEstimate {
    pub value: f64,
    pub sup: f64,
    pub seminorm: f64,
    pub stride: usize,
}

/// `max_k |x_k|_inf`.
pub fn sup_norm(path: &DiscretePath) -> f64 {
    max_abs(path.as_flat())
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Holder norm of a path under a tube configuration.
pub fn holder_norm(path: &DiscretePath, cfg: &HolderConfig) -> HolderEstimate {
    holder_norm_nodes(path.as_flat(), path.node_len(), path.grid().dt(), cfg.alpha, cfg.pair_budget)
}

/// Holder norm of equally spaced nodes (`width` values each, spacing `dt`)
/// for any exponent `alpha` in `(0, 1)`.
pub fn holder_norm_nodes(data: &[f64], width: usize, dt: f64, alpha: f64, pair_budget: usize) -> HolderEstimate {
    debug_assert!(width > 0 && data.len().is_multiple_of(width));
    let n_nodes = data.len() / width;
    let stride = holder_stride(n_nodes, pair_budget);
    let sup = max_abs(data);
    let mut seminorm: f64 = 0.0;
    // node indices scanned: 0, stride, 2 stride, ... and always the last node
    let mut idx: Vec<usize> = (0..n_nodes).step_by(stride).collect();
    if idx.last() != Some(&(n_nodes - 1)) {
        idx.push(n_nodes - 1);
    }
    if width == 1 && stride == 1 {
        for lag in 1..n_nodes {
            let m = data[lag..].iter().zip(data).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            seminorm = seminorm.max(m * (lag as f64 * dt).powf(-alpha));
        }
    } else {
        for (a, &i) in idx.iter().enumerate() {
            let xi = &data[i * width..(i + 1) * width];
            for &j in &idx[a + 1..] {
                let xj = &data[j * width..(j + 1) * width];
                let d = xi.iter().zip(xj).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
                seminorm = seminorm.max(d * ((j - i) as f64 * dt).powf(-alpha));
            }
        }
    }
    HolderEstimate { value: sup + seminorm, sup, seminorm, stride }
}

/// Stride used by [`holder_norm_nodes`]: 1 up to [`EXACT_PAIR_NODES`] nodes,
/// otherwise the smallest stride keeping the scanned pair count within budget.
pub fn holder_stride(n_nodes: usize, pair_budget: usize) -> usize {
    if n_nodes <= EXACT_PAIR_NODES {
        return 1;
    }
    let pairs = |s: usize| {
        let m = n_nodes.div_ceil(s) + 1;
        m * (m - 1) / 2
    };
    let mut s = 1;
    while pairs(s) > pair_budget {
        s += 1;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::state::PhaseState;
    use proptest::prelude::*;

    fn scalar_path(n: usize, f: impl Fn(f64) -> f64) -> DiscretePath {
        // a 1-dof path whose p component is identically zero
        let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
        DiscretePath::from_fn(grid, 1, |t| PhaseState { q: vec![f(t)], p: vec![0.0] }).unwrap()
    }

    #[test]
    fn zero_path_has_zero_norms() {
        let path = scalar_path(100, |_| 0.0);
        assert_eq!(sup_norm(&path), 0.0);
        assert_eq!(holder_norm(&path, &HolderConfig::with_alpha(0.2).unwrap()).value, 0.0);
    }

    #[test]
    fn linear_path_norm_is_two() {
        let path = scalar_path(1000, |t| t);
        let h = holder_norm(&path, &HolderConfig::with_alpha(0.25 - 1e-12).unwrap());
        assert!((h.value - 2.0).abs() < 1e-9, "{h:?}");
        assert_eq!(h.stride, 1);
    }

    #[test]
    fn quadratic_path_matches_brute_force() {
        let alpha = 0.125;
        let path = scalar_path(1000, |t| t * t);
        let h = holder_norm(&path, &HolderConfig::with_alpha(alpha).unwrap());
        // brute force (t + r) |t - r|^(1 - alpha) over a dense grid
        let n = 10_000;
        let mut best: f64 = 0.0;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            for j in 0..i {
                let r = j as f64 / n as f64;
                best = best.max((t + r) * (t - r).powf(1.0 - alpha));
            }
        }
        assert!((h.value - (1.0 + best)).abs() < 1e-3, "{} vs {}", h.value, 1.0 + best);
    }

    #[test]
    fn large_paths_are_subsampled() {
        let path = scalar_path(9999, |t| t);
        let h = holder_norm(&path, &HolderConfig::new(0.1, 100_000).unwrap());
        assert!(h.stride > 1);
        // the endpoints are always scanned, so the linear path is still exact
        assert!((h.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn width_one_fast_path_matches_general_scan() {
        let data: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let fast = holder_norm_nodes(&data, 1, 0.01, 0.3, usize::MAX);
        // duplicate each value into a second channel to force the general loop
        let wide: Vec<f64> = data.iter().flat_map(|&v| [v, 0.5 * v]).collect();
        let general = holder_norm_nodes(&wide, 2, 0.01, 0.3, usize::MAX);
        assert_eq!(fast.value, general.value);
    }

    #[test]
    fn rejects_alpha_outside_range() {
        assert!(HolderConfig::with_alpha(0.25).is_err());
        assert!(HolderConfig::with_alpha(0.0).is_err());
        assert!(HolderConfig::new(0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn holder_norm_is_monotone_in_alpha(
            values in proptest::collection::vec(-5.0f64..5.0, 3..60),
            a in 0.01f64..0.24,
            b in 0.01f64..0.24,
        ) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let n = values.len() - 1;
            let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
            let data: Vec<f64> = values.iter().flat_map(|&v| [v, -v]).collect();
            let path = DiscretePath::from_flat(grid, 1, data).unwrap();
            let h_lo = holder_norm(&path, &HolderConfig::with_alpha(lo).unwrap()).value;
            let h_hi = holder_norm(&path, &HolderConfig::with_alpha(hi).unwrap()).value;
            prop_assert!(h_lo <= h_hi + 1e-12);
            prop_assert!(sup_norm(&path) <= h_lo);
        }
    }
}
