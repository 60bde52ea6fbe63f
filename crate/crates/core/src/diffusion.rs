//! Time-dependent diagonal diffusion `sigma_q(t)`, `sigma_p(t)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One diagonal entry, `offset + amplitude * sin(frequency * t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSchedule {
    pub offset: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl ChannelSchedule {
    pub const fn constant(value: f64) -> Self {
        ChannelSchedule { offset: value, amplitude: 0.0, frequency: 0.0, phase: 0.0 }
    }

    pub const fn sine(offset: f64, amplitude: f64, frequency: f64) -> Self {
        ChannelSchedule { offset, amplitude, frequency, phase: 0.0 }
    }

    pub const fn cosine(offset: f64, amplitude: f64, frequency: f64) -> Self {
        ChannelSchedule { offset, amplitude, frequency, phase: FRAC_PI_2 }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if self.amplitude == 0.0 {
            self.offset
        } else {
            self.offset + self.amplitude * (self.frequency * t + self.phase).sin()
        }
    }

    fn is_finite(&self) -> bool {
        self.offset.is_finite() && self.amplitude.is_finite() && self.frequency.is_finite() && self.phase.is_finite()
    }

    /// Exact `((min, t_min), (max, t_max))` over `[t0, t1]`.
    pub fn extremes_on(&self, t0: f64, t1: f64) -> ((f64, f64), (f64, f64)) {
        let mut lo = (self.eval(t0), t0);
        let mut hi = lo;
        let mut visit = |v: f64, t: f64| {
            if v < lo.0 {
                lo = (v, t);
            }
            if v > hi.0 {
                hi = (v, t);
            }
        };
        visit(self.eval(t1), t1);
        if self.amplitude != 0.0 && self.frequency != 0.0 {
            let u0 = self.frequency * t0 + self.phase;
            let u1 = self.frequency * t1 + self.phase;
            let (ua, ub) = if u0 <= u1 { (u0, u1) } else { (u1, u0) };
            // critical points of sin at pi/2 + k pi; two consecutive ones cover both extremes
            let k_first = ((ua - FRAC_PI_2) / PI).ceil() as i64;
            let k_last = ((ub - FRAC_PI_2) / PI).floor() as i64;
            for k in k_first..=k_last.min(k_first + 1) {
                let u = FRAC_PI_2 + k as f64 * PI;
                let t = (u - self.phase) / self.frequency;
                let s = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                visit(self.offset + self.amplitude * s, t);
            }
        }
        (lo, hi)
    }
}

/// Diagonal diffusion matrices scaled by a global noise intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    sigma_q: Vec<ChannelSchedule>,
    sigma_p: Vec<ChannelSchedule>,
    intensity: f64,
    /// Declared `[m, M]`; when absent only strict positivity is required.
    bounds: Option<(f64, f64)>,
}

impl DiffusionSchedule {
    pub fn new(sigma_q: Vec<ChannelSchedule>, sigma_p: Vec<ChannelSchedule>, intensity: f64) -> Result<Self> {
        if sigma_q.is_empty() || sigma_q.len() != sigma_p.len() {
            return Err(Error::InvalidParameter(format!(
                "diffusion needs matching non-empty q/p channels, got {} and {}",
                sigma_q.len(),
                sigma_p.len()
            )));
        }
        if sigma_q.iter().chain(&sigma_p).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("diffusion coefficients must be finite".into()));
        }
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(Error::InvalidParameter(format!("noise intensity must be finite and >= 0, got {intensity}")));
        }
        Ok(DiffusionSchedule { sigma_q, sigma_p, intensity, bounds: None })
    }

    /// `sigma = value * I` in every channel.
    pub fn constant(dim: usize, value: f64, intensity: f64) -> Result<Self> {
        let c = ChannelSchedule::constant(value);
        Self::new(vec![c; dim], vec![c; dim], intensity)
    }

    /// Builds from full matrices, accepting only diagonal ones.
    pub fn from_matrices(sigma_q: &[Vec<f64>], sigma_p: &[Vec<f64>], intensity: f64) -> Result<Self> {
        let diag = |m: &[Vec<f64>]| -> Result<Vec<ChannelSchedule>> {
            let mut out = Vec::with_capacity(m.len());
            for (i, row) in m.iter().enumerate() {
                if row.len() != m.len() {
                    return Err(Error::DimensionMismatch { expected: m.len(), found: row.len() });
                }
                if let Some(j) = row.iter().enumerate().position(|(j, v)| j != i && *v != 0.0) {
                    return Err(Error::NonDiagonalDiffusion { row: i, col: j });
                }
                out.push(ChannelSchedule::constant(row[i]));
            }
            Ok(out)
        };
        Self::new(diag(sigma_q)?, diag(sigma_p)?, intensity)
    }

    /// `sigma_q = 1 + sin t`, `sigma_p = 1 + 2 cos 3t` for one degree of freedom.
    pub fn periodic_oscillator() -> Self {
        Self::new(vec![ChannelSchedule::sine(1.0, 1.0, 1.0)], vec![ChannelSchedule::cosine(1.0, 2.0, 3.0)], 1.0)
            .expect("valid schedule")
    }

    /// Noise of the coupled oscillators: `2 + sin t`, `2 + cos t` on `(q1, p1)`
    /// and `1 + 2 sin t`, `1 + 2 cos t` on `(q2, p2)`.
    pub fn periodic_coupled(intensity: f64) -> Result<Self> {
        Self::new(
            vec![ChannelSchedule::sine(2.0, 1.0, 1.0), ChannelSchedule::sine(1.0, 2.0, 1.0)],
            vec![ChannelSchedule::cosine(2.0, 1.0, 1.0), ChannelSchedule::cosine(1.0, 2.0, 1.0)],
            intensity,
        )
    }

    /// Declares the admissible band `0 < m <= sigma <= M`.
    pub fn with_bounds(mut self, m: f64, big_m: f64) -> Result<Self> {
        if !(m > 0.0 && big_m >= m && big_m.is_finite()) {
            return Err(Error::InvalidParameter(format!("need 0 < m <= M, got m = {m}, M = {big_m}")));
        }
        self.bounds = Some((m, big_m));
        Ok(self)
    }

    pub fn with_intensity(mut self, intensity: f64) -> Self {
        assert!(intensity >= 0.0 && intensity.is_finite(), "intensity must be finite and >= 0");
        self.intensity = intensity;
        self
    }

    /// Multiplies every entry (and any declared bounds) by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0, "scale factor must be positive");
        let scale = |c: &ChannelSchedule| ChannelSchedule {
            offset: c.offset * factor,
            amplitude: c.amplitude * factor,
            ..*c
        };
        DiffusionSchedule {
            sigma_q: self.sigma_q.iter().map(scale).collect(),
            sigma_p: self.sigma_p.iter().map(scale).collect(),
            intensity: self.intensity,
            bounds: self.bounds.map(|(m, big_m)| (m * factor, big_m * factor)),
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma_q.len()
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn channels_q(&self) -> &[ChannelSchedule] {
        &self.sigma_q
    }

    pub fn channels_p(&self) -> &[ChannelSchedule] {
        &self.sigma_p
    }

    pub fn declared_bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    /// Writes `[sigma_q(t), sigma_p(t)]` (without the intensity) into `out`.
    #[inline]
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            out[i] = self.sigma_q[i].eval(t);
            out[n + i] = self.sigma_p[i].eval(t);
        }
    }

    /// Checks the diagonal stays inside the declared band (or strictly
    /// positive) on `[t0, t1]` and returns the observed `(min, max)`.
    pub fn check_bounds(&self, t0: f64, t1: f64) -> Result<(f64, f64)> {
        let (lo_allowed, hi_allowed) = self.bounds.unwrap_or((0.0, f64::INFINITY));
        let strict = self.bounds.is_none();
        let mut overall = (f64::INFINITY, f64::NEG_INFINITY);
        let channels = self.sigma_q.iter().map(|c| ("sigma_q", c)).chain(self.sigma_p.iter().map(|c| ("sigma_p", c)));
        let n = self.dim();
        for (idx, (kind, c)) in channels.enumerate() {
            let ((lo, t_lo), (hi, t_hi)) = c.extremes_on(t0, t1);
            let label = || format!("{kind}[{}]", idx % n + 1);
            if lo < lo_allowed || (strict && lo <= 0.0) {
                return Err(Error::DiffusionBound { channel: label(), time: t_lo, value: lo });
            }
            if hi > hi_allowed {
                return Err(Error::DiffusionBound { channel: label(), time: t_hi, value: hi });
            }
            overall = (overall.0.min(lo), overall.1.max(hi));
        }
        Ok(overall)
    }
}
