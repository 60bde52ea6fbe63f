use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{unit_uniform, HamiltonianModel, HessianBlocks};
use crate::diffusion::{ChannelSchedule, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::state::PhaseState;

/// Constants for the Sun-Earth-Moon system with the Sun pinned at the origin.
///
/// Only positions are fixed by the reference setup; the initial velocities are
/// tangential circular-orbit speeds (Earth 29780 m/s, Moon 1022 m/s faster),
/// which put the initial energy at about `-2.68e33 J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreeBodyParams {
    pub gravitational_constant: f64,
    pub sun_mass: f64,
    pub earth_mass: f64,
    pub moon_mass: f64,
    pub earth_position: [f64; 3],
    pub moon_position: [f64; 3],
    pub earth_velocity: [f64; 3],
    pub moon_velocity: [f64; 3],
    /// Multiplies the vector field so the system runs in compressed time.
    pub time_scale: f64,
    /// Noise coefficients for Earth positions, Earth momenta, Moon positions,
    /// Moon momenta.
    pub noise: [f64; 4],
}

impl Default for ThreeBodyParams {
    fn default() -> Self {
        ThreeBodyParams {
            gravitational_constant: 6.67430e-11,
            sun_mass: 1.989e30,
            earth_mass: 5.972e24,
            moon_mass: 7.348e22,
            earth_position: [1.496e11, 0.0, 0.0],
            moon_position: [1.496e11 + 3.844e8, 0.0, 0.0],
            earth_velocity: [0.0, 29780.0, 0.0],
            moon_velocity: [0.0, 29780.0 + 1022.0, 0.0],
            time_scale: 1.0,
            noise: [1e7, 1e24, 1e6, 1e23],
        }
    }
}

/// Earth and Moon moving in the field of a fixed Sun; 6 degrees of freedom,
/// `q = (x2, y2, z2, x3, y3, z3)` and `p` the matching momenta.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeBody {
    params: ThreeBodyParams,
}

fn norm3(v: &[f64]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Hessian of `-k / |r|`: `k (I / r^3 - 3 r r^T / r^5)`, added as `sign * K`
/// into the 3x3 block at (`row`, `col`) of an `n x n` matrix.
fn add_kepler_block(out: &mut [f64], n: usize, row: usize, col: usize, k: f64, r: &[f64], sign: f64) {
    let d = norm3(r);
    let d3 = d * d * d;
    let d5 = d3 * d * d;
    for a in 0..3 {
        for b in 0..3 {
            let delta = if a == b { 1.0 } else { 0.0 };
            out[(row + a) * n + col + b] += sign * k * (delta / d3 - 3.0 * r[a] * r[b] / d5);
        }
    }
}

impl ThreeBody {
    pub fn new(params: ThreeBodyParams) -> Result<Self> {
        let masses = [params.sun_mass, params.earth_mass, params.moon_mass];
        if masses.iter().any(|m| !(*m > 0.0)) || !(params.gravitational_constant > 0.0) {
            return Err(Error::InvalidParameter("three-body masses and G must be positive".into()));
        }
        if !(params.time_scale > 0.0) {
            return Err(Error::InvalidParameter(format!("time_scale must be positive, got {}", params.time_scale)));
        }
        if norm3(&params.earth_position) == 0.0 || norm3(&params.moon_position) == 0.0 {
            return Err(Error::InvalidParameter("bodies cannot start at the Sun".into()));
        }
        let sep: Vec<f64> = (0..3).map(|i| params.moon_position[i] - params.earth_position[i]).collect();
        if norm3(&sep) == 0.0 {
            return Err(Error::InvalidParameter("Earth and Moon cannot coincide".into()));
        }
        Ok(ThreeBody { params })
    }

    /// Default constants and their initial state.
    pub fn reference() -> (Self, PhaseState) {
        let model = ThreeBody::new(ThreeBodyParams::default()).expect("default constants are valid");
        let x0 = model.initial_state();
        (model, x0)
    }

    pub fn params(&self) -> &ThreeBodyParams {
        &self.params
    }

    pub fn initial_state(&self) -> PhaseState {
        let p = &self.params;
        let mut q = Vec::with_capacity(6);
        q.extend_from_slice(&p.earth_position);
        q.extend_from_slice(&p.moon_position);
        let mut mom = Vec::with_capacity(6);
        mom.extend(p.earth_velocity.iter().map(|v| v * p.earth_mass));
        mom.extend(p.moon_velocity.iter().map(|v| v * p.moon_mass));
        PhaseState { q, p: mom }
    }

    /// Diagonal noise with the configured per-body coefficients.
    pub fn diffusion(&self, intensity: f64) -> DiffusionSchedule {
        let [eq, ep, mq, mp] = self.params.noise;
        let c = ChannelSchedule::constant;
        DiffusionSchedule::new(
            vec![c(eq), c(eq), c(eq), c(mq), c(mq), c(mq)],
            vec![c(ep), c(ep), c(ep), c(mp), c(mp), c(mp)],
            intensity,
        )
        .expect("six channels each")
    }

    /// Kinetic and potential energy (unscaled) at `(q, p)`.
    pub fn energy_parts(&self, q: &[f64], p: &[f64]) -> (f64, f64) {
        let c = &self.params;
        let kin = p[..3].iter().map(|x| x * x).sum::<f64>() / (2.0 * c.earth_mass)
            + p[3..].iter().map(|x| x * x).sum::<f64>() / (2.0 * c.moon_mass);
        let d: Vec<f64> = (0..3).map(|i| q[3 + i] - q[i]).collect();
        let g = c.gravitational_constant;
        let pot = -g
            * (c.sun_mass * c.earth_mass / norm3(&q[..3])
                + c.sun_mass * c.moon_mass / norm3(&q[3..])
                + c.earth_mass * c.moon_mass / norm3(&d));
        (kin, pot)
    }
}

impl HamiltonianModel for ThreeBody {
    fn name(&self) -> &str {
        "three_body"
    }

    fn dim(&self) -> usize {
        6
    }

    fn energy(&self, _t: f64, q: &[f64], p: &[f64]) -> f64 {
        let (k, v) = self.energy_parts(q, p);
        self.params.time_scale * (k + v)
    }

    fn grad_q(&self, _t: f64, q: &[f64], _p: &[f64], out: &mut [f64]) {
        let c = &self.params;
        let g = c.gravitational_constant;
        let s = c.time_scale;
        let (r2, r3) = q.split_at(3);
        let d: Vec<f64> = (0..3).map(|i| r3[i] - r2[i]).collect();
        let n2 = norm3(r2).powi(3);
        let n3 = norm3(r3).powi(3);
        let nd = norm3(&d).powi(3);
        for i in 0..3 {
            let pair = g * c.earth_mass * c.moon_mass * d[i] / nd;
            out[i] = s * (g * c.sun_mass * c.earth_mass * r2[i] / n2 - pair);
            out[3 + i] = s * (g * c.sun_mass * c.moon_mass * r3[i] / n3 + pair);
        }
    }

    fn grad_p(&self, _t: f64, _q: &[f64], p: &[f64], out: &mut [f64]) {
        let c = &self.params;
        for i in 0..3 {
            out[i] = c.time_scale * p[i] / c.earth_mass;
            out[3 + i] = c.time_scale * p[3 + i] / c.moon_mass;
        }
    }

    fn hessian(&self, _t: f64, q: &[f64], _p: &[f64]) -> Option<HessianBlocks> {
        let c = &self.params;
        let g = c.gravitational_constant;
        let n = 6;
        let mut h = HessianBlocks::zeros(n);
        let (r2, r3) = q.split_at(3);
        let d: Vec<f64> = (0..3).map(|i| r3[i] - r2[i]).collect();
        let k_em = g * c.earth_mass * c.moon_mass;
        add_kepler_block(&mut h.qq, n, 0, 0, g * c.sun_mass * c.earth_mass, r2, 1.0);
        add_kepler_block(&mut h.qq, n, 3, 3, g * c.sun_mass * c.moon_mass, r3, 1.0);
        add_kepler_block(&mut h.qq, n, 0, 0, k_em, &d, 1.0);
        add_kepler_block(&mut h.qq, n, 3, 3, k_em, &d, 1.0);
        add_kepler_block(&mut h.qq, n, 0, 3, k_em, &d, -1.0);
        add_kepler_block(&mut h.qq, n, 3, 0, k_em, &d, -1.0);
        for i in 0..3 {
            h.pp[i * n + i] = 1.0 / c.earth_mass;
            h.pp[(3 + i) * n + 3 + i] = 1.0 / c.moon_mass;
        }
        let s = c.time_scale;
        h.qq.iter_mut().chain(h.pp.iter_mut()).for_each(|v| *v *= s);
        Some(h)
    }

    fn is_separable(&self) -> bool {
        true
    }

    fn typical_scales(&self) -> PhaseState {
        let c = &self.params;
        let sep = 3.844e8;
        PhaseState {
            q: vec![sep; 6],
            p: [c.earth_mass; 3].iter().chain(&[c.moon_mass; 3]).map(|m| m * 3e4).collect(),
        }
    }

    /// Jitters the reference state: positions by up to 1e7 m, momenta by up to 5%.
    fn sample_state(&self, rng: &mut ChaCha8Rng) -> PhaseState {
        let mut s = self.initial_state();
        let scales = self.typical_scales();
        for q in s.q.iter_mut() {
            *q += 1e7 * (2.0 * unit_uniform(rng) - 1.0);
        }
        for (p, scale) in s.p.iter_mut().zip(&scales.p) {
            *p += 0.05 * scale * (2.0 * unit_uniform(rng) - 1.0);
        }
        s
    }
}
