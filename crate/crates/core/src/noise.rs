//! Reproducible Wiener increments.
//!
//! Every standard normal is a pure function of
//! `(master_seed, run_index, step, channel)`: the run selects a ChaCha stream
//! and `(step, channel)` a fixed word offset inside it. Normals come from
//! Box-Muller on exactly two 64-bit words per pair, so offsets never drift.

use std::f64::consts::TAU;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    master_seed: u64,
    run_index: u64,
    channels: usize,
    next_step: u64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, run_index: u64, channels: usize) -> Self {
        assert!(channels > 0, "noise stream needs at least one channel");
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(run_index);
        NoiseStream { rng, master_seed, run_index, channels, next_step: 0 }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn run_index(&self) -> u64 {
        self.run_index
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn words_per_step(&self) -> u128 {
        // 4 u32 words per Box-Muller pair
        4 * self.channels.div_ceil(2) as u128
    }

    /// Standard normals for `step`, one per channel.
    pub fn standard_normals(&mut self, step: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.channels);
        if step != self.next_step {
            self.rng.set_word_pos(step as u128 * self.words_per_step());
        }
        for pair in out.chunks_mut(2) {
            let (z0, z1) = box_muller(self.rng.next_u64(), self.rng.next_u64());
            pair[0] = z0;
            if pair.len() > 1 {
                pair[1] = z1;
            }
        }
        self.next_step = step + 1;
    }

    /// Wiener increments `dW ~ N(0, dt)` for `step`.
    pub fn increments(&mut self, step: u64, dt: f64, out: &mut [f64]) {
        self.standard_normals(step, out);
        let s = dt.sqrt();
        out.iter_mut().for_each(|z| *z *= s);
    }
}

#[inline]
fn box_muller(a: u64, b: u64) -> (f64, f64) {
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    (r * c, r * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential() {
        let mut seq = NoiseStream::new(7, 3, 3);
        let mut all = Vec::new();
        for k in 0..50 {
            let mut z = [0.0; 3];
            seq.standard_normals(k, &mut z);
            all.push(z);
        }
        let mut jump = NoiseStream::new(7, 3, 3);
        for k in [41u64, 2, 17, 49, 0] {
            let mut z = [0.0; 3];
            jump.standard_normals(k, &mut z);
            assert_eq!(z, all[k as usize]);
        }
    }

    #[test]
    fn runs_and_seeds_differ() {
        let draw = |seed, run| {
            let mut z = [0.0; 2];
            NoiseStream::new(seed, run, 2).standard_normals(0, &mut z);
            z
        };
        assert_ne!(draw(1, 0), draw(1, 1));
        assert_ne!(draw(1, 0), draw(2, 0));
        assert_eq!(draw(1, 5), draw(1, 5));
    }

    #[test]
    fn moments_are_standard_normal() {
        let mut s = NoiseStream::new(11, 0, 4);
        let n = 50_000;
        let (mut sum, mut sq, mut cross) = (0.0, 0.0, 0.0);
        let mut z = [0.0; 4];
        for k in 0..n {
            s.standard_normals(k, &mut z);
            sum += z.iter().sum::<f64>();
            sq += z.iter().map(|v| v * v).sum::<f64>();
            cross += z[0] * z[1];
        }
        let m = (4 * n) as f64;
        assert!((sum / m).abs() < 5.0 / m.sqrt());
        assert!((sq / m - 1.0).abs() < 5.0 * (2.0 / m).sqrt());
        assert!((cross / n as f64).abs() < 5.0 / (n as f64).sqrt());
    }
}
