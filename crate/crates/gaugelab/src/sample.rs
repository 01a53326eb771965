//! Seeded band-limited trigonometric fields.
//!
//! The mode data is drawn once from an explicit seed and then evaluated in
//! closed form at any point, so the same continuum field can be sampled on a
//! coarse grid and its refinement without re-rolling.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::algebra::Su2;
use crate::grid::{DiscreteForm, Grid};

#[derive(Debug, Clone)]
struct Mode {
    k: [i32; 3],
    amp: f64,
    phase: f64,
}

/// Real-valued band-limited periodic function on the torus.
#[derive(Debug, Clone)]
pub struct SmoothScalar {
    dim: usize,
    len: f64,
    modes: Vec<Mode>,
}

impl SmoothScalar {
    pub fn random(dim: usize, len: f64, max_wave: i32, n_modes: usize, amp: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut modes = Vec::with_capacity(n_modes);
        for _ in 0..n_modes {
            let mut k = [0i32; 3];
            for ka in k.iter_mut().take(dim) {
                *ka = rng.random_range(-max_wave..=max_wave);
            }
            modes.push(Mode {
                k,
                amp: amp * rng.random_range(-1.0..1.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            });
        }
        SmoothScalar { dim, len, modes }
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let w = std::f64::consts::TAU / self.len;
        self.modes
            .iter()
            .map(|m| {
                let mut arg = m.phase;
                for a in 0..self.dim {
                    arg += w * m.k[a] as f64 * x[a];
                }
                m.amp * arg.cos()
            })
            .sum()
    }

    pub fn sample(&self, grid: Grid) -> DiscreteForm<f64> {
        DiscreteForm::from_fn(grid, 0, |s| vec![self.eval(grid.position(s))])
    }
}

/// su(2)-valued band-limited 1-form: one scalar per (direction, generator).
#[derive(Debug, Clone)]
pub struct SmoothSu2OneForm {
    dim: usize,
    comps: Vec<SmoothScalar>, // dim * 3 scalars
}

impl SmoothSu2OneForm {
    pub fn random(dim: usize, len: f64, max_wave: i32, n_modes: usize, amp: f64, rng: &mut ChaCha8Rng) -> Self {
        let comps = (0..dim * 3)
            .map(|_| SmoothScalar::random(dim, len, max_wave, n_modes, amp, rng))
            .collect();
        SmoothSu2OneForm { dim, comps }
    }

    pub fn from_seed(dim: usize, len: f64, seed: u64, amp: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random(dim, len, 2, 3, amp, &mut rng)
    }

    pub fn from_seed_band(dim: usize, len: f64, seed: u64, amp: f64, max_wave: i32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random(dim, len, max_wave, 3, amp, &mut rng)
    }

    pub fn eval(&self, x: [f64; 3]) -> Vec<Su2> {
        (0..self.dim)
            .map(|mu| {
                Su2::new(
                    self.comps[mu * 3].eval(x),
                    self.comps[mu * 3 + 1].eval(x),
                    self.comps[mu * 3 + 2].eval(x),
                )
            })
            .collect()
    }

    pub fn sample(&self, grid: Grid) -> DiscreteForm<Su2> {
        assert_eq!(grid.dim(), self.dim);
        DiscreteForm::from_fn(grid, 1, |s| self.eval(grid.position(s)))
    }
}

/// Smooth su(2)-valued 0-form, for gauge-map generators and test functions.
#[derive(Debug, Clone)]
pub struct SmoothSu2Scalar {
    comps: [SmoothScalar; 3],
}

impl SmoothSu2Scalar {
    pub fn random(dim: usize, len: f64, max_wave: i32, n_modes: usize, amp: f64, rng: &mut ChaCha8Rng) -> Self {
        let mk = |rng: &mut ChaCha8Rng| SmoothScalar::random(dim, len, max_wave, n_modes, amp, rng);
        SmoothSu2Scalar { comps: [mk(rng), mk(rng), mk(rng)] }
    }

    pub fn eval(&self, x: [f64; 3]) -> Su2 {
        Su2::new(self.comps[0].eval(x), self.comps[1].eval(x), self.comps[2].eval(x))
    }
}
