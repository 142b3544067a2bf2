//! Seeded Brownian increments with exact coarsening.
//!
//! Each path draws from its own ChaCha8 stream: the generator is seeded from
//! `seed` and the stream number is the `path_id`, so the k-th increment of a
//! path is a pure function of `(seed, path_id, k)`. Paths never share state and
//! can be generated in any order or in parallel.
//!
//! Increments are rounded to multiples of 2^-40. Sums of such numbers are exact
//! in `f64` as long as partial sums stay below 2^13 in magnitude, so coarsening
//! telescopes bit-for-bit regardless of how the additions are grouped.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::normal::standard_normal;
use crate::{Error, Result};

const QUANTUM: f64 = 1.0 / 1_099_511_627_776.0; // 2^-40
const INV_QUANTUM: f64 = 1_099_511_627_776.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    h_fine: f64,
    increments: Vec<f64>,
    seed: u64,
    path_id: u64,
}

impl BrownianGrid {
    /// Wraps caller-supplied increments, e.g. a zero path for deterministic runs.
    pub fn from_increments(h_fine: f64, increments: Vec<f64>) -> Result<Self> {
        if !(h_fine > 0.0 && h_fine.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {h_fine}")));
        }
        if increments.iter().any(|dw| !dw.is_finite()) {
            return Err(Error::invalid("increments must be finite"));
        }
        Ok(Self {
            h_fine,
            increments,
            seed: 0,
            path_id: 0,
        })
    }

    pub fn h(&self) -> f64 {
        self.h_fine
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    /// Time horizon covered by the grid.
    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.h_fine
    }

    /// W(k h) for k = 0..=n_steps, summed left to right.
    pub fn path(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = 0.0;
        w.push(acc);
        for dw in &self.increments {
            acc += dw;
            w.push(acc);
        }
        w
    }

    /// Merges each run of `factor` consecutive increments into one.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        coarsen(self, factor)
    }
}

fn stream(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

#[inline]
fn quantize(x: f64) -> f64 {
    (x * INV_QUANTUM).round() * QUANTUM
}

/// Standard normal draw number `step` of path `path_id`, by random access.
pub fn standard_normal_at(seed: u64, path_id: u64, step: u64) -> f64 {
    let mut rng = stream(seed, path_id);
    rng.set_word_pos(2 * step as u128);
    standard_normal(rng.next_u64())
}

/// Draws `n_steps` i.i.d. N(0, h_fine) increments for one path.
pub fn make_brownian_grid(seed: u64, path_id: u64, h_fine: f64, n_steps: usize) -> Result<BrownianGrid> {
    if !(h_fine > 0.0 && h_fine.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {h_fine}")));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    let scale = h_fine.sqrt();
    let mut rng = stream(seed, path_id);
    let increments = (0..n_steps)
        .map(|_| quantize(scale * standard_normal(rng.next_u64())))
        .collect();
    Ok(BrownianGrid {
        h_fine,
        increments,
        seed,
        path_id,
    })
}

pub fn coarsen(grid: &BrownianGrid, factor: usize) -> Result<BrownianGrid> {
    if factor == 0 || !grid.n_steps().is_multiple_of(factor) {
        return Err(Error::invalid(format!(
            "coarsening factor {factor} does not divide {} steps",
            grid.n_steps()
        )));
    }
    let increments = grid
        .increments
        .chunks_exact(factor)
        .map(|block| block.iter().fold(0.0, |acc, dw| acc + dw))
        .collect();
    Ok(BrownianGrid {
        h_fine: grid.h_fine * factor as f64,
        increments,
        seed: grid.seed,
        path_id: grid.path_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_increments() {
        let a = make_brownian_grid(1, 0, 0.001, 3).unwrap();
        let b = make_brownian_grid(1, 0, 0.001, 3).unwrap();
        assert_eq!(a.increments(), b.increments());
        assert_eq!(a.n_steps(), 3);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(make_brownian_grid(1, 0, 0.001, 0), Err(Error::InvalidArgument(_))));
        assert!(make_brownian_grid(1, 0, 0.0, 5).is_err());
        assert!(make_brownian_grid(1, 0, -1.0, 5).is_err());
        assert!(make_brownian_grid(1, 0, f64::NAN, 5).is_err());
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        // sd of the mean of 1e6 draws at h = 0.01 is 0.1 / 1000
        let grid = make_brownian_grid(7, 3, 0.01, 1_000_000).unwrap();
        let mean = grid.increments().iter().sum::<f64>() / grid.n_steps() as f64;
        assert!(mean.abs() < 4.0 * 0.1 / 1000.0, "mean = {mean}");
        let var = grid.increments().iter().map(|x| (x - mean).powi(2)).sum::<f64>()
            / (grid.n_steps() - 1) as f64;
        // sd of the variance estimate is about h * sqrt(2 / n)
        assert!((var - 0.01).abs() < 4.0 * 0.01 * (2.0f64 / 1e6).sqrt(), "var = {var}");
    }

    #[test]
    fn coarsen_sums_blocks() {
        let grid = BrownianGrid::from_increments(0.5, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let coarse = grid.coarsen(2).unwrap();
        assert_eq!(coarse.increments(), &[3.0, 7.0]);
        assert_eq!(coarse.h(), 1.0);
        assert_eq!(grid.coarsen(1).unwrap(), grid);
        assert!(matches!(grid.coarsen(3), Err(Error::InvalidArgument(_))));
        assert!(grid.coarsen(0).is_err());
    }

    #[test]
    fn random_access_matches_sequential() {
        let grid = make_brownian_grid(11, 5, 1.0, 64).unwrap();
        for k in [0u64, 1, 17, 63] {
            let z = standard_normal_at(11, 5, k);
            assert_eq!(quantize(z), grid.increments()[k as usize]);
        }
    }

    #[test]
    fn other_path_ids_give_other_streams() {
        let a = make_brownian_grid(1, 0, 0.1, 16).unwrap();
        let b = make_brownian_grid(1, 1, 0.1, 16).unwrap();
        let c = make_brownian_grid(2, 0, 0.1, 16).unwrap();
        assert_ne!(a.increments(), b.increments());
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn path_is_running_sum() {
        let grid = BrownianGrid::from_increments(1.0, vec![0.5, -0.25, 1.0]).unwrap();
        assert_eq!(grid.path(), vec![0.0, 0.5, 0.25, 1.25]);
        assert_eq!(grid.horizon(), 3.0);
    }
}
