//! Deterministic random-number sub-streams.
//!
//! Every random draw in a run is taken from a ChaCha stream addressed by
//! `(seed, iteration, component, phase)`, so results do not depend on the
//! number of components processed, their order, or the worker count.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Phase {
    Init = 1,
    Exploration = 2,
    Entropy = 3,
    Synthetic = 4,
}

pub fn stream(seed: u64, iteration: usize, component: usize, phase: Phase) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = ((iteration as u64) << 32) | ((component as u64 & 0xff_ffff) << 8) | phase as u64;
    rng.set_stream(id);
    rng
}

/// `rows × cols` matrix of independent standard-normal variates.
pub fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // filled row by row so that a prefix of rows is stable when `rows` grows
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            out[(i, j)] = StandardNormal.sample(rng);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, 3, 1, Phase::Exploration).random();
        let b: u64 = stream(7, 3, 1, Phase::Exploration).random();
        let c: u64 = stream(7, 3, 2, Phase::Exploration).random();
        let d: u64 = stream(7, 4, 1, Phase::Exploration).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
