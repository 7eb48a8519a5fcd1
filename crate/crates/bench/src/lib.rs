//! Fixtures shared by the benchmarks.

use glmf_core::simgen::{self, SimulatedTruth};
use glmf_core::{Dims, LinkedDataset, SimulationConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A simulated linked dataset with square `X` of side `n` and side blocks a
/// quarter of that.
pub fn dataset(n: usize, rank: usize, missing_fraction: f64) -> (LinkedDataset, SimulatedTruth) {
    let mut config = SimulationConfig::new(0.5, 8, rank, 7);
    config.dims = Dims {
        m1: n,
        n1: n,
        m2: n / 4,
        n2: n / 4,
    };
    config.missing_fraction = missing_fraction;
    simgen::generate(&config).expect("valid simulation settings")
}

/// Binomial proportions, trial counts and a design for one column sweep.
pub fn binomial_problem(rows: usize, cols: usize, rank: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let design = DMatrix::from_fn(rows, rank, |_, _| rng.random_range(-1.0..1.0));
    let trials = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(1..=10) as f64);
    let props = DMatrix::from_fn(rows, cols, |i, j| (rng.random_range(0..=trials[(i, j)] as u32) as f64) / trials[(i, j)]);
    (props, trials, design)
}
