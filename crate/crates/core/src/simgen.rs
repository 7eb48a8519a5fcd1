//! Reproducible generators for linked simulation studies.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GlmfError, Result};
use crate::expfam::logistic;
use crate::linked_model::LinkedDataset;

/// Component standard deviations of the imputation study.
pub const STUDY_SIGMAS: [f64; 4] = [0.1, 0.3, 0.5, 0.7];
pub const STUDY_NMAX: [u32; 4] = [1, 2, 8, 16];
pub const STUDY_RANKS: [usize; 3] = [1, 2, 3];
pub const STUDY_REPLICATES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub m1: usize,
    pub n1: usize,
    pub m2: usize,
    pub n2: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            m1: 200,
            n1: 200,
            m2: 50,
            n2: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Standard deviation of every score and loading entry.
    pub sigma: f64,
    /// Trials are uniform on `1..=nmax`.
    pub nmax: u32,
    pub rank: usize,
    pub dims: Dims,
    /// Variance of the normal noise on `Y` and `Z`.
    pub error_variance: f64,
    pub missing_fraction: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(sigma: f64, nmax: u32, rank: usize, seed: u64) -> Self {
        Self {
            sigma,
            nmax,
            rank,
            dims: Dims::default(),
            error_variance: 0.09,
            missing_fraction: 0.20,
            seed,
        }
    }

    /// The single illustrative fit: rank 3, components and noise read as
    /// variances 0.4 and 0.1, trials on 1..=8, nothing missing.
    pub fn illustrative(seed: u64) -> Self {
        Self {
            sigma: 0.4f64.sqrt(),
            nmax: 8,
            rank: 3,
            dims: Dims::default(),
            error_variance: 0.1,
            missing_fraction: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if !(self.sigma >= 0.0 && self.sigma.is_finite())
            || self.nmax == 0
            || self.rank == 0
            || !(self.error_variance > 0.0)
            || !(0.0..1.0).contains(&self.missing_fraction)
            || d.m1 == 0
            || d.n1 == 0
            || d.m2 == 0
            || d.n2 == 0
        {
            return Err(GlmfError::InvalidConfig(format!(
                "invalid simulation configuration {self:?}"
            )));
        }
        Ok(())
    }
}

/// Ground truth behind a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTruth {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub u_y: DMatrix<f64>,
    pub v_z: DMatrix<f64>,
    pub theta_x: DMatrix<f64>,
    pub theta_y: DMatrix<f64>,
    pub theta_z: DMatrix<f64>,
    pub p_true: DMatrix<f64>,
    pub trials: DMatrix<f64>,
    /// Every drawn count, including the cells hidden by the mask.
    pub x_full: DMatrix<f64>,
    pub mask: DMatrix<bool>,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
    if sd == 0.0 {
        return DMatrix::zeros(rows, cols);
    }
    let normal = Normal::new(0.0, sd).expect("finite sd");
    DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

/// Draw one linked dataset. Every quantity is a function of the seed alone.
pub fn generate(config: &SimulationConfig) -> Result<(LinkedDataset, SimulatedTruth)> {
    config.validate()?;
    let Dims { m1, n1, m2, n2 } = config.dims;
    let r = config.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let u = normal_matrix(&mut rng, m1, r, config.sigma);
    let v = normal_matrix(&mut rng, n1, r, config.sigma);
    let u_y = normal_matrix(&mut rng, m2, r, config.sigma);
    let v_z = normal_matrix(&mut rng, n2, r, config.sigma);
    let theta_x = &u * v.transpose();
    let theta_y = &u_y * v.transpose();
    let theta_z = &u * v_z.transpose();
    let p_true = theta_x.map(logistic);

    let trials = DMatrix::from_fn(m1, n1, |_, _| rng.random_range(1..=config.nmax) as f64);
    let mut x_full = DMatrix::zeros(m1, n1);
    for j in 0..n1 {
        for i in 0..m1 {
            let b = Binomial::new(trials[(i, j)] as u64, p_true[(i, j)])
                .map_err(|e| GlmfError::InvalidConfig(e.to_string()))?;
            x_full[(i, j)] = b.sample(&mut rng) as f64;
        }
    }
    let noise_sd = config.error_variance.sqrt();
    let y = &theta_y + normal_matrix(&mut rng, m2, n1, noise_sd);
    let z = &theta_z + normal_matrix(&mut rng, m1, n2, noise_sd);

    let cells = m1 * n1;
    let n_missing = (config.missing_fraction * cells as f64).round() as usize;
    let mut mask = DMatrix::from_element(m1, n1, true);
    for idx in sample(&mut rng, cells, n_missing) {
        mask[(idx % m1, idx / m1)] = false;
    }

    let dataset = LinkedDataset::new(x_full.clone(), trials.clone(), y, z, mask.clone())?;
    Ok((
        dataset,
        SimulatedTruth {
            u,
            v,
            u_y,
            v_z,
            theta_x,
            theta_y,
            theta_z,
            p_true,
            trials,
            x_full,
            mask,
        },
    ))
}

/// The parameter grid of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub sigmas: Vec<f64>,
    pub nmaxes: Vec<u32>,
    pub ranks: Vec<usize>,
    pub replicates: usize,
    pub dims: Dims,
    pub error_variance: f64,
    pub missing_fraction: f64,
    pub master_seed: u64,
}

impl GridSpec {
    /// The full 4 × 4 × 3 × 3 design.
    pub fn study(master_seed: u64) -> Self {
        Self {
            sigmas: STUDY_SIGMAS.to_vec(),
            nmaxes: STUDY_NMAX.to_vec(),
            ranks: STUDY_RANKS.to_vec(),
            replicates: STUDY_REPLICATES,
            dims: Dims::default(),
            error_variance: 0.09,
            missing_fraction: 0.20,
            master_seed,
        }
    }
}

/// One experiment cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub sigma_index: usize,
    pub nmax_index: usize,
    pub replicate: usize,
    pub config: SimulationConfig,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed for one grid cell: SplitMix64 folded over
/// `(master, σ index, nmax index, rank, replicate)`.
pub fn cell_seed(master: u64, sigma_index: usize, nmax_index: usize, rank: usize, replicate: usize) -> u64 {
    [sigma_index, nmax_index, rank, replicate]
        .iter()
        .fold(mix64(master), |h, &k| mix64(h ^ (k as u64)))
}

/// Every `(σ, nmax, r, replicate)` combination in σ-major order.
pub fn grid(spec: &GridSpec) -> impl Iterator<Item = GridCell> + '_ {
    spec.sigmas.iter().enumerate().flat_map(move |(si, &sigma)| {
        spec.nmaxes.iter().enumerate().flat_map(move |(ni, &nmax)| {
            spec.ranks.iter().flat_map(move |&rank| {
                (0..spec.replicates).map(move |rep| GridCell {
                    sigma_index: si,
                    nmax_index: ni,
                    replicate: rep,
                    config: SimulationConfig {
                        sigma,
                        nmax,
                        rank,
                        dims: spec.dims,
                        error_variance: spec.error_variance,
                        missing_fraction: spec.missing_fraction,
                        seed: cell_seed(spec.master_seed, si, ni, rank, rep),
                    },
                })
            })
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(sigma: f64, seed: u64) -> SimulationConfig {
        let mut c = SimulationConfig::new(sigma, 16, 3, seed);
        c.dims = Dims {
            m1: 40,
            n1: 30,
            m2: 10,
            n2: 8,
        };
        c
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small(0.5, 4)).unwrap();
        let b = generate(&small(0.5, 4)).unwrap();
        assert_eq!(a, b);
        let c = generate(&small(0.5, 5)).unwrap();
        assert_ne!(a.1.x_full, c.1.x_full);
    }

    #[test]
    fn degenerate_components_give_half() {
        let (_, truth) = generate(&small(0.0, 1)).unwrap();
        assert!(truth.p_true.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn counts_stay_within_trials_and_mask_size_is_exact() {
        let (data, truth) = generate(&small(0.7, 2)).unwrap();
        for (x, n) in truth.x_full.iter().zip(truth.trials.iter()) {
            assert!(*x >= 0.0 && x <= n && *n >= 1.0 && *n <= 16.0);
        }
        let expected = (0.8f64 * 1200.0).round() as usize;
        assert_eq!(data.observed_count(), expected);
        assert_eq!(truth.p_true, truth.theta_x.map(logistic));
    }

    #[test]
    fn noise_variance_matches_configuration() {
        let (data, truth) = generate(&SimulationConfig::new(0.3, 2, 1, 8)).unwrap();
        let resid = data.y() - &truth.theta_y;
        let var = resid.norm_squared() / resid.len() as f64;
        assert!((var - 0.09).abs() < 0.05 * 0.09, "var = {var}");
    }

    #[test]
    fn larger_sigma_spreads_probabilities() {
        let sd = |m: &DMatrix<f64>| {
            let mean = m.mean();
            (m.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m.len() - 1) as f64).sqrt()
        };
        let (_, lo) = generate(&small(0.1, 21)).unwrap();
        let (_, hi) = generate(&small(0.7, 21)).unwrap();
        assert!(sd(&hi.p_true) > 3.0 * sd(&lo.p_true));
    }

    #[test]
    fn grid_sizes() {
        let spec = GridSpec::study(1);
        assert_eq!(grid(&spec).count(), 144);
        let mut one = spec.clone();
        one.replicates = 1;
        assert_eq!(grid(&one).count(), 48);
        let reduced = GridSpec {
            sigmas: vec![0.1, 0.7],
            nmaxes: vec![16],
            ranks: vec![1, 3],
            replicates: 2,
            ..spec
        };
        let cells: Vec<_> = grid(&reduced).collect();
        assert_eq!(cells.len(), 8);
        let mut seeds: Vec<u64> = cells.iter().map(|c| c.config.seed).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 8);
    }

    #[test]
    fn cell_seed_is_stable() {
        assert_eq!(cell_seed(7, 1, 2, 3, 0), cell_seed(7, 1, 2, 3, 0));
        assert_ne!(cell_seed(7, 1, 2, 3, 0), cell_seed(7, 1, 2, 3, 1));
    }
}
