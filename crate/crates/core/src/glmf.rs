//! The alternating GLMF fitter.
//!
//! Starting from the top right singular vectors of a working-scale version
//! of `[X Z]`, each cycle updates
//!
//! 1. `U_y` from `Y` given `V`,
//! 2. `U` from `[X Z]` given `[V; V_z]`,
//! 3. `V` from `[X; Y]` given `[U; U_y]`,
//! 4. `V_z` from `Z` given `U`,
//!
//! each by heterogeneous IRLS, then refreshes the normal variances. Cycles
//! stop once the fitted means of all three blocks stop moving.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GlmfError, Result};
use crate::expfam::{Dispersion, DistributionSpec, Family};
use crate::irls::{self, solve_rows, IrlsProblem, Partition, ViewProblemData};
use crate::linalg::{sorted_svd, top_right_singular_vectors, vstack};
use crate::linked_model::{augment_cols, augment_rows, Factorization, LinkedDataset};

pub const DEFAULT_OUTER_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_MAX_OUTER_ITER: usize = 200;
const DISPERSION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Svd,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub rank: usize,
    pub outer_tolerance: f64,
    pub max_outer_iter: usize,
    pub seed: u64,
    pub init: InitMode,
    pub inner_tolerance: f64,
    pub inner_max_iter: usize,
}

impl FitConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            outer_tolerance: DEFAULT_OUTER_TOLERANCE,
            max_outer_iter: DEFAULT_MAX_OUTER_ITER,
            seed: 0,
            init: InitMode::Svd,
            inner_tolerance: irls::DEFAULT_TOLERANCE,
            inner_max_iter: irls::DEFAULT_MAX_ITER,
        }
    }

    pub fn validate(&self, dataset: &LinkedDataset) -> Result<()> {
        let (m1, n1, m2, n2) = dataset.dims();
        if self.rank == 0 {
            return Err(GlmfError::InvalidConfig("rank must be at least 1".into()));
        }
        if self.rank > m1.min(n1) || self.rank > m2 || self.rank > n2 {
            return Err(GlmfError::InvalidConfig(format!(
                "rank {} exceeds block dimensions ({m1}x{n1}, {m2}x{n1}, {m1}x{n2})",
                self.rank
            )));
        }
        if !(self.outer_tolerance > 0.0) || self.max_outer_iter == 0 {
            return Err(GlmfError::InvalidConfig(
                "outer tolerance and iteration cap must be positive".into(),
            ));
        }
        for spec in [dataset.spec_y(), dataset.spec_z()] {
            if spec.family == Family::Binomial {
                return Err(GlmfError::InvalidConfig(
                    "Y and Z carry no trial counts and cannot be binomial".into(),
                ));
            }
        }
        Ok(())
    }
}

fn working_scale(spec: DistributionSpec, x: f64, trials: f64) -> f64 {
    match spec.family {
        Family::Normal => x,
        Family::Binomial => {
            let p = (x + 0.5) / (trials + 1.0);
            (p / (1.0 - p)).ln()
        }
        Family::Poisson => (x + 0.5).ln(),
    }
}

/// Working-scale surrogate of `[X Z]`: empirical logits of the corrected
/// proportions for a binomial block, raw values for normal blocks.
pub fn initialization_surrogate(dataset: &LinkedDataset) -> DMatrix<f64> {
    let view = augment_cols(dataset);
    let mut out = view.data.clone();
    for block in &view.blocks {
        for j in block.range.clone() {
            for i in 0..out.nrows() {
                out[(i, j)] = working_scale(block.spec, view.data[(i, j)], view.trials[(i, j)]);
            }
        }
    }
    out
}

/// Initial `Ṽ = [V; V_z]`, (n1+n2)×r.
pub fn initialize(dataset: &LinkedDataset, config: &FitConfig) -> Result<DMatrix<f64>> {
    config.validate(dataset)?;
    let (_, n1, _, n2) = dataset.dims();
    match config.init {
        InitMode::Svd => top_right_singular_vectors(&initialization_surrogate(dataset), config.rank),
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let normal = Normal::new(0.0, 0.1).expect("valid normal");
            Ok(DMatrix::from_fn(n1 + n2, config.rank, |_, _| {
                normal.sample(&mut rng)
            }))
        }
    }
}

fn block_dispersion(spec: DistributionSpec, block: &DMatrix<f64>, rank: usize) -> Result<f64> {
    match (spec.family, spec.dispersion) {
        (Family::Normal, Dispersion::Estimated) => {
            let svd = sorted_svd(block)?;
            let resid = (block - svd.truncated(rank)).norm_squared() / block.len() as f64;
            Ok(resid.max(dispersion_floor(block)))
        }
        (_, Dispersion::Fixed(v)) => Ok(v),
        _ => Ok(1.0),
    }
}

fn dispersion_floor(block: &DMatrix<f64>) -> f64 {
    (1e-10 * block.norm_squared() / block.len().max(1) as f64).max(DISPERSION_FLOOR)
}

fn refresh_dispersion(spec: DistributionSpec, data: &DMatrix<f64>, theta: &DMatrix<f64>, current: f64) -> f64 {
    match (spec.family, spec.dispersion) {
        (Family::Normal, Dispersion::Estimated) => {
            let resid = (data - theta).norm_squared() / data.len() as f64;
            resid.max(dispersion_floor(data))
        }
        _ => current,
    }
}

/// The four response layouts used by one cycle, built once per fit.
struct CycleData {
    /// `Yᵀ`, n1×m2.
    y_t: ViewProblemData,
    /// `[X Z]ᵀ`, (n1+n2)×m1.
    cols_t: ViewProblemData,
    /// `[X; Y]`, (m1+m2)×n1.
    rows: ViewProblemData,
    /// `Z`, m1×n2.
    z: ViewProblemData,
}

fn single_block(data: DMatrix<f64>, spec: DistributionSpec) -> ViewProblemData {
    let weights = DMatrix::from_element(data.nrows(), data.ncols(), 1.0);
    let n = data.nrows();
    ViewProblemData {
        response: data,
        base_weights: weights,
        partitions: vec![Partition::new(0..n, spec.family, 1.0)],
    }
}

impl CycleData {
    fn new(dataset: &LinkedDataset) -> Result<Self> {
        Ok(Self {
            y_t: single_block(dataset.y().transpose(), dataset.spec_y()),
            cols_t: irls::view_problem(&augment_cols(dataset).transposed(), &[1.0, 1.0])?,
            rows: irls::view_problem(&augment_rows(dataset), &[1.0, 1.0])?,
            z: single_block(dataset.z().clone(), dataset.spec_z()),
        })
    }
}

struct Dispersions {
    x: f64,
    y: f64,
    z: f64,
}

struct Tally {
    ridge_events: usize,
    inner_nonconverged: usize,
}

fn run(
    data: &ViewProblemData,
    dispersions: &[f64],
    design: &DMatrix<f64>,
    start: Option<&DMatrix<f64>>,
    config: &FitConfig,
    tally: &mut Tally,
) -> Result<DMatrix<f64>> {
    let partitions = data
        .partitions
        .iter()
        .zip(dispersions)
        .map(|(p, &d)| Partition::new(p.rows.clone(), p.family, d))
        .collect();
    let mut problem = IrlsProblem::new(&data.response, &data.base_weights, partitions, design);
    problem.start = start;
    problem.tolerance = config.inner_tolerance;
    problem.max_iter = config.inner_max_iter;
    let sol = solve_rows(&problem)?;
    tally.ridge_events += sol.ridge_events;
    tally.inner_nonconverged += usize::from(!sol.converged);
    Ok(sol.coefficients)
}

/// Fit from the SVD (or random) initialization.
pub fn fit(dataset: &LinkedDataset, config: &FitConfig) -> Result<Factorization> {
    fit_from(dataset, config, None)
}

/// Fit, optionally continuing from a previous factorization of a dataset
/// with the same shape and rank.
pub fn fit_from(
    dataset: &LinkedDataset,
    config: &FitConfig,
    warm: Option<&Factorization>,
) -> Result<Factorization> {
    config.validate(dataset)?;
    let (m1, n1, m2, n2) = dataset.dims();
    let r = config.rank;
    let spec_x = dataset.spec_x();
    let spec_y = dataset.spec_y();
    let spec_z = dataset.spec_z();
    let cycle = CycleData::new(dataset)?;

    let (mut u, mut v, mut u_y, mut v_z, mut disp) = match warm {
        Some(w) => {
            if w.dims() != (m1, n1, m2, n2) || w.rank != r {
                return Err(GlmfError::Dimension(
                    "warm-start factorization does not match the dataset".into(),
                ));
            }
            let disp = Dispersions {
                x: if spec_x.family == Family::Normal {
                    spec_x.fixed_dispersion().unwrap_or(w.sigma2_x)
                } else {
                    1.0
                },
                y: spec_y.fixed_dispersion().unwrap_or(w.sigma2_y),
                z: spec_z.fixed_dispersion().unwrap_or(w.sigma2_z),
            };
            (Some(w.u.clone()), w.v.clone(), Some(w.u_y.clone()), w.v_z.clone(), disp)
        }
        None => {
            let v_tilde = initialize(dataset, config)?;
            let disp = Dispersions {
                x: block_dispersion(spec_x, dataset.x(), r)?,
                y: block_dispersion(spec_y, dataset.y(), r)?,
                z: block_dispersion(spec_z, dataset.z(), r)?,
            };
            (
                None,
                v_tilde.rows(0, n1).into_owned(),
                None,
                v_tilde.rows(n1, n2).into_owned(),
                disp,
            )
        }
    };

    let mut tally = Tally {
        ridge_events: 0,
        inner_nonconverged: 0,
    };
    let mut prev_means: Option<[DMatrix<f64>; 3]> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=config.max_outer_iter {
        iterations = it;

        // U_y | Y, V
        let start = u_y.as_ref().map(|uy| &v * uy.transpose());
        let new_u_y = run(&cycle.y_t, &[disp.y], &v, start.as_ref(), config, &mut tally)?;

        // U | [X Z], [V; V_z]
        let v_tilde = vstack(&v, &v_z);
        let start = u.as_ref().map(|u| &v_tilde * u.transpose());
        let new_u = run(
            &cycle.cols_t,
            &[disp.x, disp.z],
            &v_tilde,
            start.as_ref(),
            config,
            &mut tally,
        )?;

        // V | [X; Y], [U; U_y]
        let u_tilde = vstack(&new_u, &new_u_y);
        let start = &u_tilde * v.transpose();
        let new_v = run(
            &cycle.rows,
            &[disp.x, disp.y],
            &u_tilde,
            Some(&start),
            config,
            &mut tally,
        )?;

        // V_z | Z, U
        let start = &new_u * v_z.transpose();
        let new_v_z = run(&cycle.z, &[disp.z], &new_u, Some(&start), config, &mut tally)?;

        u = Some(new_u);
        u_y = Some(new_u_y);
        v = new_v;
        v_z = new_v_z;
        let (uu, uy) = (u.as_ref().unwrap(), u_y.as_ref().unwrap());

        let theta_x = uu * v.transpose();
        let theta_y = uy * v.transpose();
        let theta_z = uu * v_z.transpose();
        if spec_x.family == Family::Normal {
            disp.x = refresh_dispersion(spec_x, dataset.x(), &theta_x, disp.x);
        }
        disp.y = refresh_dispersion(spec_y, dataset.y(), &theta_y, disp.y);
        disp.z = refresh_dispersion(spec_z, dataset.z(), &theta_z, disp.z);

        let means = [
            theta_x.map(|t| spec_x.family.inverse_link(t)),
            theta_y.map(|t| spec_y.family.inverse_link(t)),
            theta_z.map(|t| spec_z.family.inverse_link(t)),
        ];
        if let Some(prev) = &prev_means {
            let change = means
                .iter()
                .zip(prev)
                .map(|(new, old)| crate::linalg::frobenius_relative_change(new, old))
                .fold(0.0f64, f64::max);
            trace.push(change);
            if change < config.outer_tolerance {
                converged = true;
                break;
            }
        }
        prev_means = Some(means);
    }

    if !converged {
        log::info!(
            "GLMF did not converge after {} cycles (rank {r})",
            config.max_outer_iter
        );
    }
    Ok(Factorization {
        u: u.expect("at least one cycle"),
        v,
        u_y: u_y.expect("at least one cycle"),
        v_z,
        rank: r,
        family_x: spec_x.family,
        family_y: spec_y.family,
        family_z: spec_z.family,
        sigma2_x: disp.x,
        sigma2_y: disp.y,
        sigma2_z: disp.z,
        converged,
        iterations,
        mu_trace: trace,
        ridge_events: tally.ridge_events,
        inner_nonconverged: tally.inner_nonconverged,
    })
}

/// Log-likelihood of the data under the fitted natural parameters: observed
/// cells of `X` on the count scale plus every cell of `Y` and `Z`.
pub fn joint_log_likelihood(dataset: &LinkedDataset, factorization: &Factorization) -> Result<f64> {
    let (m1, n1, m2, n2) = dataset.dims();
    if factorization.dims() != (m1, n1, m2, n2) {
        return Err(GlmfError::Dimension("factorization does not match the dataset".into()));
    }
    let rec = factorization.reconstruct();
    let fx = dataset.spec_x().family;
    let mut total = 0.0;
    for j in 0..n1 {
        for i in 0..m1 {
            if dataset.mask()[(i, j)] {
                total += fx.log_density(
                    dataset.x()[(i, j)],
                    rec.theta_x[(i, j)],
                    dataset.trials()[(i, j)],
                    factorization.sigma2_x,
                )?;
            }
        }
    }
    let fy = dataset.spec_y().family;
    for (y, t) in dataset.y().iter().zip(rec.theta_y.iter()) {
        total += fy.log_density(*y, *t, 1.0, factorization.sigma2_y)?;
    }
    let fz = dataset.spec_z().family;
    for (z, t) in dataset.z().iter().zip(rec.theta_z.iter()) {
        total += fz.log_density(*z, *t, 1.0, factorization.sigma2_z)?;
    }
    Ok(total)
}
