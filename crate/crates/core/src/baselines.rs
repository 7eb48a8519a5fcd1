//! Comparison predictors: pooled mean, log5, PCA, logistic PCA and LMF.

use nalgebra::DMatrix;

use crate::error::{GlmfError, Result};
use crate::expfam::{DistributionSpec, Family};
use crate::glmf::{self, FitConfig};
use crate::irls::{solve_rows, IrlsProblem, Partition};
use crate::linalg::{frobenius_relative_change, sorted_svd, top_right_singular_vectors};
use crate::linked_model::{Factorization, LinkedDataset};

/// Default probability clipping bounds.
pub const CLIP: (f64, f64) = (0.001, 0.999);

pub fn clip(p: f64, bounds: (f64, f64)) -> f64 {
    p.clamp(bounds.0, bounds.1)
}

fn check_shapes(x: &DMatrix<f64>, trials: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<()> {
    if x.shape() != trials.shape() || x.shape() != mask.shape() {
        return Err(GlmfError::Dimension("X, N and mask must share a shape".into()));
    }
    Ok(())
}

/// Σ hits / Σ at-bats over observed cells.
pub fn pooled_average(x: &DMatrix<f64>, trials: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<f64> {
    check_shapes(x, trials, mask)?;
    let (mut hits, mut ab) = (0.0, 0.0);
    for ((h, n), &m) in x.iter().zip(trials.iter()).zip(mask.iter()) {
        if m {
            hits += h;
            ab += n;
        }
    }
    if ab > 0.0 {
        Ok(hits / ab)
    } else {
        Err(GlmfError::NoObservedCells)
    }
}

/// Every cell predicted by the pooled league average.
pub fn mean_predict(x: &DMatrix<f64>, trials: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<DMatrix<f64>> {
    let avg = pooled_average(x, trials, mask)?;
    Ok(DMatrix::from_element(x.nrows(), x.ncols(), avg))
}

/// Row (batter) and column (pitcher) pooled averages; `None` for margins
/// without observed at-bats.
pub fn margin_averages(
    x: &DMatrix<f64>,
    trials: &DMatrix<f64>,
    mask: &DMatrix<bool>,
) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let (m, n) = x.shape();
    let mut rh = vec![0.0; m];
    let mut rn = vec![0.0; m];
    let mut ch = vec![0.0; n];
    let mut cn = vec![0.0; n];
    for j in 0..n {
        for i in 0..m {
            if mask[(i, j)] {
                rh[i] += x[(i, j)];
                rn[i] += trials[(i, j)];
                ch[j] += x[(i, j)];
                cn[j] += trials[(i, j)];
            }
        }
    }
    let avg = |h: Vec<f64>, n: Vec<f64>| {
        h.into_iter()
            .zip(n)
            .map(|(h, n)| (n > 0.0).then(|| h / n))
            .collect()
    };
    (avg(rh, rn), avg(ch, cn))
}

/// `p̂_ij = P_j · B_i / T`, clipped.
pub fn log5_predict(batters: &[f64], pitchers: &[f64], league: f64, bounds: (f64, f64)) -> Result<DMatrix<f64>> {
    if !(league > 0.0) {
        return Err(GlmfError::InvalidData(format!("league average {league} must be positive")));
    }
    Ok(DMatrix::from_fn(batters.len(), pitchers.len(), |i, j| {
        clip(pitchers[j] * batters[i] / league, bounds)
    }))
}

/// log5 with margins estimated from the observed cells. Margins without
/// data fall back to the league average.
pub fn log5_from_data(
    x: &DMatrix<f64>,
    trials: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    bounds: (f64, f64),
) -> Result<DMatrix<f64>> {
    let league = pooled_average(x, trials, mask)?;
    let (rows, cols) = margin_averages(x, trials, mask);
    let b: Vec<f64> = rows.into_iter().map(|v| v.unwrap_or(league)).collect();
    let p: Vec<f64> = cols.into_iter().map(|v| v.unwrap_or(league)).collect();
    log5_predict(&b, &p, league, bounds)
}

/// One PCA pass over a complete probability matrix: standardize columns,
/// keep the top `rank` singular triplets, undo the standardization.
pub fn pca_impute_step(p: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    let (m, n) = p.shape();
    if rank == 0 || rank > m.min(n) {
        return Err(GlmfError::InvalidConfig(format!("PCA rank {rank} for a {m}x{n} matrix")));
    }
    let mut centers = vec![0.0; n];
    let mut scales = vec![1.0; n];
    let mut std = p.clone();
    for j in 0..n {
        let col = p.column(j);
        let mean = col.mean();
        let var = if m > 1 {
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        let sd = var.sqrt();
        centers[j] = mean;
        if sd > 1e-12 * mean.abs().max(1.0) {
            scales[j] = sd;
        }
        for i in 0..m {
            std[(i, j)] = (p[(i, j)] - mean) / scales[j];
        }
    }
    let mut rec = sorted_svd(&std)?.truncated(rank);
    for j in 0..n {
        for i in 0..m {
            rec[(i, j)] = rec[(i, j)] * scales[j] + centers[j];
        }
    }
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpcaFit {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub p_hat: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Logistic PCA, `Θ = U Vᵀ` maximizing the binomial likelihood of `x`
/// (counts, possibly fractional) given `trials`, by alternating IRLS.
pub fn lpca_fit(
    x: &DMatrix<f64>,
    trials: &DMatrix<f64>,
    rank: usize,
    config: &FitConfig,
    warm: Option<&LpcaFit>,
) -> Result<LpcaFit> {
    let (m, n) = x.shape();
    if trials.shape() != (m, n) {
        return Err(GlmfError::Dimension("X and N must share a shape".into()));
    }
    if rank == 0 || rank > m.min(n) {
        return Err(GlmfError::InvalidConfig(format!("LPCA rank {rank} for a {m}x{n} matrix")));
    }
    let props = DMatrix::from_fn(m, n, |i, j| {
        let t = trials[(i, j)];
        if t > 0.0 {
            x[(i, j)] / t
        } else {
            0.5
        }
    });
    let props_t = props.transpose();
    let trials_t = trials.transpose();

    let (mut u, mut v) = match warm {
        Some(w) if w.u.shape() == (m, rank) && w.v.shape() == (n, rank) => (Some(w.u.clone()), w.v.clone()),
        _ => {
            let logits = DMatrix::from_fn(m, n, |i, j| {
                let p = (x[(i, j)] + 0.5) / (trials[(i, j)] + 1.0);
                (p / (1.0 - p)).ln()
            });
            (None, top_right_singular_vectors(&logits, rank)?)
        }
    };

    let mut prev: Option<DMatrix<f64>> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut theta = DMatrix::zeros(m, n);
    for it in 1..=config.max_outer_iter {
        iterations = it;
        let start = u.as_ref().map(|u| &v * u.transpose());
        let mut prob = IrlsProblem::new(&props_t, &trials_t, vec![Partition::new(0..n, Family::Binomial, 1.0)], &v);
        prob.start = start.as_ref();
        prob.tolerance = config.inner_tolerance;
        prob.max_iter = config.inner_max_iter;
        let new_u = solve_rows(&prob)?.coefficients;

        let start = &new_u * v.transpose();
        let mut prob = IrlsProblem::new(&props, trials, vec![Partition::new(0..m, Family::Binomial, 1.0)], &new_u);
        prob.start = Some(&start);
        prob.tolerance = config.inner_tolerance;
        prob.max_iter = config.inner_max_iter;
        v = solve_rows(&prob)?.coefficients;
        u = Some(new_u);

        theta = u.as_ref().unwrap() * v.transpose();
        let p = theta.map(|t| Family::Binomial.inverse_link(t));
        if let Some(old) = &prev {
            if frobenius_relative_change(&p, old) < config.outer_tolerance {
                converged = true;
                prev = Some(p);
                break;
            }
        }
        prev = Some(p);
    }
    Ok(LpcaFit {
        u: u.expect("at least one iteration"),
        v,
        theta,
        p_hat: prev.expect("at least one iteration"),
        iterations,
        converged,
    })
}

/// The all-normal special case of GLMF on a dataset whose `X` block already
/// holds probabilities. Every block gets unit variance, which makes the
/// alternating IRLS plain alternating least squares.
pub fn lmf_dataset(dataset: &LinkedDataset, p_hat: &DMatrix<f64>) -> Result<LinkedDataset> {
    let ones = DMatrix::from_element(p_hat.nrows(), p_hat.ncols(), 1.0);
    dataset
        .filled(p_hat.clone(), ones, DistributionSpec::normal(1.0))?
        .with_side_specs(DistributionSpec::normal(1.0), DistributionSpec::normal(1.0))
}

pub fn lmf_fit(
    dataset: &LinkedDataset,
    p_hat: &DMatrix<f64>,
    config: &FitConfig,
    warm: Option<&Factorization>,
) -> Result<Factorization> {
    glmf::fit_from(&lmf_dataset(dataset, p_hat)?, config, warm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_mean_examples() {
        let x = DMatrix::from_element(1, 1, 1.0);
        let n = DMatrix::from_element(1, 1, 4.0);
        let mask = DMatrix::from_element(1, 1, true);
        assert!(mean_predict(&x, &n, &mask).unwrap().iter().all(|&p| p == 0.25));

        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let n = DMatrix::from_element(1, 2, 2.0);
        let mask = DMatrix::from_element(1, 2, true);
        assert!(mean_predict(&x, &n, &mask).unwrap().iter().all(|&p| p == 0.25));

        let none = DMatrix::from_element(1, 2, false);
        assert!(matches!(mean_predict(&x, &n, &none), Err(GlmfError::NoObservedCells)));
    }

    #[test]
    fn log5_examples() {
        let p = log5_predict(&[0.3], &[0.2], 0.25, CLIP).unwrap();
        assert!((p[(0, 0)] - 0.24).abs() < 1e-15);
        let p = log5_predict(&[0.27], &[0.27], 0.27, CLIP).unwrap();
        assert!((p[(0, 0)] - 0.27).abs() < 1e-15);
        let p = log5_predict(&[0.9], &[0.9], 0.2, CLIP).unwrap();
        assert_eq!(p[(0, 0)], 0.999);
        assert!(log5_predict(&[0.3], &[0.3], 0.0, CLIP).is_err());
    }

    #[test]
    fn log5_scale_consistency() {
        let b = [0.21, 0.3, 0.26];
        let p = [0.19, 0.33];
        let t = 0.25;
        let c = 1.3;
        let wide = (f64::MIN_POSITIVE, f64::MAX);
        let base = log5_predict(&b, &p, t, wide).unwrap();
        let bs: Vec<f64> = b.iter().map(|v| v * c).collect();
        let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
        let scaled = log5_predict(&bs, &ps, t * c, wide).unwrap();
        assert!((scaled - base * c).abs().max() < 1e-15);
    }

    #[test]
    fn log5_falls_back_to_league_for_empty_margins() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let n = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]);
        let mask = DMatrix::from_row_slice(2, 2, &[true, false, false, false]);
        let p = log5_from_data(&x, &n, &mask, CLIP).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn pca_exact_low_rank() {
        let a = [0.2, 0.4, 0.1, 0.3];
        let b = [1.0, 0.5, 2.0];
        let p = DMatrix::from_fn(4, 3, |i, j| a[i] * b[j]);
        // Column standardization of a rank-1 matrix stays rank 1.
        let rec = pca_impute_step(&p, 1).unwrap();
        assert!((rec - &p).abs().max() < 1e-10);
    }

    #[test]
    fn pca_full_rank_is_identity_and_constant_columns_survive() {
        let mut p = DMatrix::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1 + 0.05);
        p.column_mut(1).fill(0.3);
        let rec = pca_impute_step(&p, 3).unwrap();
        assert!((rec - &p).abs().max() < 1e-8);
        assert!(pca_impute_step(&p, 4).is_err());
    }

    #[test]
    fn lpca_symmetric_data_gives_half() {
        let x = DMatrix::from_element(8, 6, 2.0);
        let n = DMatrix::from_element(8, 6, 4.0);
        for rank in 1..=2 {
            let fit = lpca_fit(&x, &n, rank, &FitConfig::new(rank), None).unwrap();
            assert!(fit.theta.abs().max() < 1e-6);
            assert!(fit.p_hat.iter().all(|&p| (p - 0.5).abs() < 1e-6));
        }
    }
}
