//! Iterative imputation of missing success probabilities.
//!
//! Missing cells start at the average of their row and column rates. Each
//! pass fits a method to the filled data and replaces the missing cells with
//! its fitted probabilities, until those stop changing. GLMF and logistic
//! PCA see the missing cells as one pseudo-trial whose success count is the
//! current probability; LMF and PCA see the probability matrix directly.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, clip, LpcaFit, CLIP};
use crate::error::{GlmfError, Result};
use crate::expfam::DistributionSpec;
use crate::glmf::{self, FitConfig};
use crate::linked_model::{Factorization, LinkedDataset};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Glmf,
    Lmf,
    Lpca,
    Pca,
    Log5,
    Mean,
}

impl Method {
    /// Table order.
    pub const ALL: [Method; 6] = [
        Method::Glmf,
        Method::Lmf,
        Method::Lpca,
        Method::Pca,
        Method::Log5,
        Method::Mean,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Glmf => "GLMF",
            Method::Lmf => "LMF",
            Method::Lpca => "LPCA",
            Method::Pca => "PCA",
            Method::Log5 => "Log5",
            Method::Mean => "Mean",
        }
    }

    /// Whether the method has a rank; mean and log5 do not.
    pub fn is_ranked(self) -> bool {
        !matches!(self, Method::Log5 | Method::Mean)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = GlmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "glmf" => Ok(Method::Glmf),
            "lmf" => Ok(Method::Lmf),
            "lpca" => Ok(Method::Lpca),
            "pca" => Ok(Method::Pca),
            "log5" => Ok(Method::Log5),
            "mean" => Ok(Method::Mean),
            other => Err(GlmfError::Parse(format!(
                "unknown method `{other}` (expected glmf, lmf, lpca, pca, log5 or mean)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeConfig {
    pub tolerance: f64,
    pub max_iter: usize,
    pub clip: (f64, f64),
    /// Start every inner fit from the previous pass's factorization.
    pub warm_start: bool,
    /// Inner fitter settings; the rank is overridden per call.
    pub fit: FitConfig,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
            clip: CLIP,
            warm_start: true,
            fit: FitConfig::new(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationResult {
    /// Clipped probability estimate for every cell.
    #[serde(with = "crate::linked_model::row_major")]
    pub p_hat: DMatrix<f64>,
    pub method: Method,
    pub rank: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute change over missing cells, per pass.
    pub trace: Vec<f64>,
    /// Inner fits that stopped at their iteration cap.
    pub inner_nonconverged: usize,
    /// Message of the inner failure that stopped the loop, if any.
    pub error: Option<String>,
    /// Final GLMF or LMF factorization.
    pub factorization: Option<Factorization>,
}

/// Starting probabilities: observed cells keep `x / N`, missing cells get
/// the mean of their pooled row and column rates (or whichever exists, or
/// the league rate). Missing cells are assigned one trial.
pub fn initialize_missing(
    x: &DMatrix<f64>,
    trials: &DMatrix<f64>,
    mask: &DMatrix<bool>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let league = baselines::pooled_average(x, trials, mask)?;
    let (rows, cols) = baselines::margin_averages(x, trials, mask);
    let (m, n) = x.shape();
    let mut p = DMatrix::zeros(m, n);
    let mut t = trials.clone();
    for j in 0..n {
        for i in 0..m {
            if mask[(i, j)] {
                p[(i, j)] = x[(i, j)] / trials[(i, j)];
            } else {
                p[(i, j)] = match (rows[i], cols[j]) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => league,
                };
                t[(i, j)] = 1.0;
            }
        }
    }
    Ok((p, t))
}

/// Count-scale X for binomial fitters: observed counts, and the current
/// probability as a fractional success on one pseudo-trial elsewhere.
fn pseudo_counts(dataset: &LinkedDataset, p: &DMatrix<f64>) -> DMatrix<f64> {
    let mask = dataset.mask();
    DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| {
        if mask[(i, j)] {
            dataset.x()[(i, j)]
        } else {
            p[(i, j)]
        }
    })
}

/// The filled dataset a factorization method fits on its first pass.
pub fn first_pass_dataset(dataset: &LinkedDataset, method: Method) -> Result<LinkedDataset> {
    let (p, trials) = initialize_missing(dataset.x(), dataset.trials(), dataset.mask())?;
    match method {
        Method::Glmf => dataset.filled(pseudo_counts(dataset, &p), trials, DistributionSpec::binomial()),
        Method::Lmf => baselines::lmf_dataset(dataset, &p),
        other => Err(GlmfError::InvalidConfig(format!(
            "{other} has no linked factorization"
        ))),
    }
}

fn validate_rank(dataset: &LinkedDataset, method: Method, rank: usize) -> Result<()> {
    if method.is_ranked() {
        let (m1, n1, m2, n2) = dataset.dims();
        let mut limit = m1.min(n1);
        if matches!(method, Method::Glmf | Method::Lmf) {
            limit = limit.min(m2).min(n2);
        }
        if rank == 0 || rank > limit {
            return Err(GlmfError::InvalidConfig(format!(
                "rank {rank} is outside 1..={limit} for {method}"
            )));
        }
    }
    Ok(())
}

pub fn impute(dataset: &LinkedDataset, method: Method, rank: usize, config: &ImputeConfig) -> Result<ImputationResult> {
    impute_from(dataset, method, rank, config, None)
}

/// Imputation whose first GLMF/LMF pass is replaced by `first_fit`, a
/// factorization of [`first_pass_dataset`].
pub fn impute_from(
    dataset: &LinkedDataset,
    method: Method,
    rank: usize,
    config: &ImputeConfig,
    first_fit: Option<&Factorization>,
) -> Result<ImputationResult> {
    validate_rank(dataset, method, rank)?;
    if !(config.tolerance > 0.0) || config.max_iter == 0 {
        return Err(GlmfError::InvalidConfig("imputation tolerance and cap must be positive".into()));
    }
    let bounds = config.clip;
    if !(0.0 < bounds.0 && bounds.0 < bounds.1 && bounds.1 < 1.0) {
        return Err(GlmfError::InvalidConfig(format!("clip bounds {bounds:?} must lie inside (0, 1)")));
    }
    let (x, trials, mask) = (dataset.x(), dataset.trials(), dataset.mask());
    let clipped = |m: &DMatrix<f64>| m.map(|v| clip(v, bounds));

    let one_shot = |p_hat: DMatrix<f64>| ImputationResult {
        p_hat,
        method,
        rank,
        iterations: 1,
        converged: true,
        trace: vec![0.0],
        inner_nonconverged: 0,
        error: None,
        factorization: None,
    };
    match method {
        Method::Mean => return Ok(one_shot(clipped(&baselines::mean_predict(x, trials, mask)?))),
        Method::Log5 => return Ok(one_shot(baselines::log5_from_data(x, trials, mask, bounds)?)),
        _ => {}
    }

    let (mut p, pseudo_trials) = initialize_missing(x, trials, mask)?;
    let missing: Vec<(usize, usize)> = (0..p.ncols())
        .flat_map(|j| (0..p.nrows()).map(move |i| (i, j)))
        .filter(|&(i, j)| !mask[(i, j)])
        .collect();
    let mut fit_cfg = config.fit.clone();
    fit_cfg.rank = rank;

    let mut factorization: Option<Factorization> = first_fit.cloned();
    let mut lpca: Option<LpcaFit> = None;
    let mut fitted: Option<DMatrix<f64>> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut inner_nonconverged = 0;
    let mut error = None;
    let mut iterations = 0;

    for it in 1..=config.max_iter {
        let step: Result<DMatrix<f64>> = (|| match method {
            Method::Glmf => {
                let f = if it == 1 && first_fit.is_some() {
                    factorization.clone().expect("first fit")
                } else {
                    let filled = dataset.filled(pseudo_counts(dataset, &p), pseudo_trials.clone(), DistributionSpec::binomial())?;
                    let warm = if config.warm_start { factorization.as_ref() } else { None };
                    glmf::fit_from(&filled, &fit_cfg, warm)?
                };
                inner_nonconverged += usize::from(!f.converged);
                let means = f.reconstruct().mean_x;
                factorization = Some(f);
                Ok(means)
            }
            Method::Lmf => {
                let f = if it == 1 && first_fit.is_some() {
                    factorization.clone().expect("first fit")
                } else {
                    let warm = if config.warm_start { factorization.as_ref() } else { None };
                    baselines::lmf_fit(dataset, &p, &fit_cfg, warm)?
                };
                inner_nonconverged += usize::from(!f.converged);
                let means = f.reconstruct().mean_x;
                factorization = Some(f);
                Ok(means)
            }
            Method::Lpca => {
                let warm = if config.warm_start { lpca.as_ref() } else { None };
                let f = baselines::lpca_fit(&pseudo_counts(dataset, &p), &pseudo_trials, rank, &fit_cfg, warm)?;
                inner_nonconverged += usize::from(!f.converged);
                let means = f.p_hat.clone();
                lpca = Some(f);
                Ok(means)
            }
            Method::Pca => baselines::pca_impute_step(&p, rank),
            Method::Mean | Method::Log5 => unreachable!(),
        })();
        let new = match step {
            Ok(m) => m,
            Err(e) => {
                log::warn!("{method} rank {rank}: inner fit failed on pass {it}: {e}");
                error = Some(e.to_string());
                break;
            }
        };
        iterations = it;
        let mut change = 0.0f64;
        for &(i, j) in &missing {
            change = change.max((new[(i, j)] - p[(i, j)]).abs());
            p[(i, j)] = new[(i, j)];
        }
        trace.push(change);
        fitted = Some(new);
        if change < config.tolerance {
            converged = true;
            break;
        }
    }

    // Without any successful pass the starting values are the last valid estimate.
    let p_hat = clipped(fitted.as_ref().unwrap_or(&p));
    Ok(ImputationResult {
        p_hat,
        method,
        rank,
        iterations,
        converged: converged && error.is_none(),
        trace,
        inner_nonconverged,
        error,
        factorization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initialization_examples() {
        // Row 0 observes 2/4, column 1 observes 1/4; cell (0,1)... built so
        // the missing cell (0,0) has row rate 0.5 and column rate 0.25.
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 0.0]);
        let n = DMatrix::from_row_slice(2, 2, &[0.0, 4.0, 4.0, 0.0]);
        let mask = DMatrix::from_row_slice(2, 2, &[false, true, true, false]);
        let (p, t) = initialize_missing(&x, &n, &mask).unwrap();
        assert!((p[(0, 0)] - 0.375).abs() < 1e-15);
        assert_eq!(t[(0, 0)], 1.0);
        assert_eq!(p[(0, 1)], 0.5);
        assert_eq!(t[(0, 1)], 4.0);
    }

    #[test]
    fn initialization_without_missing_is_identity() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let n = DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 1.0, 3.0]);
        let mask = DMatrix::from_element(2, 2, true);
        let (p, t) = initialize_missing(&x, &n, &mask).unwrap();
        assert_eq!(p, x.component_div(&n));
        assert_eq!(t, n);
    }

    #[test]
    fn initialization_margin_fallbacks() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let n = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let mask = DMatrix::from_row_slice(2, 2, &[true, false, false, false]);
        let (p, _) = initialize_missing(&x, &n, &mask).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
        let none = DMatrix::from_element(2, 2, false);
        assert!(initialize_missing(&x, &n, &none).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("svd".parse::<Method>().is_err());
    }
}
