//! Heterogeneous iteratively reweighted least squares.
//!
//! Each column `k` of the response is regressed on a shared fixed design
//! (the loadings or the scores), giving one coefficient row per column. The
//! rows of the response may be partitioned into blocks that follow different
//! exponential families; every block uses its own link, working response and
//! weights, but all blocks contribute to the same weighted least-squares
//! solve.
//!
//! Binomial blocks are expressed on the proportion scale, with the trial
//! counts carried as base weights.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{GlmfError, Result};
use crate::expfam::Family;
use crate::linalg::weighted_least_squares;
use crate::linked_model::{BlockAxis, StackedView};

/// Binomial means are kept inside `[MEAN_CLAMP, 1 − MEAN_CLAMP]` at every iterate.
pub const MEAN_CLAMP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;

/// A contiguous range of response rows sharing one family.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub rows: Range<usize>,
    pub family: Family,
    /// Normal variance; ignored by the other families.
    pub dispersion: f64,
}

impl Partition {
    pub fn new(rows: Range<usize>, family: Family, dispersion: f64) -> Self {
        Self {
            rows,
            family,
            dispersion,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IrlsProblem<'a> {
    /// L×K response on the mean scale.
    pub response: &'a DMatrix<f64>,
    /// L×K prior weights; the trial count for binomial cells.
    pub base_weights: &'a DMatrix<f64>,
    pub partitions: Vec<Partition>,
    /// L×r fixed design.
    pub design: &'a DMatrix<f64>,
    /// Optional warm start on the natural-parameter scale (L×K).
    pub start: Option<&'a DMatrix<f64>>,
    pub tolerance: f64,
    pub max_iter: usize,
    /// Record the log-likelihood of every iterate, per column.
    pub track_loglik: bool,
}

impl<'a> IrlsProblem<'a> {
    pub fn new(
        response: &'a DMatrix<f64>,
        base_weights: &'a DMatrix<f64>,
        partitions: Vec<Partition>,
        design: &'a DMatrix<f64>,
    ) -> Self {
        Self {
            response,
            base_weights,
            partitions,
            design,
            start: None,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
            track_loglik: false,
        }
    }

    fn validate(&self) -> Result<Vec<(Family, f64)>> {
        let (l, k) = self.response.shape();
        if self.base_weights.shape() != (l, k) {
            return Err(GlmfError::Dimension("base weights must match the response".into()));
        }
        if self.design.nrows() != l {
            return Err(GlmfError::Dimension(format!(
                "design has {} rows, response has {l}",
                self.design.nrows()
            )));
        }
        if self.design.ncols() == 0 {
            return Err(GlmfError::InvalidConfig("design has no columns".into()));
        }
        if let Some(start) = self.start {
            if start.shape() != (l, k) {
                return Err(GlmfError::Dimension("warm start must match the response".into()));
            }
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            return Err(GlmfError::InvalidConfig(
                "IRLS needs a positive tolerance and at least one iteration".into(),
            ));
        }
        let mut next = 0;
        let mut row_family = Vec::with_capacity(l);
        for p in &self.partitions {
            if p.rows.start != next || p.rows.end < p.rows.start {
                return Err(GlmfError::InvalidConfig(
                    "partitions must tile the response rows in order".into(),
                ));
            }
            if p.family == Family::Normal && !(p.dispersion > 0.0) {
                return Err(GlmfError::InvalidConfig("normal dispersion must be positive".into()));
            }
            next = p.rows.end;
            row_family.extend(std::iter::repeat_n((p.family, p.dispersion), p.rows.len()));
        }
        if next != l {
            return Err(GlmfError::InvalidConfig(format!(
                "partitions cover {next} of {l} rows"
            )));
        }
        if self.base_weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(GlmfError::InvalidData("base weights must be non-negative".into()));
        }
        Ok(row_family)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsSolution {
    /// K×r, row `k` holds the coefficients of response column `k`.
    pub coefficients: DMatrix<f64>,
    pub mu_hat: DMatrix<f64>,
    /// Largest iteration count over the columns.
    pub iterations: usize,
    pub converged: bool,
    pub ridge_events: usize,
    /// Smallest and largest binomial mean seen at any iterate.
    pub binomial_mean_range: Option<(f64, f64)>,
    /// Per-column log-likelihood after each iterate, when tracked.
    pub loglik_trace: Vec<Vec<f64>>,
}

/// Response, weights and row partitions for a row-blocked stacked view,
/// with the binomial block converted to proportions.
pub struct ViewProblemData {
    pub response: DMatrix<f64>,
    pub base_weights: DMatrix<f64>,
    pub partitions: Vec<Partition>,
}

/// Convert a row-blocked view into IRLS inputs. `dispersions[b]` is the
/// current variance of block `b` (ignored for non-normal blocks).
pub fn view_problem(view: &StackedView, dispersions: &[f64]) -> Result<ViewProblemData> {
    if view.axis != BlockAxis::Rows {
        return Err(GlmfError::InvalidConfig("IRLS expects row blocks; transpose the view".into()));
    }
    if dispersions.len() != view.blocks.len() {
        return Err(GlmfError::InvalidConfig("one dispersion per block required".into()));
    }
    let mut response = view.data.clone();
    let mut base_weights = DMatrix::from_element(view.data.nrows(), view.data.ncols(), 1.0);
    let mut partitions = Vec::with_capacity(view.blocks.len());
    for (block, &disp) in view.blocks.iter().zip(dispersions) {
        if block.spec.family == Family::Binomial {
            for j in 0..view.data.ncols() {
                for i in block.range.clone() {
                    let n = view.trials[(i, j)];
                    base_weights[(i, j)] = n;
                    response[(i, j)] = if n > 0.0 { view.data[(i, j)] / n } else { 0.5 };
                }
            }
        }
        partitions.push(Partition::new(block.range.clone(), block.spec.family, disp));
    }
    Ok(ViewProblemData {
        response,
        base_weights,
        partitions,
    })
}

fn clamp_mean(family: Family, mu: f64) -> f64 {
    match family {
        Family::Binomial => mu.clamp(MEAN_CLAMP, 1.0 - MEAN_CLAMP),
        Family::Poisson => mu.max(MEAN_CLAMP),
        Family::Normal => mu,
    }
}

fn start_mean(family: Family, x: f64, weight: f64) -> f64 {
    match family {
        Family::Normal => x,
        Family::Binomial => clamp_mean(family, (x * weight + 0.5) / (weight + 1.0)),
        Family::Poisson => x + 0.1,
    }
}

fn link_clamped(family: Family, mu: f64) -> f64 {
    // Means are already clamped into the open domain here.
    family.link(clamp_mean(family, mu)).unwrap_or(0.0)
}

fn working_response(family: Family, theta: f64, mu: f64, x: f64) -> f64 {
    theta + (x - mu) / family.mean_derivative(mu)
}

fn squared_weight(family: Family, mu: f64, base: f64, dispersion: f64) -> f64 {
    // w (dμ/dθ)² / Var(μ); the canonical link cancels one derivative.
    let d = family.mean_derivative(mu);
    base * d * d / family.variance(mu, dispersion)
}

/// Starting means: the data itself, with binomial proportions shrunk to
/// `(count + 0.5) / (N + 1)`.
pub fn init_mu(
    response: &DMatrix<f64>,
    base_weights: &DMatrix<f64>,
    partitions: &[Partition],
) -> DMatrix<f64> {
    let mut mu = response.clone();
    for p in partitions {
        for j in 0..response.ncols() {
            for i in p.rows.clone() {
                mu[(i, j)] = start_mean(p.family, response[(i, j)], base_weights[(i, j)]);
            }
        }
    }
    mu
}

/// `S = θ + (x − μ) / (dμ/dθ)`.
pub fn induced_response(
    theta: &DMatrix<f64>,
    mu: &DMatrix<f64>,
    x: &DMatrix<f64>,
    partitions: &[Partition],
) -> DMatrix<f64> {
    let mut s = theta.clone();
    for p in partitions {
        for j in 0..theta.ncols() {
            for i in p.rows.clone() {
                let m = clamp_mean(p.family, mu[(i, j)]);
                s[(i, j)] = working_response(p.family, theta[(i, j)], m, x[(i, j)]);
            }
        }
    }
    s
}

/// `w̃ = sqrt(w (dμ/dθ)² / Var(μ))`.
pub fn irls_weights(
    mu: &DMatrix<f64>,
    base_weights: &DMatrix<f64>,
    partitions: &[Partition],
) -> DMatrix<f64> {
    let mut w = mu.clone();
    for p in partitions {
        for j in 0..mu.ncols() {
            for i in p.rows.clone() {
                let m = clamp_mean(p.family, mu[(i, j)]);
                w[(i, j)] = squared_weight(p.family, m, base_weights[(i, j)], p.dispersion).sqrt();
            }
        }
    }
    w
}

/// Kernel log-likelihood `Σ w (xθ − b(θ)) / φ` of one column; constant
/// base-measure terms are dropped.
fn column_loglik(rows: &[(Family, f64)], x: &[f64], w: &[f64], theta: &[f64]) -> f64 {
    rows.iter()
        .zip(x.iter().zip(w.iter().zip(theta)))
        .map(|(&(fam, disp), (&x, (&w, &t)))| match fam {
            Family::Normal => -w * (x - t) * (x - t) / (2.0 * disp),
            _ => w * (x * t - fam.cumulant(t)),
        })
        .sum()
}

struct ColumnFit {
    coef: DVector<f64>,
    mu: Vec<f64>,
    iterations: usize,
    converged: bool,
    ridge_events: usize,
    range: Option<(f64, f64)>,
    loglik: Vec<f64>,
}

fn solve_column(problem: &IrlsProblem<'_>, rows: &[(Family, f64)], k: usize) -> Result<ColumnFit> {
    let l = rows.len();
    let x: Vec<f64> = problem.response.column(k).iter().copied().collect();
    let w: Vec<f64> = problem.base_weights.column(k).iter().copied().collect();
    let design = problem.design;
    let identity_only = rows.iter().all(|(f, _)| f.is_identity_link());
    let has_binomial = rows.iter().any(|(f, _)| *f == Family::Binomial);

    let mut mu: Vec<f64> = match problem.start {
        Some(start) => (0..l)
            .map(|i| clamp_mean(rows[i].0, rows[i].0.inverse_link(start[(i, k)])))
            .collect(),
        None => (0..l).map(|i| start_mean(rows[i].0, x[i], w[i])).collect(),
    };
    let mut theta: Vec<f64> = (0..l).map(|i| link_clamped(rows[i].0, mu[i])).collect();

    let mut range: Option<(f64, f64)> = None;
    let track = |mu: &[f64], range: &mut Option<(f64, f64)>| {
        if !has_binomial {
            return;
        }
        for (m, (f, _)) in mu.iter().zip(rows) {
            if *f == Family::Binomial {
                let (lo, hi) = range.get_or_insert((*m, *m));
                *lo = lo.min(*m);
                *hi = hi.max(*m);
            }
        }
    };
    track(&mu, &mut range);

    let mut s = vec![0.0; l];
    let mut w2 = vec![0.0; l];
    let mut coef = DVector::zeros(design.ncols());
    let mut ridge_events = 0;
    let mut loglik = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=problem.max_iter {
        iterations = it;
        for i in 0..l {
            let (fam, disp) = rows[i];
            s[i] = working_response(fam, theta[i], mu[i], x[i]);
            w2[i] = squared_weight(fam, mu[i], w[i], disp);
            if !w2[i].is_finite() || !s[i].is_finite() {
                return Err(GlmfError::NonFiniteWeights { column: k });
            }
        }
        let (b, ridged) = weighted_least_squares(design, &w2, &s);
        coef = b;
        ridge_events += usize::from(ridged);
        let eta = design * &coef;
        let mut change = 0.0f64;
        for i in 0..l {
            let fam = rows[i].0;
            let m_new = clamp_mean(fam, fam.inverse_link(eta[i]));
            change = change.max((m_new - mu[i]).abs() / (mu[i].abs() + 1e-8));
            mu[i] = m_new;
            theta[i] = if fam == Family::Normal {
                eta[i]
            } else {
                link_clamped(fam, m_new)
            };
        }
        track(&mu, &mut range);
        if problem.track_loglik {
            let eta: Vec<f64> = eta.iter().copied().collect();
            loglik.push(column_loglik(rows, &x, &w, &eta));
        }
        if identity_only || change < problem.tolerance {
            converged = true;
            break;
        }
    }
    Ok(ColumnFit {
        coef,
        mu,
        iterations,
        converged,
        ridge_events,
        range,
        loglik,
    })
}

/// Fit every column of the response on the shared design.
///
/// Columns are independent and solved in parallel; the result is identical
/// to a sequential sweep.
pub fn solve_rows(problem: &IrlsProblem<'_>) -> Result<IrlsSolution> {
    let rows = problem.validate()?;
    let (l, k) = problem.response.shape();
    let r = problem.design.ncols();
    let fits: Vec<ColumnFit> = (0..k)
        .into_par_iter()
        .map(|c| solve_column(problem, &rows, c))
        .collect::<Result<_>>()?;

    let mut coefficients = DMatrix::zeros(k, r);
    let mut mu_hat = DMatrix::zeros(l, k);
    let mut iterations = 0;
    let mut converged = true;
    let mut ridge_events = 0;
    let mut range: Option<(f64, f64)> = None;
    let mut loglik_trace = Vec::new();
    for (c, fit) in fits.into_iter().enumerate() {
        coefficients.row_mut(c).copy_from(&fit.coef.transpose());
        mu_hat.column_mut(c).copy_from_slice(&fit.mu);
        iterations = iterations.max(fit.iterations);
        converged &= fit.converged;
        ridge_events += fit.ridge_events;
        if let Some((lo, hi)) = fit.range {
            let (a, b) = range.get_or_insert((lo, hi));
            *a = a.min(lo);
            *b = b.max(hi);
        }
        if problem.track_loglik {
            loglik_trace.push(fit.loglik);
        }
    }
    Ok(IrlsSolution {
        coefficients,
        mu_hat,
        iterations,
        converged,
        ridge_events,
        binomial_mean_range: range,
        loglik_trace,
    })
}
