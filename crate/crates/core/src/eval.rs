//! Scoring metrics and the two experiment harnesses: the simulation study
//! over a parameter grid and k-fold cross-validation on observed matchups.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::CLIP;
use crate::error::{GlmfError, Result};
use crate::expfam::binomial_log_pmf;
use crate::impute::{self, ImputeConfig, Method};
use crate::linked_model::LinkedDataset;
use crate::simgen::{self, GridSpec};

pub type Cell = (usize, usize);

/// Root mean squared difference over `cells`.
pub fn rmse(p_hat: &DMatrix<f64>, p_ref: &DMatrix<f64>, cells: &[Cell]) -> Result<f64> {
    if cells.is_empty() {
        return Err(GlmfError::EmptyCells);
    }
    let se: f64 = cells.iter().map(|&c| (p_hat[c] - p_ref[c]).powi(2)).sum();
    Ok((se / cells.len() as f64).sqrt())
}

/// Binomial log-likelihood of `x` successes in `trials`, summed over
/// `cells`, binomial coefficient included.
pub fn binom_log_lik(p_hat: &DMatrix<f64>, x: &DMatrix<f64>, trials: &DMatrix<f64>, cells: &[Cell]) -> Result<f64> {
    cells
        .iter()
        .map(|&c| binomial_log_pmf(x[c], trials[c], p_hat[c]))
        .sum()
}

/// [`binom_log_lik`] divided by the total number of trials in `cells`.
pub fn binom_log_lik_per_trial(
    p_hat: &DMatrix<f64>,
    x: &DMatrix<f64>,
    trials: &DMatrix<f64>,
    cells: &[Cell],
) -> Result<f64> {
    let total: f64 = cells.iter().map(|&c| trials[c]).sum();
    if !(total > 0.0) {
        return Err(GlmfError::EmptyCells);
    }
    Ok(binom_log_lik(p_hat, x, trials, cells)? / total)
}

/// Aggregate score of one method at one rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    /// `None` for methods without a rank.
    pub rank: Option<usize>,
    pub rmse: f64,
    /// Total log-likelihood.
    pub log_lik: f64,
    pub log_lik_per_trial: f64,
    pub log_lik_per_cell: f64,
    /// Share of runs whose imputation loop converged.
    pub converged_fraction: f64,
}

fn method_rank(method: Method, rank: usize) -> Option<usize> {
    method.is_ranked().then_some(rank)
}

/// Ranked methods once per rank, unranked methods once.
fn method_units(methods: &[Method], ranks: &[usize]) -> Vec<(Method, usize)> {
    let mut units = Vec::new();
    for &m in methods {
        if m.is_ranked() {
            units.extend(ranks.iter().map(|&r| (m, r)));
        } else {
            units.push((m, 1));
        }
    }
    units
}

fn unique_methods(methods: &[Method]) -> Result<Vec<Method>> {
    if methods.is_empty() {
        return Err(GlmfError::InvalidConfig("no methods requested".into()));
    }
    let mut out: Vec<Method> = methods.to_vec();
    out.sort();
    out.dedup();
    Ok(out)
}

fn write_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| GlmfError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

// ---------------------------------------------------------------------------
// Simulation study

/// Score of one method on one simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub sigma: f64,
    pub nmax: u32,
    pub rank: usize,
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub rmse: f64,
    pub log_lik: f64,
    pub log_lik_per_trial: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inner_nonconverged: usize,
    pub error: Option<String>,
}

/// Replicate mean for one `(σ, nmax, r, method)` slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub sigma: f64,
    pub nmax: u32,
    pub rank: usize,
    pub method: Method,
    pub rmse: f64,
    pub log_lik: f64,
    pub replicates: usize,
    /// Replicates left out of the means because they did not converge.
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub grid: GridSpec,
    pub methods: Vec<Method>,
    /// Grid order, then method order.
    pub records: Vec<SimulationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Rmse,
    LogLik,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::LogLik => "log_lik",
        }
    }
}

fn validate_grid(spec: &GridSpec) -> Result<()> {
    if spec.sigmas.is_empty() || spec.nmaxes.is_empty() || spec.ranks.is_empty() || spec.replicates == 0 {
        return Err(GlmfError::InvalidConfig("simulation grid has an empty axis".into()));
    }
    Ok(())
}

/// Generate, mask and impute every grid cell with every method, scoring the
/// hidden cells against the true probabilities and the hidden counts. Cells
/// run in parallel; results are returned in grid order.
pub fn run_simulation_study(spec: &GridSpec, methods: &[Method], config: &ImputeConfig) -> Result<SimulationReport> {
    validate_grid(spec)?;
    let methods = unique_methods(methods)?;
    let cells: Vec<_> = simgen::grid(spec).collect();
    for cell in &cells {
        cell.config.validate()?;
    }
    let per_cell: Vec<Result<Vec<SimulationRecord>>> = cells
        .par_iter()
        .map(|cell| {
            let (data, truth) = simgen::generate(&cell.config)?;
            let hidden: Vec<Cell> = (0..truth.mask.ncols())
                .flat_map(|j| (0..truth.mask.nrows()).map(move |i| (i, j)))
                .filter(|&c| !truth.mask[c])
                .collect();
            let c = &cell.config;
            let records = methods
                .iter()
                .map(|&method| {
                    let mut rec = SimulationRecord {
                        sigma: c.sigma,
                        nmax: c.nmax,
                        rank: c.rank,
                        replicate: cell.replicate,
                        seed: c.seed,
                        method,
                        rmse: f64::NAN,
                        log_lik: f64::NAN,
                        log_lik_per_trial: f64::NAN,
                        iterations: 0,
                        converged: false,
                        inner_nonconverged: 0,
                        error: None,
                    };
                    let scored = impute::impute(&data, method, c.rank, config).and_then(|r| {
                        let p = &r.p_hat;
                        let scores = (
                            rmse(p, &truth.p_true, &hidden)?,
                            binom_log_lik(p, &truth.x_full, &truth.trials, &hidden)?,
                            binom_log_lik_per_trial(p, &truth.x_full, &truth.trials, &hidden)?,
                        );
                        Ok((r, scores))
                    });
                    match scored {
                        Ok((r, (e, ll, llt))) => {
                            rec.rmse = e;
                            rec.log_lik = ll;
                            rec.log_lik_per_trial = llt;
                            rec.iterations = r.iterations;
                            rec.converged = r.converged;
                            rec.inner_nonconverged = r.inner_nonconverged;
                            rec.error = r.error;
                        }
                        Err(e) => {
                            log::warn!("{method} failed on simulation seed {}: {e}", c.seed);
                            rec.error = Some(e.to_string());
                        }
                    }
                    rec
                })
                .collect();
            Ok(records)
        })
        .collect();
    let mut records = Vec::new();
    for r in per_cell {
        records.extend(r?);
    }
    Ok(SimulationReport {
        grid: spec.clone(),
        methods,
        records,
    })
}

fn index_of<T: PartialEq>(items: &[T], v: &T) -> usize {
    items.iter().position(|x| x == v).unwrap_or(usize::MAX)
}

impl SimulationReport {
    /// Means over replicates per `(nmax, r, σ, method)`. Non-converged
    /// replicates are dropped from the means when at least one converged.
    pub fn summaries(&self) -> Vec<SimulationSummary> {
        let mut groups: BTreeMap<(usize, usize, usize, Method), Vec<&SimulationRecord>> = BTreeMap::new();
        for r in &self.records {
            let key = (
                index_of(&self.grid.nmaxes, &r.nmax),
                index_of(&self.grid.ranks, &r.rank),
                index_of(&self.grid.sigmas, &r.sigma),
                r.method,
            );
            groups.entry(key).or_default().push(r);
        }
        groups
            .into_values()
            .map(|recs| {
                let ok: Vec<_> = recs.iter().filter(|r| r.converged).collect();
                let used: Vec<&SimulationRecord> = if ok.is_empty() {
                    recs.iter().filter(|r| r.rmse.is_finite()).copied().collect()
                } else {
                    ok.into_iter().copied().collect()
                };
                let mean = |f: fn(&SimulationRecord) -> f64| {
                    if used.is_empty() {
                        f64::NAN
                    } else {
                        used.iter().map(|r| f(r)).sum::<f64>() / used.len() as f64
                    }
                };
                let first = recs[0];
                SimulationSummary {
                    sigma: first.sigma,
                    nmax: first.nmax,
                    rank: first.rank,
                    method: first.method,
                    rmse: mean(|r| r.rmse),
                    log_lik: mean(|r| r.log_lik),
                    replicates: recs.len(),
                    nonconverged: recs.iter().filter(|r| !r.converged).count(),
                }
            })
            .collect()
    }

    pub fn records_csv(&self) -> Result<String> {
        write_csv(&self.records)
    }

    /// Wide table: one row per `(nmax, r, σ)`, one column per method.
    /// Entries with non-converged replicates carry an asterisk.
    pub fn table_csv(&self, metric: Metric) -> Result<String> {
        let summaries = self.summaries();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["nmax".to_string(), "r".to_string(), "sigma".to_string()];
        header.extend(self.methods.iter().map(|m| m.label().to_string()));
        w.write_record(&header)?;
        for row in summaries.chunks(self.methods.len()) {
            let s = &row[0];
            let mut rec = vec![s.nmax.to_string(), s.rank.to_string(), s.sigma.to_string()];
            for s in row {
                let v = match metric {
                    Metric::Rmse => format!("{:.4}", s.rmse),
                    Metric::LogLik => format!("{:.0}", s.log_lik),
                };
                rec.push(if s.nonconverged > 0 { format!("{v}*") } else { v });
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| GlmfError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Long format for marginal plots: every metric averaged over the two
    /// grid parameters not on the x-axis.
    pub fn marginal_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row {
            parameter: &'static str,
            level: f64,
            method: Method,
            metric: &'static str,
            value: f64,
        }
        let summaries = self.summaries();
        let mut rows = Vec::new();
        let axes: [(&'static str, fn(&SimulationSummary) -> f64); 3] = [
            ("nmax", |s| f64::from(s.nmax)),
            ("sigma", |s| s.sigma),
            ("rank", |s| s.rank as f64),
        ];
        for (parameter, level_of) in axes {
            let mut levels: Vec<f64> = summaries.iter().map(level_of).collect();
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            for level in levels {
                for &method in &self.methods {
                    let sel: Vec<_> = summaries
                        .iter()
                        .filter(|s| s.method == method && level_of(s) == level)
                        .collect();
                    for metric in [Metric::LogLik, Metric::Rmse] {
                        let vals: Vec<f64> = sel
                            .iter()
                            .map(|s| match metric {
                                Metric::Rmse => s.rmse,
                                Metric::LogLik => s.log_lik,
                            })
                            .collect();
                        rows.push(Row {
                            parameter,
                            level,
                            method,
                            metric: metric.name(),
                            value: vals.iter().sum::<f64>() / vals.len() as f64,
                        });
                    }
                }
            }
        }
        write_csv(rows)
    }
}

// ---------------------------------------------------------------------------
// Cross-validation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub ranks: Vec<usize>,
    pub clip: (f64, f64),
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            ranks: vec![1, 2, 3],
            clip: CLIP,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(GlmfError::InvalidConfig(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return Err(GlmfError::InvalidConfig("ranks must be a non-empty list of positive values".into()));
        }
        let (lo, hi) = self.clip;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(GlmfError::InvalidConfig(format!("clip bounds ({lo}, {hi}) must lie inside (0, 1)")));
        }
        Ok(())
    }
}

/// Random partition of the observed cells into `folds` groups whose sizes
/// differ by at most one. Each fold lists its cells in column-major order.
pub fn cv_split(mask: &DMatrix<bool>, folds: usize, seed: u64) -> Result<Vec<Vec<Cell>>> {
    let mut cells: Vec<Cell> = (0..mask.ncols())
        .flat_map(|j| (0..mask.nrows()).map(move |i| (i, j)))
        .filter(|&c| mask[c])
        .collect();
    if folds == 0 || folds > cells.len() {
        return Err(GlmfError::InvalidConfig(format!(
            "{folds} folds over {} observed cells",
            cells.len()
        )));
    }
    cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::with_capacity(cells.len() / folds + 1); folds];
    for (k, c) in cells.into_iter().enumerate() {
        out[k % folds].push(c);
    }
    for f in &mut out {
        f.sort_by_key(|&(i, j)| (j, i));
    }
    Ok(out)
}

/// Score of one method at one rank on one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub fold: usize,
    pub method: Method,
    pub rank: Option<usize>,
    pub cells: usize,
    pub trials: f64,
    pub rmse: f64,
    pub log_lik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
    #[serde(skip)]
    sse: f64,
}

/// Held-out prediction paired with the observed average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPrediction {
    pub fold: usize,
    pub method: Method,
    pub rank: Option<usize>,
    pub row: String,
    pub col: String,
    pub hits: f64,
    pub at_bats: f64,
    pub observed: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: CvConfig,
    pub methods: Vec<Method>,
    pub fold_sizes: Vec<usize>,
    /// Fold-major, then method, then rank.
    pub records: Vec<CvRecord>,
    /// Pairs for unranked methods and for ranked methods at the largest rank.
    pub predictions: Vec<CvPrediction>,
}

/// Hide each fold in turn, impute it with every method and rank, and score
/// the hidden cells against their empirical averages.
pub fn run_cv(dataset: &LinkedDataset, cv: &CvConfig, methods: &[Method], config: &ImputeConfig) -> Result<CvReport> {
    cv.validate()?;
    let methods = unique_methods(methods)?;
    let folds = cv_split(dataset.mask(), cv.folds, cv.seed)?;
    let mut config = config.clone();
    config.clip = cv.clip;
    let units = method_units(&methods, &cv.ranks);
    let max_rank = *cv.ranks.iter().max().expect("validated");
    let work: Vec<(usize, Method, usize)> = (0..folds.len())
        .flat_map(|f| units.iter().map(move |&(m, r)| (f, m, r)))
        .collect();

    let x = dataset.x();
    let trials = dataset.trials();
    let observed = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        if trials[(i, j)] > 0.0 {
            x[(i, j)] / trials[(i, j)]
        } else {
            0.0
        }
    });
    let labels = dataset.labels();

    let results: Vec<(CvRecord, Vec<CvPrediction>)> = work
        .par_iter()
        .map(|&(fold, method, rank)| {
            let test = &folds[fold];
            let mut rec = CvRecord {
                fold,
                method,
                rank: method_rank(method, rank),
                cells: test.len(),
                trials: test.iter().map(|&c| trials[c]).sum(),
                rmse: f64::NAN,
                log_lik: f64::NAN,
                iterations: 0,
                converged: false,
                error: None,
                sse: f64::NAN,
            };
            let mut mask = dataset.mask().clone();
            for &c in test {
                mask[c] = false;
            }
            let outcome = dataset
                .with_mask(mask)
                .and_then(|train| impute::impute(&train, method, rank, &config))
                .and_then(|r| {
                    let e = rmse(&r.p_hat, &observed, test)?;
                    let ll = binom_log_lik(&r.p_hat, x, trials, test)?;
                    Ok((r, e, ll))
                });
            let mut preds = Vec::new();
            match outcome {
                Ok((r, e, ll)) => {
                    rec.rmse = e;
                    rec.sse = e * e * test.len() as f64;
                    rec.log_lik = ll;
                    rec.iterations = r.iterations;
                    rec.converged = r.converged;
                    rec.error = r.error.clone();
                    if !method.is_ranked() || rank == max_rank {
                        preds = test
                            .iter()
                            .map(|&(i, j)| CvPrediction {
                                fold,
                                method,
                                rank: rec.rank,
                                row: labels.rows[i].clone(),
                                col: labels.cols[j].clone(),
                                hits: x[(i, j)],
                                at_bats: trials[(i, j)],
                                observed: observed[(i, j)],
                                predicted: r.p_hat[(i, j)],
                            })
                            .collect();
                    }
                }
                Err(e) => {
                    log::warn!("{method} rank {rank} failed on fold {fold}: {e}");
                    rec.error = Some(e.to_string());
                }
            }
            (rec, preds)
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    let mut predictions = Vec::new();
    for (r, p) in results {
        records.push(r);
        predictions.extend(p);
    }
    Ok(CvReport {
        config: cv.clone(),
        methods,
        fold_sizes: folds.iter().map(Vec::len).collect(),
        records,
        predictions,
    })
}

/// Pooled CV score plus the number of folds that failed outright.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    #[serde(flatten)]
    pub score: MethodScore,
    pub failed_folds: usize,
}

impl CvReport {
    /// Scores pooled over all held-out cells of the folds that produced
    /// predictions, in method then rank order.
    pub fn summaries(&self) -> Vec<CvSummary> {
        let mut groups: BTreeMap<(Method, Option<usize>), Vec<&CvRecord>> = BTreeMap::new();
        for r in &self.records {
            groups.entry((r.method, r.rank)).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|((method, rank), recs)| {
                let ok: Vec<_> = recs.iter().filter(|r| r.log_lik.is_finite()).collect();
                let cells: usize = ok.iter().map(|r| r.cells).sum();
                let trials: f64 = ok.iter().map(|r| r.trials).sum();
                let sse: f64 = ok.iter().map(|r| r.sse).sum();
                let ll: f64 = ok.iter().map(|r| r.log_lik).sum();
                let nan_if_empty = |v: f64| if ok.is_empty() { f64::NAN } else { v };
                CvSummary {
                    score: MethodScore {
                        method,
                        rank,
                        rmse: nan_if_empty((sse / cells as f64).sqrt()),
                        log_lik: nan_if_empty(ll),
                        log_lik_per_trial: nan_if_empty(ll / trials),
                        log_lik_per_cell: nan_if_empty(ll / cells as f64),
                        converged_fraction: recs.iter().filter(|r| r.converged).count() as f64 / recs.len() as f64,
                    },
                    failed_folds: recs.len() - ok.len(),
                }
            })
            .collect()
    }

    /// The summary for one method at one rank (ignored for unranked methods).
    pub fn score(&self, method: Method, rank: usize) -> Option<CvSummary> {
        let rank = method_rank(method, rank);
        self.summaries()
            .into_iter()
            .find(|s| s.score.method == method && s.score.rank == rank)
    }

    pub fn records_csv(&self) -> Result<String> {
        write_csv(&self.records)
    }

    pub fn summary_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row {
            method: Method,
            rank: Option<usize>,
            rmse: f64,
            log_lik: f64,
            log_lik_per_trial: f64,
            log_lik_per_cell: f64,
            converged_fraction: f64,
            failed_folds: usize,
        }
        write_csv(self.summaries().into_iter().map(|s| Row {
            method: s.score.method,
            rank: s.score.rank,
            rmse: s.score.rmse,
            log_lik: s.score.log_lik,
            log_lik_per_trial: s.score.log_lik_per_trial,
            log_lik_per_cell: s.score.log_lik_per_cell,
            converged_fraction: s.score.converged_fraction,
            failed_folds: s.failed_folds,
        }))
    }

    /// Wide table with an RMSE block and a per-trial log-likelihood block,
    /// one row per rank. Unranked methods appear on the first rank row.
    pub fn table_csv(&self) -> Result<String> {
        let summaries = self.summaries();
        let mut ranks = self.config.ranks.clone();
        ranks.sort_unstable();
        ranks.dedup();
        let mut w = csv::Writer::from_writer(Vec::new());
        for metric in [Metric::Rmse, Metric::LogLik] {
            let mut header = vec![metric.name().to_string()];
            header.extend(self.methods.iter().map(|m| m.label().to_string()));
            w.write_record(&header)?;
            for (k, &rank) in ranks.iter().enumerate() {
                let mut row = vec![format!("Rank {rank}")];
                for &m in &self.methods {
                    let want = if m.is_ranked() { Some(rank) } else if k == 0 { None } else {
                        row.push("-".into());
                        continue;
                    };
                    let cell = summaries
                        .iter()
                        .find(|s| s.score.method == m && s.score.rank == want)
                        .map(|s| {
                            let v = match metric {
                                Metric::Rmse => format!("{:.3}", s.score.rmse),
                                Metric::LogLik => format!("{:.3}", s.score.log_lik_per_trial),
                            };
                            if s.failed_folds > 0 || s.score.converged_fraction < 1.0 {
                                format!("{v}*")
                            } else {
                                v
                            }
                        })
                        .unwrap_or_else(|| "-".into());
                    row.push(cell);
                }
                w.write_record(&row)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| GlmfError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn predictions_csv(&self) -> Result<String> {
        write_csv(&self.predictions)
    }
}

// ---------------------------------------------------------------------------

/// The `k` largest probabilities, ties broken by row then column.
pub fn favorable_matchups(p_hat: &DMatrix<f64>, k: usize) -> Vec<(usize, usize, f64)> {
    let mut cells: Vec<(usize, usize, f64)> = (0..p_hat.nrows())
        .flat_map(|i| (0..p_hat.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, p_hat[(i, j)]))
        .collect();
    cells.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    cells.truncate(k);
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        let a = DMatrix::from_row_slice(1, 2, &[0.3, 0.4]);
        let z = DMatrix::zeros(1, 2);
        assert_eq!(rmse(&a, &a, &[(0, 0), (0, 1)]).unwrap(), 0.0);
        assert_eq!(rmse(&a.map(|_| 0.5), &z, &[(0, 0)]).unwrap(), 0.5);
        assert!((rmse(&a, &z, &[(0, 0), (0, 1)]).unwrap() - 0.125f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&a, &z, &[]).is_err());
    }

    #[test]
    fn log_lik_examples() {
        let p = DMatrix::from_element(1, 1, 0.5);
        let x = DMatrix::from_element(1, 1, 1.0);
        let n = DMatrix::from_element(1, 1, 2.0);
        let ll = binom_log_lik(&p, &x, &n, &[(0, 0)]).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);
        assert!((binom_log_lik_per_trial(&p, &x, &n, &[(0, 0)]).unwrap() - 0.5 * 0.5f64.ln()).abs() < 1e-12);

        let p = DMatrix::from_element(1, 1, 0.999);
        let x = DMatrix::from_element(1, 1, 7.0);
        let n = x.clone();
        let ll = binom_log_lik(&p, &x, &n, &[(0, 0)]).unwrap();
        assert!((ll - 7.0 * 0.999f64.ln()).abs() < 1e-12);

        let bad = DMatrix::from_element(1, 1, 1.0);
        assert!(binom_log_lik(&bad, &x, &n, &[(0, 0)]).is_err());
    }

    #[test]
    fn split_sizes_and_coverage() {
        let mask = DMatrix::from_fn(7, 9, |i, j| (i + 2 * j) % 3 != 0);
        let observed = mask.iter().filter(|&&b| b).count();
        let folds = cv_split(&mask, 5, 3).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<Cell> = folds.concat();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), observed);
        assert!(all.iter().all(|&c| mask[c]));
        assert_eq!(folds, cv_split(&mask, 5, 3).unwrap());
        assert_ne!(folds, cv_split(&mask, 5, 4).unwrap());
    }

    #[test]
    fn split_ten_cells_five_folds() {
        let mask = DMatrix::from_element(2, 5, true);
        let folds = cv_split(&mask, 5, 0).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        assert!(cv_split(&mask, 11, 0).is_err());
    }

    #[test]
    fn split_sizes_at_league_scale() {
        // 62,528 observed cells into five folds.
        let mask = DMatrix::from_fn(508, 516, |i, j| (i * 516 + j) < 62_528);
        let mut sizes: Vec<usize> = cv_split(&mask, 5, 1).unwrap().iter().map(Vec::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![12506, 12506, 12506, 12505, 12505]);
    }

    #[test]
    fn favorable_tie_break_and_truncation() {
        let mut p = DMatrix::from_element(3, 3, 0.3);
        let top = favorable_matchups(&p, 4);
        assert_eq!(
            top.iter().map(|t| (t.0, t.1)).collect::<Vec<_>>(),
            vec![(0, 0), (0, 1), (0, 2), (1, 0)]
        );
        p[(2, 1)] = 0.999;
        assert_eq!(favorable_matchups(&p, 1), vec![(2, 1, 0.999)]);
        assert_eq!(favorable_matchups(&p, 100).len(), 9);
    }

    #[test]
    fn units_skip_ranks_for_unranked_methods() {
        let u = method_units(&[Method::Glmf, Method::Mean], &[1, 2]);
        assert_eq!(u, vec![(Method::Glmf, 1), (Method::Glmf, 2), (Method::Mean, 1)]);
    }
}
