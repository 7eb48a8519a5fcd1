//! Loading season tables into a linked dataset.
//!
//! Three comma-separated UTF-8 files with a header row, ids as strings:
//!
//! * `batting.csv`: `batter_id`, the [`BATTING_STATS`] columns, `PA`.
//! * `pitching.csv`: `pitcher_id`, the [`PITCHING_STATS`] columns, `BF`.
//!   `IP` uses thirds notation (`20.1` is 20⅓ innings).
//! * `matchups.csv`: `batter_id,pitcher_id,AB,H`.
//!
//! Extra columns are ignored. Players listed twice are summed, as are
//! repeated matchup records.
//!
//! The assembled dataset has batters as rows of X and Z and pitchers as
//! columns of X and Y. Y holds pitching statistics as rows.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{GlmfError, Result};
use crate::expfam::{logistic, DistributionSpec};
use crate::linked_model::{Labels, LinkedDataset};

pub const BATTING_FILE: &str = "batting.csv";
pub const PITCHING_FILE: &str = "pitching.csv";
pub const MATCHUPS_FILE: &str = "matchups.csv";

pub const BATTING_STATS: [&str; 18] = [
    "G", "AB", "R", "H", "2B", "3B", "HR", "RBI", "SB", "CS", "BB", "SO", "TB", "GDP", "HBP", "SH", "SF", "IBB",
];
pub const PITCHING_STATS: [&str; 19] = [
    "W", "L", "G", "GS", "GF", "CG", "SHO", "SV", "IP", "H", "R", "ER", "HR", "BB", "IBB", "SO", "HBP", "BK", "WP",
];
const AB_INDEX: usize = 1;
const IP_INDEX: usize = 8;

/// One player's season line. For pitchers the `IP` entry is in innings,
/// not thirds notation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterRow {
    pub id: String,
    pub stats: Vec<f64>,
    /// Plate appearances for batters, batters faced for pitchers.
    pub exposure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchupRow {
    pub batter_id: String,
    pub pitcher_id: String,
    pub at_bats: f64,
    pub hits: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawTables {
    pub batters: Vec<RosterRow>,
    pub pitchers: Vec<RosterRow>,
    pub matchups: Vec<MatchupRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosterFilter {
    /// Pitchers need strictly more innings than this.
    pub min_innings: f64,
    /// Batters need at least this many at-bats.
    pub min_at_bats: f64,
}

impl Default for RosterFilter {
    fn default() -> Self {
        Self {
            min_innings: 20.0,
            min_at_bats: 50.0,
        }
    }
}

/// Innings from thirds notation: `20.1` is 20⅓, `20.2` is 20⅔.
pub fn parse_innings(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || GlmfError::Parse(format!("innings pitched `{s}` is not in thirds notation"));
    let (whole, frac) = match s.split_once('.') {
        Some((w, f)) => (w, f),
        None => (s, "0"),
    };
    let whole: u64 = whole.parse().map_err(|_| bad())?;
    let thirds = match frac {
        "" | "0" => 0,
        "1" => 1,
        "2" => 2,
        _ => return Err(bad()),
    };
    Ok(whole as f64 + thirds as f64 / 3.0)
}

/// Inverse of [`parse_innings`], rounding to the nearest out.
pub fn format_innings(innings: f64) -> String {
    let outs = (innings * 3.0).round() as u64;
    format!("{}.{}", outs / 3, outs % 3)
}

fn column_indices(headers: &csv::StringRecord, wanted: &[&str], table: &str) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| GlmfError::InvalidData(format!("{table} lacks column `{name}`")))
        })
        .collect()
}

fn open_table(dir: &Path, file: &str) -> Result<csv::Reader<fs::File>> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(GlmfError::InvalidData(format!(
            "missing table {file} in {}",
            dir.display()
        )));
    }
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?)
}

fn parse_number(field: &str, table: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| GlmfError::Parse(format!("{table} line {line}: `{column}` = `{field}` is not a number")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(GlmfError::InvalidData(format!(
            "{table} line {line}: `{column}` = {v} must be a non-negative number"
        )));
    }
    Ok(v)
}

fn read_roster(dir: &Path, file: &str, id: &str, stats: &[&str], exposure: &str) -> Result<Vec<RosterRow>> {
    let mut rdr = open_table(dir, file)?;
    let mut names = vec![id];
    names.extend_from_slice(stats);
    names.push(exposure);
    let idx = column_indices(rdr.headers()?, &names, file)?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let field = |c: usize| rec.get(idx[c]).unwrap_or("");
        let mut values = Vec::with_capacity(stats.len());
        for (s, name) in stats.iter().enumerate() {
            let f = field(s + 1);
            values.push(if file == PITCHING_FILE && s == IP_INDEX {
                parse_innings(f).map_err(|e| GlmfError::Parse(format!("{file} line {line}: {e}")))?
            } else {
                parse_number(f, file, line, name)?
            });
        }
        rows.push(RosterRow {
            id: field(0).to_string(),
            stats: values,
            exposure: parse_number(field(stats.len() + 1), file, line, exposure)?,
        });
    }
    Ok(rows)
}

fn read_matchups(dir: &Path) -> Result<Vec<MatchupRow>> {
    let mut rdr = open_table(dir, MATCHUPS_FILE)?;
    let idx = column_indices(rdr.headers()?, &["batter_id", "pitcher_id", "AB", "H"], MATCHUPS_FILE)?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let f = |c: usize| rec.get(idx[c]).unwrap_or("");
        let row = MatchupRow {
            batter_id: f(0).to_string(),
            pitcher_id: f(1).to_string(),
            at_bats: parse_number(f(2), MATCHUPS_FILE, line, "AB")?,
            hits: parse_number(f(3), MATCHUPS_FILE, line, "H")?,
        };
        if row.hits > row.at_bats {
            return Err(GlmfError::InvalidData(format!(
                "{MATCHUPS_FILE} line {line}: {} hits in {} at-bats",
                row.hits, row.at_bats
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Read the three tables from `dir`.
pub fn load_raw(dir: &Path) -> Result<RawTables> {
    Ok(RawTables {
        batters: read_roster(dir, BATTING_FILE, "batter_id", &BATTING_STATS, "PA")?,
        pitchers: read_roster(dir, PITCHING_FILE, "pitcher_id", &PITCHING_STATS, "BF")?,
        matchups: read_matchups(dir)?,
    })
}

/// Write the three tables to `dir` in the documented schema.
pub fn write_raw(raw: &RawTables, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let roster = |file: &str, id: &str, stats: &[&str], exposure: &str, rows: &[RosterRow]| -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(file))?;
        let mut header = vec![id];
        header.extend_from_slice(stats);
        header.push(exposure);
        w.write_record(&header)?;
        for r in rows {
            let mut rec = vec![r.id.clone()];
            for (s, v) in r.stats.iter().enumerate() {
                rec.push(if file == PITCHING_FILE && s == IP_INDEX {
                    format_innings(*v)
                } else {
                    v.to_string()
                });
            }
            rec.push(r.exposure.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    };
    roster(BATTING_FILE, "batter_id", &BATTING_STATS, "PA", &raw.batters)?;
    roster(PITCHING_FILE, "pitcher_id", &PITCHING_STATS, "BF", &raw.pitchers)?;
    let mut w = csv::Writer::from_path(dir.join(MATCHUPS_FILE))?;
    w.write_record(["batter_id", "pitcher_id", "AB", "H"])?;
    for m in &raw.matchups {
        w.write_record([
            m.batter_id.clone(),
            m.pitcher_id.clone(),
            m.at_bats.to_string(),
            m.hits.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sum rows sharing an id, keeping first-appearance order.
fn merge_duplicates(rows: &[RosterRow]) -> Vec<RosterRow> {
    let mut out: Vec<RosterRow> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for r in rows {
        match seen.get(r.id.as_str()) {
            Some(&k) => {
                let acc = &mut out[k];
                for (a, b) in acc.stats.iter_mut().zip(&r.stats) {
                    *a += b;
                }
                acc.exposure += r.exposure;
            }
            None => {
                seen.insert(&r.id, out.len());
                out.push(r.clone());
            }
        }
    }
    out
}

/// Apply the roster thresholds, merge duplicates and keep only matchups
/// between retained players with at least one at-bat. Players without
/// exposure are dropped with a warning.
pub fn filter_rosters(raw: &RawTables, filter: &RosterFilter) -> Result<RawTables> {
    let keep = |rows: Vec<RosterRow>, pass: &dyn Fn(&RosterRow) -> bool, what: &str| -> Vec<RosterRow> {
        rows.into_iter()
            .filter(|r| {
                if !pass(r) {
                    return false;
                }
                if !(r.exposure > 0.0) {
                    log::warn!("dropping {what} {}: zero exposure", r.id);
                    return false;
                }
                true
            })
            .collect()
    };
    let all_batters = merge_duplicates(&raw.batters);
    let all_pitchers = merge_duplicates(&raw.pitchers);
    let batters = keep(all_batters.clone(), &|r| r.stats[AB_INDEX] >= filter.min_at_bats, "batter");
    let pitchers = keep(all_pitchers.clone(), &|r| r.stats[IP_INDEX] > filter.min_innings, "pitcher");
    if batters.is_empty() || pitchers.is_empty() {
        return Err(GlmfError::InvalidData(format!(
            "filtering left {} batters and {} pitchers",
            batters.len(),
            pitchers.len()
        )));
    }
    let known_b: std::collections::HashSet<&str> = all_batters.iter().map(|r| r.id.as_str()).collect();
    let known_p: std::collections::HashSet<&str> = all_pitchers.iter().map(|r| r.id.as_str()).collect();
    let kept_b: std::collections::HashSet<&str> = batters.iter().map(|r| r.id.as_str()).collect();
    let kept_p: std::collections::HashSet<&str> = pitchers.iter().map(|r| r.id.as_str()).collect();
    let mut matchups = Vec::new();
    for m in &raw.matchups {
        if !known_b.contains(m.batter_id.as_str()) {
            return Err(GlmfError::InvalidData(format!("matchup names unknown batter `{}`", m.batter_id)));
        }
        if !known_p.contains(m.pitcher_id.as_str()) {
            return Err(GlmfError::InvalidData(format!("matchup names unknown pitcher `{}`", m.pitcher_id)));
        }
        if kept_b.contains(m.batter_id.as_str()) && kept_p.contains(m.pitcher_id.as_str()) && m.at_bats > 0.0 {
            matchups.push(m.clone());
        }
    }
    Ok(RawTables {
        batters,
        pitchers,
        matchups,
    })
}

/// Standardized side blocks with the statistic names that survived.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    /// Pitching statistics × pitchers.
    pub y: DMatrix<f64>,
    pub y_stats: Vec<String>,
    /// Batters × batting statistics.
    pub z: DMatrix<f64>,
    pub z_stats: Vec<String>,
}

/// Center each column and divide by its sample standard deviation.
/// Constant columns are dropped; the kept column indices are returned.
pub fn standardize_columns(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let n = m.nrows() as f64;
    let mut kept = Vec::new();
    let mut cols = Vec::new();
    for (k, col) in m.column_iter().enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if !(var > 1e-24) || !var.is_finite() {
            continue;
        }
        let sd = var.sqrt();
        cols.push(col.map(|v| (v - mean) / sd));
        kept.push(k);
    }
    let out = if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    (out, kept)
}

fn scaled_block(rows: &[RosterRow], stats: &[&str], what: &str) -> Result<(DMatrix<f64>, Vec<String>)> {
    if rows.len() < 2 {
        return Err(GlmfError::InvalidData(format!("need at least two {what}s to standardize")));
    }
    let raw = DMatrix::from_fn(rows.len(), stats.len(), |i, k| rows[i].stats[k] / rows[i].exposure);
    let (block, kept) = standardize_columns(&raw);
    for (k, name) in stats.iter().enumerate() {
        if !kept.contains(&k) {
            log::warn!("dropping constant {what} statistic {name}");
        }
    }
    if kept.is_empty() {
        return Err(GlmfError::InvalidData(format!("every {what} statistic is constant")));
    }
    Ok((block, kept.iter().map(|&k| stats[k].to_string()).collect()))
}

/// Divide each statistic by the player's exposure and standardize columns.
pub fn scale_covariates(filtered: &RawTables) -> Result<Covariates> {
    for r in filtered.batters.iter().chain(&filtered.pitchers) {
        if !(r.exposure > 0.0) {
            return Err(GlmfError::InvalidData(format!("player {} has zero exposure", r.id)));
        }
    }
    let (pitching, y_stats) = scaled_block(&filtered.pitchers, &PITCHING_STATS, "pitching")?;
    let (z, z_stats) = scaled_block(&filtered.batters, &BATTING_STATS, "batting")?;
    Ok(Covariates {
        y: pitching.transpose(),
        y_stats,
        z,
        z_stats,
    })
}

/// Build X and N from the matchups, with a binomial X and normal side
/// blocks of estimated variance.
pub fn assemble(filtered: &RawTables, covariates: &Covariates) -> Result<LinkedDataset> {
    let rows: HashMap<&str, usize> = filtered.batters.iter().enumerate().map(|(k, r)| (r.id.as_str(), k)).collect();
    let cols: HashMap<&str, usize> = filtered.pitchers.iter().enumerate().map(|(k, r)| (r.id.as_str(), k)).collect();
    let (m1, n1) = (rows.len(), cols.len());
    if m1 != filtered.batters.len() || n1 != filtered.pitchers.len() {
        return Err(GlmfError::InvalidData("roster ids must be unique".into()));
    }
    if covariates.y.ncols() != n1 || covariates.z.nrows() != m1 {
        return Err(GlmfError::Dimension("covariate blocks do not match the rosters".into()));
    }
    let mut x = DMatrix::zeros(m1, n1);
    let mut trials = DMatrix::zeros(m1, n1);
    for m in &filtered.matchups {
        let (Some(&i), Some(&j)) = (rows.get(m.batter_id.as_str()), cols.get(m.pitcher_id.as_str())) else {
            return Err(GlmfError::InvalidData(format!(
                "matchup {} vs {} references a player outside the rosters",
                m.batter_id, m.pitcher_id
            )));
        };
        x[(i, j)] += m.hits;
        trials[(i, j)] += m.at_bats;
        if x[(i, j)] > trials[(i, j)] {
            return Err(GlmfError::InvalidData(format!(
                "matchup {} vs {} totals {} hits in {} at-bats",
                m.batter_id,
                m.pitcher_id,
                x[(i, j)],
                trials[(i, j)]
            )));
        }
    }
    let mask = trials.map(|n| n >= 1.0);
    let labels = Labels {
        rows: filtered.batters.iter().map(|r| r.id.clone()).collect(),
        cols: filtered.pitchers.iter().map(|r| r.id.clone()).collect(),
        y_rows: covariates.y_stats.clone(),
        z_cols: covariates.z_stats.clone(),
    };
    let dataset = LinkedDataset::with_specs(
        x,
        trials,
        covariates.y.clone(),
        covariates.z.clone(),
        mask,
        DistributionSpec::binomial(),
        DistributionSpec::normal_estimated(),
        DistributionSpec::normal_estimated(),
        labels,
    )?;
    audit_orientation(&dataset, filtered)?;
    Ok(dataset)
}

/// Y's columns and Z's rows must carry X's pitcher and batter ids.
fn audit_orientation(dataset: &LinkedDataset, filtered: &RawTables) -> Result<()> {
    let l = dataset.labels();
    let pitchers_ok = l.cols.iter().zip(&filtered.pitchers).all(|(a, b)| *a == b.id);
    let batters_ok = l.rows.iter().zip(&filtered.batters).all(|(a, b)| *a == b.id);
    let (_, n1, _, _) = dataset.dims();
    if !pitchers_ok || !batters_ok || dataset.y().ncols() != n1 || dataset.z().nrows() != l.rows.len() {
        return Err(GlmfError::InvalidData("block orientation audit failed".into()));
    }
    Ok(())
}

/// Load, filter, scale and assemble the tables in `dir`.
pub fn ingest(dir: &Path, filter: &RosterFilter) -> Result<LinkedDataset> {
    let raw = load_raw(dir)?;
    let filtered = filter_rosters(&raw, filter)?;
    let cov = scale_covariates(&filtered)?;
    assemble(&filtered, &cov)
}

// ---------------------------------------------------------------------------
// Block files: an assembled dataset as labelled matrices.

const BLOCK_SPECS: &str = "specs.json";

#[derive(Serialize, Deserialize)]
struct BlockSpecs {
    x: DistributionSpec,
    y: DistributionSpec,
    z: DistributionSpec,
}

/// Write a matrix with a header of column labels and a leading label column.
pub fn write_matrix<T: ToString>(
    path: &Path,
    m: &DMatrix<T>,
    rows: &[String],
    cols: &[String],
) -> Result<()>
where
    T: nalgebra::Scalar,
{
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![String::new()];
    header.extend(cols.iter().cloned());
    w.write_record(&header)?;
    for (i, label) in rows.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend((0..m.ncols()).map(|j| m[(i, j)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a file written by [`write_matrix`]: `(values, row labels, column labels)`.
pub fn read_matrix(path: &Path) -> Result<(DMatrix<f64>, Vec<String>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().from_path(path)?;
    let cols: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.get(0).unwrap_or("").to_string());
        for f in rec.iter().skip(1) {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| GlmfError::Parse(format!("{}: `{f}` is not a number", path.display())))?,
            );
        }
    }
    if values.len() != rows.len() * cols.len() {
        return Err(GlmfError::Dimension(format!("{} is ragged", path.display())));
    }
    Ok((DMatrix::from_row_slice(rows.len(), cols.len(), &values), rows, cols))
}

/// Save a dataset as `x.csv`, `trials.csv`, `mask.csv`, `y.csv`, `z.csv`
/// and `specs.json`. Numbers are written in shortest round-trip form.
pub fn save_dataset(dataset: &LinkedDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let l = dataset.labels();
    write_matrix(&dir.join("x.csv"), dataset.x(), &l.rows, &l.cols)?;
    write_matrix(&dir.join("trials.csv"), dataset.trials(), &l.rows, &l.cols)?;
    write_matrix(&dir.join("mask.csv"), &dataset.mask().map(u8::from), &l.rows, &l.cols)?;
    write_matrix(&dir.join("y.csv"), dataset.y(), &l.y_rows, &l.cols)?;
    write_matrix(&dir.join("z.csv"), dataset.z(), &l.rows, &l.z_cols)?;
    let specs = BlockSpecs {
        x: dataset.spec_x(),
        y: dataset.spec_y(),
        z: dataset.spec_z(),
    };
    fs::write(dir.join(BLOCK_SPECS), serde_json::to_string_pretty(&specs)?)?;
    Ok(())
}

pub fn is_block_dir(dir: &Path) -> bool {
    dir.join(BLOCK_SPECS).is_file()
}

pub fn load_dataset(dir: &Path) -> Result<LinkedDataset> {
    let specs: BlockSpecs = serde_json::from_str(&fs::read_to_string(dir.join(BLOCK_SPECS))?)?;
    let (x, rows, cols) = read_matrix(&dir.join("x.csv"))?;
    let (trials, _, _) = read_matrix(&dir.join("trials.csv"))?;
    let (mask, _, _) = read_matrix(&dir.join("mask.csv"))?;
    let (y, y_rows, _) = read_matrix(&dir.join("y.csv"))?;
    let (z, _, z_cols) = read_matrix(&dir.join("z.csv"))?;
    LinkedDataset::with_specs(
        x,
        trials,
        y,
        z,
        mask.map(|v| v != 0.0),
        specs.x,
        specs.y,
        specs.z,
        Labels {
            rows,
            cols,
            y_rows,
            z_cols,
        },
    )
}

/// Dataset from `dir`: block files when present, season tables otherwise.
pub fn load_any(dir: &Path, filter: &RosterFilter) -> Result<LinkedDataset> {
    if is_block_dir(dir) {
        load_dataset(dir)
    } else {
        ingest(dir, filter)
    }
}

// ---------------------------------------------------------------------------
// Synthetic league

/// A made-up season whose matchup logits are low rank in batter and pitcher
/// traits, and whose season statistics are noisy functions of those traits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueConfig {
    /// Batters and pitchers that pass the roster filter.
    pub batters: usize,
    pub pitchers: usize,
    /// Extra players below the thresholds.
    pub short_batters: usize,
    pub short_pitchers: usize,
    /// Matchups with at least one at-bat among retained players.
    pub observed: usize,
    pub seed: u64,
}

impl Default for LeagueConfig {
    fn default() -> Self {
        Self {
            batters: 508,
            pitchers: 516,
            short_batters: 24,
            short_pitchers: 30,
            observed: 62_528,
            seed: 2017,
        }
    }
}

pub const LEAGUE_MEAN_LOGIT: f64 = -1.1;
const TRAITS: usize = 3;

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng)
}

fn binomial(rng: &mut ChaCha8Rng, n: f64, p: f64) -> f64 {
    Binomial::new(n as u64, p.clamp(0.0, 1.0)).expect("valid binomial").sample(rng) as f64
}

/// Logit of a batter (traits `f`) facing a pitcher (traits `g`).
pub fn league_logit(f: &[f64], g: &[f64]) -> f64 {
    LEAGUE_MEAN_LOGIT + 0.30 * f[0] - 0.25 * g[0] + 0.20 * (f[1] * g[1] + f[2] * g[2])
}

/// Season tables for a synthetic league. Retained rosters have exactly the
/// configured sizes; one batter sits at exactly the at-bat threshold and one
/// pitcher at exactly 20.0 innings (excluded) next to one at 20.1 (kept).
pub fn synthetic_league(cfg: &LeagueConfig) -> Result<RawTables> {
    if cfg.batters < 2 || cfg.pitchers < 2 {
        return Err(GlmfError::InvalidConfig("a league needs at least two batters and two pitchers".into()));
    }
    if cfg.observed == 0 || cfg.observed > cfg.batters * cfg.pitchers {
        return Err(GlmfError::InvalidConfig(format!("cannot observe {} matchups", cfg.observed)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let traits = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..TRAITS).map(|_| std_normal.sample(rng)).collect()).collect()
    };
    let nb = cfg.batters + cfg.short_batters;
    let np = cfg.pitchers + cfg.short_pitchers;
    let bf = traits(nb, &mut rng);
    let pf = traits(np, &mut rng);
    // Per-statistic log-rate loadings on the traits.
    let bl: Vec<Vec<f64>> = (0..BATTING_STATS.len())
        .map(|_| (0..TRAITS).map(|_| 0.25 * std_normal.sample(&mut rng)).collect())
        .collect();
    let pl: Vec<Vec<f64>> = (0..PITCHING_STATS.len())
        .map(|_| (0..TRAITS).map(|_| 0.25 * std_normal.sample(&mut rng)).collect())
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    const BATTING_RATES: [f64; 18] = [
        0.25, 0.0, 0.12, 0.0, 0.045, 0.005, 0.03, 0.11, 0.015, 0.005, 0.08, 0.21, 0.0, 0.02, 0.01, 0.004, 0.007,
        0.006,
    ];
    let mut batters = Vec::with_capacity(nb);
    for (i, f) in bf.iter().enumerate() {
        let short = i >= cfg.batters;
        let at_bats = if i == 0 {
            50.0
        } else if short {
            if i == cfg.batters { 49.0 } else { rng.random_range(1..50) as f64 }
        } else {
            rng.random_range(60..650) as f64
        };
        let pa = (at_bats * rng.random_range(1.08..1.16)).round();
        let mut stats = vec![0.0; BATTING_STATS.len()];
        for (k, rate) in BATTING_RATES.iter().enumerate() {
            stats[k] = poisson(&mut rng, pa * rate * dot(&bl[k], f).exp());
        }
        stats[AB_INDEX] = at_bats;
        stats[3] = binomial(&mut rng, at_bats, logistic(LEAGUE_MEAN_LOGIT + 0.30 * f[0]));
        stats[12] = stats[3] + stats[4] + 2.0 * stats[5] + 3.0 * stats[6];
        batters.push(RosterRow {
            id: format!("b{i:04}"),
            stats,
            exposure: pa,
        });
    }

    const PITCHING_RATES: [f64; 19] = [
        0.012, 0.012, 0.06, 0.03, 0.02, 0.001, 0.0005, 0.008, 0.0, 0.0, 0.12, 0.11, 0.03, 0.08, 0.006, 0.21, 0.01,
        0.001, 0.008,
    ];
    let mut pitchers = Vec::with_capacity(np);
    for (j, g) in pf.iter().enumerate() {
        let short = j >= cfg.pitchers;
        let outs: f64 = if j == 0 {
            61.0
        } else if short {
            if j == cfg.pitchers { 60.0 } else { rng.random_range(1..60) as f64 }
        } else {
            rng.random_range(66..640) as f64
        };
        let faced = (outs * rng.random_range(1.30..1.45)).round();
        let mut stats = vec![0.0; PITCHING_STATS.len()];
        for (k, rate) in PITCHING_RATES.iter().enumerate() {
            stats[k] = poisson(&mut rng, faced * rate * dot(&pl[k], g).exp());
        }
        stats[IP_INDEX] = outs / 3.0;
        stats[9] = binomial(&mut rng, (faced * 0.9).round(), logistic(LEAGUE_MEAN_LOGIT - 0.25 * g[0]));
        stats[11] = binomial(&mut rng, stats[10], 0.92);
        pitchers.push(RosterRow {
            id: format!("p{j:04}"),
            stats,
            exposure: faced,
        });
    }

    // Weighted sampling of which retained pairs met, by playing time.
    let weights_b: Vec<f64> = batters[..cfg.batters].iter().map(|r| r.exposure).collect();
    let weights_p: Vec<f64> = pitchers[..cfg.pitchers].iter().map(|r| r.exposure).collect();
    let pairs = rand::seq::index::sample_weighted(
        &mut rng,
        cfg.batters * cfg.pitchers,
        |k| weights_b[k % cfg.batters] * weights_p[k / cfg.batters],
        cfg.observed,
    )
    .map_err(|e| GlmfError::InvalidConfig(format!("matchup sampling failed: {e}")))?;
    let mut met: Vec<usize> = pairs.into_vec();
    met.sort_unstable();
    let mut matchups = Vec::with_capacity(met.len() + cfg.short_batters + cfg.short_pitchers);
    let mut push = |rng: &mut ChaCha8Rng, i: usize, j: usize| {
        let at_bats = 1.0 + poisson(rng, 1.6);
        let p = logistic(league_logit(&bf[i], &pf[j]));
        matchups.push(MatchupRow {
            batter_id: batters[i].id.clone(),
            pitcher_id: pitchers[j].id.clone(),
            at_bats,
            hits: binomial(rng, at_bats, p),
        });
    };
    for k in met {
        push(&mut rng, k % cfg.batters, k / cfg.batters);
    }
    for i in cfg.batters..nb {
        let j = rng.random_range(0..np);
        push(&mut rng, i, j);
    }
    for j in cfg.pitchers..np {
        let i = rng.random_range(0..nb);
        push(&mut rng, i, j);
    }
    Ok(RawTables {
        batters,
        pitchers,
        matchups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, stats: Vec<f64>, exposure: f64) -> RosterRow {
        RosterRow {
            id: id.into(),
            stats,
            exposure,
        }
    }

    fn tiny() -> RawTables {
        let mut b1 = vec![1.0; 18];
        b1[AB_INDEX] = 50.0;
        let mut b2 = vec![2.0; 18];
        b2[AB_INDEX] = 80.0;
        let mut b3 = vec![1.0; 18];
        b3[AB_INDEX] = 49.0;
        let mut p1 = vec![1.0; 19];
        p1[IP_INDEX] = 20.0;
        let mut p2 = vec![3.0; 19];
        p2[IP_INDEX] = 20.0 + 1.0 / 3.0;
        let mut p3 = vec![5.0; 19];
        p3[IP_INDEX] = 40.0;
        RawTables {
            batters: vec![row("a", b1, 60.0), row("b", b2, 90.0), row("c", b3, 55.0)],
            pitchers: vec![row("x", p1, 90.0), row("y", p2, 100.0), row("z", p3, 200.0)],
            matchups: vec![
                MatchupRow { batter_id: "a".into(), pitcher_id: "y".into(), at_bats: 2.0, hits: 1.0 },
                MatchupRow { batter_id: "c".into(), pitcher_id: "z".into(), at_bats: 3.0, hits: 1.0 },
                MatchupRow { batter_id: "b".into(), pitcher_id: "x".into(), at_bats: 3.0, hits: 1.0 },
            ],
        }
    }

    #[test]
    fn innings_notation() {
        assert_eq!(parse_innings("20").unwrap(), 20.0);
        assert_eq!(parse_innings("20.0").unwrap(), 20.0);
        assert!((parse_innings("20.1").unwrap() - (20.0 + 1.0 / 3.0)).abs() < 1e-12);
        assert!((parse_innings("20.2").unwrap() - (20.0 + 2.0 / 3.0)).abs() < 1e-12);
        assert!(parse_innings("20.3").is_err());
        assert!(parse_innings("x").is_err());
        assert_eq!(format_innings(20.0 + 2.0 / 3.0), "20.2");
    }

    #[test]
    fn thresholds_are_strict_for_innings_and_inclusive_for_at_bats() {
        let f = filter_rosters(&tiny(), &RosterFilter::default()).unwrap();
        let ids = |rows: &[RosterRow]| rows.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&f.batters), vec!["a", "b"]);
        assert_eq!(ids(&f.pitchers), vec!["y", "z"]);
        assert_eq!(f.matchups.len(), 1);
    }

    #[test]
    fn unknown_ids_are_rejected() {
        let mut raw = tiny();
        raw.matchups[0].pitcher_id = "nobody".into();
        assert!(filter_rosters(&raw, &RosterFilter::default()).is_err());
    }

    #[test]
    fn toy_assembly_has_one_observed_cell() {
        let f = filter_rosters(&tiny(), &RosterFilter::default()).unwrap();
        let mut f2 = f.clone();
        // Give the batting block some variance in a few statistics.
        f2.batters[1].stats[4] = 9.0;
        f2.pitchers[1].stats[15] = 40.0;
        let cov = scale_covariates(&f2).unwrap();
        let d = assemble(&f2, &cov).unwrap();
        assert_eq!(d.observed_count(), 1);
        assert!(d.mask()[(0, 0)]);
        assert_eq!(d.x()[(0, 0)], 1.0);
        assert_eq!(d.trials()[(0, 0)], 2.0);
        assert_eq!(d.labels().cols, vec!["y", "z"]);
    }

    #[test]
    fn exposure_scaling() {
        let mut stats = vec![0.0; 19];
        stats[15] = 40.0;
        let rows = vec![row("p", stats.clone(), 200.0), row("q", stats, 100.0)];
        let raw = DMatrix::from_fn(2, 19, |i, k| rows[i].stats[k] / rows[i].exposure);
        assert!((raw[(0, 15)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn standardize_drops_constant_columns() {
        let m = DMatrix::from_row_slice(4, 3, &[1.0, 5.0, 2.0, 2.0, 5.0, 4.0, 3.0, 5.0, 6.0, 4.0, 5.0, 9.0]);
        let (s, kept) = standardize_columns(&m);
        assert_eq!(kept, vec![0, 2]);
        for col in s.column_iter() {
            let mean = col.sum() / 4.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_matchups_are_summed() {
        let mut raw = tiny();
        raw.matchups.push(MatchupRow { batter_id: "a".into(), pitcher_id: "y".into(), at_bats: 4.0, hits: 2.0 });
        raw.batters[1].stats[4] = 9.0;
        raw.pitchers[1].stats[15] = 40.0;
        let f = filter_rosters(&raw, &RosterFilter::default()).unwrap();
        let d = assemble(&f, &scale_covariates(&f).unwrap()).unwrap();
        assert_eq!(d.x()[(0, 0)], 3.0);
        assert_eq!(d.trials()[(0, 0)], 6.0);
    }

    #[test]
    fn small_league_shapes() {
        let cfg = LeagueConfig {
            batters: 40,
            pitchers: 30,
            short_batters: 5,
            short_pitchers: 4,
            observed: 300,
            seed: 1,
        };
        let raw = synthetic_league(&cfg).unwrap();
        let f = filter_rosters(&raw, &RosterFilter::default()).unwrap();
        assert_eq!(f.batters.len(), 40);
        assert_eq!(f.pitchers.len(), 30);
        let d = assemble(&f, &scale_covariates(&f).unwrap()).unwrap();
        assert_eq!(d.observed_count(), 300);
        assert_eq!(raw, synthetic_league(&cfg).unwrap());
    }
}
