use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::CommandFactory;
use glmf_core::eval::{self, Metric};
use glmf_core::simgen::{STUDY_NMAX, STUDY_RANKS, STUDY_SIGMAS};
use glmf_core::{glmf, impute, ingest, CvConfig, Dims, Factorization, GridSpec, LeagueConfig, LinkedDataset, Method};
use serde::Serialize;

use crate::settings::{self, pick, pick_list, FileConfig, Numerics};
use crate::{Cli, Command, CvArgs, FitArgs, ImputeArgs, ReportArgs, SimulateArgs, SynthArgs};

pub enum Outcome {
    Success,
    /// Outputs were written but this many units of work failed.
    PartialFailure(usize),
}

impl Outcome {
    fn from_failures(n: usize) -> Self {
        if n == 0 {
            Outcome::Success
        } else {
            Outcome::PartialFailure(n)
        }
    }
}

/// Exit with a usage error (status 2).
fn usage(msg: String) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, msg).exit()
}

/// Everything needed to reproduce a command's outputs. Thread count and
/// wall-clock times are left out so outputs stay byte-identical.
#[derive(Serialize)]
struct Manifest<'a, S: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    settings: S,
    outputs: Vec<String>,
    failures: usize,
}

fn write_manifest<S: Serialize>(path: &Path, command: &str, seed: u64, settings: S, outputs: &[&str], failures: usize) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        settings,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        failures,
    };
    fs::write(path, serde_json::to_string_pretty(&m)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn sidecar_manifest(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "output".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let jobs = cli.jobs.or(file.jobs).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building the worker pool")?;
    let seed_flag = cli.seed.or(file.seed);
    let seed = seed_flag.unwrap_or(0);
    let started = Instant::now();
    let (name, outcome) = pool.install(|| -> Result<(&str, Outcome)> {
        Ok(match cli.command {
            Command::Simulate(a) => ("simulate", simulate(a, &file, seed)?),
            Command::Fit(a) => ("fit", fit(a, &file, seed)?),
            Command::Impute(a) => ("impute", impute_cmd(a, &file, seed)?),
            Command::Cv(a) => ("cv", cv(a, &file, seed)?),
            Command::Report(a) => ("report", report(a)?),
            Command::SynthData(a) => ("synth-data", synth(a, &file, seed_flag)?),
        })
    })?;
    eprintln!("{name} finished in {:.2}s", started.elapsed().as_secs_f64());
    Ok(outcome)
}

fn load_data(flag: Option<PathBuf>, file: &FileConfig) -> Result<(PathBuf, LinkedDataset)> {
    let dir = settings::data_dir(flag, file)?;
    let dataset = ingest::load_any(&dir, &settings::roster_filter(file))
        .with_context(|| format!("loading data from {}", dir.display()))?;
    let (m1, n1, m2, n2) = dataset.dims();
    log::info!(
        "loaded {m1} batters x {n1} pitchers ({} observed), {m2} pitching and {n2} batting statistics",
        dataset.observed_count()
    );
    Ok((dir, dataset))
}

fn check_members<T: PartialEq + std::fmt::Debug>(what: &str, given: &[T], valid: &[T]) {
    if let Some(bad) = given.iter().find(|v| !valid.contains(v)) {
        usage(format!("invalid {what} {bad:?}; valid values are {valid:?}"));
    }
}

#[derive(Serialize)]
struct SimulateSettings {
    grid: GridSpec,
    methods: Vec<Method>,
    numerics: Numerics,
}

fn simulate(a: SimulateArgs, file: &FileConfig, seed: u64) -> Result<Outcome> {
    let s = &file.simulate;
    let sigmas = pick_list(&a.sigma, &s.sigma, &settings::DEFAULT_SIGMAS);
    let nmaxes = pick_list(&a.nmax, &s.nmax, &settings::DEFAULT_NMAX);
    let ranks = pick_list(&a.rank, &s.rank, &settings::DEFAULT_RANKS);
    check_members("sigma", &sigmas, &STUDY_SIGMAS);
    check_members("nmax", &nmaxes, &STUDY_NMAX);
    check_members("rank", &ranks, &STUDY_RANKS);
    let dims = match a.dims.as_slice() {
        [] => s.dims.unwrap_or_default(),
        &[m1, n1, m2, n2] => Dims { m1, n1, m2, n2 },
        other => usage(format!("--dims takes four sizes m1,n1,m2,n2, got {}", other.len())),
    };
    let study = GridSpec::study(seed);
    let grid = GridSpec {
        sigmas,
        nmaxes,
        ranks,
        replicates: pick(a.reps, s.reps, study.replicates),
        dims,
        error_variance: pick(a.error_variance, s.error_variance, study.error_variance),
        missing_fraction: pick(a.missing, s.missing_fraction, study.missing_fraction),
        master_seed: seed,
    };
    let methods = pick_list(&a.methods, &s.methods, &Method::ALL);
    let numerics = Numerics::resolve(file, seed);
    log::info!(
        "simulating {} grid cells",
        grid.sigmas.len() * grid.nmaxes.len() * grid.ranks.len() * grid.replicates
    );
    let report = eval::run_simulation_study(&grid, &methods, &numerics.impute_config(1))?;
    let failures = report.records.iter().filter(|r| r.error.is_some()).count();

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(&a.out, "records.csv", &report.records_csv()?)?;
    write(&a.out, "table_rmse.csv", &report.table_csv(Metric::Rmse)?)?;
    write(&a.out, "table_loglik.csv", &report.table_csv(Metric::LogLik)?)?;
    write(&a.out, "marginals.csv", &report.marginal_csv()?)?;
    let outputs = ["records.csv", "table_rmse.csv", "table_loglik.csv", "marginals.csv"];
    let settings = SimulateSettings {
        grid,
        methods: report.methods.clone(),
        numerics,
    };
    write_manifest(&a.out.join("manifest.json"), "simulate", seed, settings, &outputs, failures)?;
    Ok(Outcome::from_failures(failures))
}

#[derive(Serialize)]
struct FitSettings {
    data: PathBuf,
    method: Method,
    rank: usize,
    numerics: Numerics,
}

fn factorization_method(method: Method) -> Method {
    if !matches!(method, Method::Glmf | Method::Lmf) {
        usage(format!("{method} has no factorization; use glmf or lmf"));
    }
    method
}

fn fit(a: FitArgs, file: &FileConfig, seed: u64) -> Result<Outcome> {
    let method = factorization_method(pick(a.method, file.impute.method, Method::Glmf));
    let rank = pick(a.rank, file.impute.rank, 3);
    let (dir, dataset) = load_data(a.data, file)?;
    let numerics = Numerics::resolve(file, seed);
    let first = impute::first_pass_dataset(&dataset, method)?;
    let f = glmf::fit(&first, &numerics.fit_config(rank))?;
    if !f.converged {
        log::warn!("{method} fit stopped after {} cycles without converging", f.iterations);
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&a.out, f.to_json()? + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    let name = a.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let settings = FitSettings {
        data: dir,
        method,
        rank,
        numerics,
    };
    write_manifest(&sidecar_manifest(&a.out), "fit", seed, settings, &[&name], 0)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct ImputeSettings {
    data: PathBuf,
    method: Method,
    rank: usize,
    warm_start: Option<PathBuf>,
    numerics: Numerics,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    method: Method,
    rank: Option<usize>,
    iterations: usize,
    converged: bool,
    trace: &'a [f64],
    inner_nonconverged: usize,
    error: &'a Option<String>,
}

fn impute_cmd(a: ImputeArgs, file: &FileConfig, seed: u64) -> Result<Outcome> {
    let method = pick(a.method, file.impute.method, Method::Glmf);
    let rank = pick(a.rank, file.impute.rank, 3);
    let (dir, dataset) = load_data(a.data, file)?;
    let numerics = Numerics::resolve(file, seed);
    let warm = match &a.warm_start {
        None => None,
        Some(p) => {
            factorization_method(method);
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let f = Factorization::from_json(&text).with_context(|| format!("parsing {}", p.display()))?;
            if f.rank != rank {
                bail!("warm-start factorization has rank {}, requested rank {rank}", f.rank);
            }
            Some(f)
        }
    };
    let result = impute::impute_from(&dataset, method, rank, &numerics.impute_config(rank), warm.as_ref())?;
    if let Some(e) = &result.error {
        log::error!("{method} imputation stopped early: {e}");
    }

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let labels = dataset.labels();
    ingest::write_matrix(&a.out.join("p_hat.csv"), &result.p_hat, &labels.rows, &labels.cols)?;
    let diag = Diagnostics {
        method,
        rank: method.is_ranked().then_some(rank),
        iterations: result.iterations,
        converged: result.converged,
        trace: &result.trace,
        inner_nonconverged: result.inner_nonconverged,
        error: &result.error,
    };
    write(&a.out, "diagnostics.json", &(serde_json::to_string_pretty(&diag)? + "\n"))?;
    let mut outputs = vec!["p_hat.csv", "diagnostics.json"];
    if let Some(f) = &result.factorization {
        write(&a.out, "factorization.json", &(f.to_json()? + "\n"))?;
        outputs.push("factorization.json");
    }
    let failures = usize::from(result.error.is_some());
    let settings = ImputeSettings {
        data: dir,
        method,
        rank,
        warm_start: a.warm_start,
        numerics,
    };
    write_manifest(&a.out.join("manifest.json"), "impute", seed, settings, &outputs, failures)?;
    Ok(Outcome::from_failures(failures))
}

#[derive(Serialize)]
struct CvSettings {
    data: PathBuf,
    cv: CvConfig,
    methods: Vec<Method>,
    numerics: Numerics,
}

fn cv(a: CvArgs, file: &FileConfig, seed: u64) -> Result<Outcome> {
    let c = &file.cv;
    let (dir, dataset) = load_data(a.data, file)?;
    let numerics = Numerics::resolve(file, seed);
    let config = CvConfig {
        folds: pick(a.folds, c.folds, 5),
        seed,
        ranks: pick_list(&a.ranks, &c.ranks, &settings::DEFAULT_RANKS),
        clip: numerics.clip,
    };
    if let Err(e) = config.validate() {
        usage(e.to_string());
    }
    let methods = pick_list(&a.methods, &c.methods, &Method::ALL);
    let report = eval::run_cv(&dataset, &config, &methods, &numerics.impute_config(1))?;
    let failures = report.records.iter().filter(|r| r.error.is_some()).count();

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(&a.out, "cv_table.csv", &report.table_csv()?)?;
    write(&a.out, "cv_summary.csv", &report.summary_csv()?)?;
    write(&a.out, "cv_folds.csv", &report.records_csv()?)?;
    write(&a.out, "cv_pairs.csv", &report.predictions_csv()?)?;
    let outputs = ["cv_table.csv", "cv_summary.csv", "cv_folds.csv", "cv_pairs.csv"];
    let settings = CvSettings {
        data: dir,
        cv: config,
        methods: report.methods.clone(),
        numerics,
    };
    write_manifest(&a.out.join("manifest.json"), "cv", seed, settings, &outputs, failures)?;
    Ok(Outcome::from_failures(failures))
}

fn report(a: ReportArgs) -> Result<Outcome> {
    let path = if a.input.is_dir() { a.input.join("p_hat.csv") } else { a.input.clone() };
    let (p, rows, cols) = ingest::read_matrix(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut w = csv_text(&["rank", "batter", "pitcher", "p_hat"]);
    for (k, (i, j, v)) in eval::favorable_matchups(&p, a.top).into_iter().enumerate() {
        w.push_str(&format!("{},{},{},{v}\n", k + 1, quote(&rows[i]), quote(&cols[j])));
    }
    match &a.out {
        None => print!("{w}"),
        Some(out) => {
            fs::write(out, &w).with_context(|| format!("writing {}", out.display()))?;
            #[derive(Serialize)]
            struct ReportSettings {
                input: PathBuf,
                top: usize,
            }
            let name = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let settings = ReportSettings { input: path, top: a.top };
            write_manifest(&sidecar_manifest(out), "report", 0, settings, &[&name], 0)?;
        }
    }
    Ok(Outcome::Success)
}

fn csv_text(header: &[&str]) -> String {
    header.join(",") + "\n"
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn synth(a: SynthArgs, file: &FileConfig, seed: Option<u64>) -> Result<Outcome> {
    let out = match a.out {
        Some(p) => p,
        None => settings::data_dir(None, file)?,
    };
    let base = settings::league_config(file);
    let config = LeagueConfig {
        batters: pick(a.batters, None, base.batters),
        pitchers: pick(a.pitchers, None, base.pitchers),
        short_batters: pick(a.short_batters, None, base.short_batters),
        short_pitchers: pick(a.short_pitchers, None, base.short_pitchers),
        observed: pick(a.observed, None, base.observed),
        seed: seed.unwrap_or(base.seed),
    };
    let raw = ingest::synthetic_league(&config)?;
    ingest::write_raw(&raw, &out)?;
    let outputs = [ingest::BATTING_FILE, ingest::PITCHING_FILE, ingest::MATCHUPS_FILE];
    write_manifest(&out.join("manifest.json"), "synth-data", config.seed, &config, &outputs, 0)?;
    Ok(Outcome::Success)
}
