//! Run settings: built-in defaults, overridden by a TOML file, overridden
//! by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use glmf_core::baselines::CLIP;
use glmf_core::simgen::{STUDY_NMAX, STUDY_RANKS, STUDY_SIGMAS};
use glmf_core::{glmf, impute, irls, Dims, FitConfig, ImputeConfig, InitMode, LeagueConfig, Method, RosterFilter};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "GLMF_DATA_DIR";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub impute: ImputeSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub synth: SynthSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub outer_tolerance: Option<f64>,
    pub max_outer_iter: Option<usize>,
    pub inner_tolerance: Option<f64>,
    pub inner_max_iter: Option<usize>,
    pub init: Option<InitMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputeSection {
    pub tolerance: Option<f64>,
    pub max_iter: Option<usize>,
    pub clip: Option<(f64, f64)>,
    pub warm_start: Option<bool>,
    pub method: Option<Method>,
    pub rank: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub sigma: Option<Vec<f64>>,
    pub nmax: Option<Vec<u32>>,
    pub rank: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub dims: Option<Dims>,
    pub missing_fraction: Option<f64>,
    pub error_variance: Option<f64>,
    pub methods: Option<Vec<Method>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    pub folds: Option<usize>,
    pub ranks: Option<Vec<usize>>,
    pub methods: Option<Vec<Method>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub min_innings: Option<f64>,
    pub min_at_bats: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub batters: Option<usize>,
    pub pitchers: Option<usize>,
    pub short_batters: Option<usize>,
    pub short_pitchers: Option<usize>,
    pub observed: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

/// First of flag, file value and default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// `pick` for list flags, where an empty list means "not given".
pub fn pick_list<T: Clone>(flag: &[T], file: &Option<Vec<T>>, default: &[T]) -> Vec<T> {
    if !flag.is_empty() {
        flag.to_vec()
    } else {
        file.clone().unwrap_or_else(|| default.to_vec())
    }
}

/// Fitter and imputation-loop settings shared by several commands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Numerics {
    pub outer_tolerance: f64,
    pub max_outer_iter: usize,
    pub inner_tolerance: f64,
    pub inner_max_iter: usize,
    pub init: InitMode,
    pub impute_tolerance: f64,
    pub impute_max_iter: usize,
    pub clip: (f64, f64),
    pub warm_start: bool,
    pub seed: u64,
}

impl Numerics {
    pub fn resolve(file: &FileConfig, seed: u64) -> Self {
        let f = &file.fit;
        let i = &file.impute;
        Self {
            outer_tolerance: f.outer_tolerance.unwrap_or(glmf::DEFAULT_OUTER_TOLERANCE),
            max_outer_iter: f.max_outer_iter.unwrap_or(glmf::DEFAULT_MAX_OUTER_ITER),
            inner_tolerance: f.inner_tolerance.unwrap_or(irls::DEFAULT_TOLERANCE),
            inner_max_iter: f.inner_max_iter.unwrap_or(irls::DEFAULT_MAX_ITER),
            init: f.init.unwrap_or(InitMode::Svd),
            impute_tolerance: i.tolerance.unwrap_or(impute::DEFAULT_TOLERANCE),
            impute_max_iter: i.max_iter.unwrap_or(impute::DEFAULT_MAX_ITER),
            clip: i.clip.unwrap_or(CLIP),
            warm_start: i.warm_start.unwrap_or(true),
            seed,
        }
    }

    pub fn fit_config(&self, rank: usize) -> FitConfig {
        FitConfig {
            rank,
            outer_tolerance: self.outer_tolerance,
            max_outer_iter: self.max_outer_iter,
            seed: self.seed,
            init: self.init,
            inner_tolerance: self.inner_tolerance,
            inner_max_iter: self.inner_max_iter,
        }
    }

    pub fn impute_config(&self, rank: usize) -> ImputeConfig {
        ImputeConfig {
            tolerance: self.impute_tolerance,
            max_iter: self.impute_max_iter,
            clip: self.clip,
            warm_start: self.warm_start,
            fit: self.fit_config(rank),
        }
    }
}

pub fn roster_filter(file: &FileConfig) -> RosterFilter {
    let d = RosterFilter::default();
    RosterFilter {
        min_innings: file.ingest.min_innings.unwrap_or(d.min_innings),
        min_at_bats: file.ingest.min_at_bats.unwrap_or(d.min_at_bats),
    }
}

pub fn league_config(file: &FileConfig) -> LeagueConfig {
    let d = LeagueConfig::default();
    let s = &file.synth;
    LeagueConfig {
        batters: s.batters.unwrap_or(d.batters),
        pitchers: s.pitchers.unwrap_or(d.pitchers),
        short_batters: s.short_batters.unwrap_or(d.short_batters),
        short_pitchers: s.short_pitchers.unwrap_or(d.short_pitchers),
        observed: s.observed.unwrap_or(d.observed),
        seed: d.seed,
    }
}

pub const DEFAULT_SIGMAS: [f64; 4] = STUDY_SIGMAS;
pub const DEFAULT_NMAX: [u32; 4] = STUDY_NMAX;
pub const DEFAULT_RANKS: [usize; 3] = STUDY_RANKS;

/// Data directory from the flag, the config file or the environment.
pub fn data_dir(flag: Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    flag.or_else(|| file.data.clone())
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .with_context(|| format!("no data directory: pass --data, set `data` in the config, or set {DATA_DIR_ENV}"))
}
