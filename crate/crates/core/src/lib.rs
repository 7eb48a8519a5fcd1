//! Generalized linked matrix factorization (GLMF) for three bidimensionally
//! linked matrices with exponential-family entries, together with the
//! baseline imputers, simulation generators and evaluation harnesses used to
//! predict batter-versus-pitcher batting averages.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod expfam;
pub mod glmf;
pub mod impute;
pub mod ingest;
pub mod irls;
pub mod linalg;
pub mod linked_model;
pub mod simgen;

pub use error::{GlmfError, Result};
pub use eval::{CvConfig, CvReport, MethodScore, SimulationReport};
pub use expfam::{Dispersion, DistributionSpec, Family};
pub use glmf::{FitConfig, InitMode};
pub use impute::{ImputationResult, ImputeConfig, Method};
pub use ingest::{LeagueConfig, RawTables, RosterFilter};
pub use linked_model::{Factorization, Labels, LinkedDataset, Reconstruction};
pub use simgen::{Dims, GridSpec, SimulationConfig};
