//! Compliance-minimizing elastic shapes on rectangular domains split into
//! periodic and branching subdomains.
//!
//! The elastic state is solved for edge forces on a staggered finite-volume
//! grid under equilibrium and coupling constraints; the material density is
//! updated cell by cell with a phase-field descent.

pub mod assembly;
pub mod config;
pub mod decomp;
pub mod driver;
pub mod equilibrium;
pub mod fieldsio;
pub mod geometry;
pub mod oracle;
pub mod phasefield;
pub mod sparse;

pub use assembly::{AssemblyError, ConstraintSystem, DofLayout, LoadSpec, ReducedSystem, SideLoad};
pub use config::RunConfig;
pub use decomp::{DecompError, Decomposition, FacetKind, SubdomainSpec};
pub use driver::{DescentReport, OptimizationConfig, Problem};
pub use equilibrium::{ComplianceWeights, ForceField, SolveError};
pub use fieldsio::GlobalRaster;
pub use geometry::{Rect, Rotation, Side};
pub use phasefield::{PhaseField, PhaseParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
