//! Free-energy functionals, one-dimensional quadratic optimal transport and
//! numerical checks of the transport inequalities built on them.

pub mod config;
pub mod error;
pub mod expr;
pub mod flow;
pub mod functionals;
pub mod inequalities;
pub mod measures;
pub mod models;
pub mod stationary;
pub mod suite;
pub mod transport;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use flow::FlowTrace;
pub use inequalities::IneqReport;
pub use functionals::EnergyBreakdown;
pub use measures::{Grid1D, GridDensity, Quantile};
pub use models::{EntropyKind, EntropyModel, PotentialPair, ScalarFn, YoungKind, YoungPair};
pub use stationary::ReferenceDensity;
pub use suite::{SuiteEntry, SuiteReport};
