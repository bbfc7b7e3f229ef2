//! Difference-in-differences estimation with permutational detrending.
//!
//! The crate is organised bottom-up:
//!
//! - [`glm`]: least squares and logistic (IRLS) fitting with classical inference.
//! - [`panel`] and [`did`]: panel data, design assembly and the original and
//!   detrending DID estimators.
//! - [`perm`]: within-arm permutation, the empirical null and the PD DID result.
//! - [`sim`]: the panel data-generating process used in the simulation studies.
//! - [`experiments`]: scenario grids reporting size, bias and power.
//! - [`io`]: CSV ingestion, canonical JSON results and SVG power charts.

pub mod did;
pub mod error;
pub mod experiments;
pub mod glm;
pub mod io;
pub mod panel;
pub mod perm;
pub mod rng;
pub mod sim;

pub use did::{build_design, estimate_did, gamma_identity_check, DidEstimate, Method, ModelSpec, TrendGranularity};
pub use error::{Error, Result};
pub use experiments::{power_curve, run_grid, ExperimentReport, ReportRow, ScenarioGrid};
pub use glm::{fit_logistic, solve_least_squares, tail_p_value, DesignMatrix, Family, FitSummary, Reference};
pub use panel::{Arm, ObservationRecord, PanelDataset};
pub use perm::{
    empirical_quantile, pd_did, permute_within_arms, rank_p_value, EmpiricalNull, PdDidResult, PermutationConfig,
};
pub use sim::{ar1_path, correlated_effects, simulate_panel, DgpConfig};
