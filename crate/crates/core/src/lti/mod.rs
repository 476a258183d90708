//! Linear time-invariant state-space baseline.

mod fit;
mod model;
pub mod pem;
pub mod subspace;

pub use fit::{fit_lti_ss, select_state_order, simulation_rmse, LtiFitInfo};
pub use model::{simulate_ss, StateSpaceModel, StateSpaceRecord, SS_FORMAT_VERSION};
pub use pem::{pem_refine, PemOptions, PemOutcome};
pub use subspace::subspace_init;
