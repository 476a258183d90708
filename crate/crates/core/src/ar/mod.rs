//! Autoregressive model family: ARX, polynomial NARX, GP-NARX and MLP-NARX.

mod arx;
pub mod gp;
pub mod mlp;
pub mod pnarx;
mod simulate;

pub use arx::{fit_arx, lag_scores, select_lags_aic, ArxModel, LagScore, PhysicalArx};
pub use gp::{fit_gp_narx, gp_nlml, gp_nlml_grad, gp_predict_mean, GpFitInfo, GpHyperparams, GpNarxModel, GpOptions};
pub use mlp::{fit_mlp_narx, MlpNarxModel, MlpNarxOptions, MlpRun};
pub use pnarx::{fit_pnarx, fit_pnarx_degree, legendre_features, ColumnRange, DegreeScore, PolyNarxModel};
pub use simulate::{free_run_rmse, one_step_predictions, simulate_narx, simulate_record, NarxPredictor};
