//! Model identities, per-model hyperparameter overrides, fitting dispatch
//! and the persisted model record.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ar::{
    fit_arx, fit_gp_narx, fit_mlp_narx, fit_pnarx, select_lags_aic, simulate_record, ArxModel, GpNarxModel, GpOptions,
    MlpNarxModel, MlpNarxOptions, PolyNarxModel,
};
use crate::data::{BenchmarkId, FitData, LagStructure, TimeSeries, MAX_LAG};
use crate::error::{Error, Result};
use crate::kernels::derive_seed;
use crate::lti::{fit_lti_ss, select_state_order, simulate_ss, PemOptions, StateSpaceModel};
use crate::recurrent::{bptt_train, simulate_rnn, BpttOptions, CellKind, RecurrentModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    LtiSs,
    LtiArx,
    Pnarx,
    GpNarx,
    MlpNarx,
    MlpFir,
    Rnn,
    Gru,
    Lstm,
    Olstm,
}

impl ModelId {
    /// Table row order.
    pub const ALL: [ModelId; 10] = [
        ModelId::LtiSs,
        ModelId::LtiArx,
        ModelId::Pnarx,
        ModelId::GpNarx,
        ModelId::MlpNarx,
        ModelId::MlpFir,
        ModelId::Rnn,
        ModelId::Gru,
        ModelId::Lstm,
        ModelId::Olstm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::LtiSs => "lti_ss",
            ModelId::LtiArx => "lti_arx",
            ModelId::Pnarx => "pnarx",
            ModelId::GpNarx => "gp_narx",
            ModelId::MlpNarx => "mlp_narx",
            ModelId::MlpFir => "mlp_fir",
            ModelId::Rnn => "rnn",
            ModelId::Gru => "gru",
            ModelId::Lstm => "lstm",
            ModelId::Olstm => "olstm",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            ModelId::LtiSs => "LTI SS",
            ModelId::LtiArx => "LTI ARX",
            ModelId::Pnarx => "pNARX",
            ModelId::GpNarx => "GP NARX",
            ModelId::MlpNarx => "MLP NARX",
            ModelId::MlpFir => "MLP FIR",
            ModelId::Rnn => "RNN",
            ModelId::Gru => "GRU",
            ModelId::Lstm => "LSTM",
            ModelId::Olstm => "OLSTM",
        }
    }

    pub fn cell_kind(&self) -> Option<CellKind> {
        match self {
            ModelId::MlpFir => Some(CellKind::Fir),
            ModelId::Rnn => Some(CellKind::Rnn),
            ModelId::Gru => Some(CellKind::Gru),
            ModelId::Lstm => Some(CellKind::Lstm),
            ModelId::Olstm => Some(CellKind::Olstm),
            _ => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, ModelId::LtiSs | ModelId::LtiArx)
    }

    fn uses_lags(&self) -> bool {
        matches!(self, ModelId::LtiArx | ModelId::Pnarx | ModelId::GpNarx | ModelId::MlpNarx)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model id '{s}'")))
    }
}

/// Per-model overrides; unset fields take the documented defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    /// Fixed lag structure for the autoregressive models.
    pub lags: Option<LagStructure>,
    /// Re-run the AIC lag search instead of using the benchmark default.
    pub select_lags: Option<bool>,
    pub max_lag: Option<usize>,
    pub state_orders: Option<Vec<usize>>,
    pub pem_steps: Option<usize>,
    pub pem_lr: Option<f64>,
    pub max_degree: Option<usize>,
    pub gp_restarts: Option<usize>,
    pub gp_steps: Option<usize>,
    pub gp_lr: Option<f64>,
    pub gp_max_rows: Option<usize>,
    pub hidden_sizes: Option<Vec<usize>>,
    pub restarts: Option<usize>,
    pub iterations: Option<usize>,
    pub lr: Option<f64>,
    pub n_u_grid: Option<Vec<usize>>,
    pub n_h_grid: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub seq_len: Option<usize>,
    pub stride: Option<usize>,
    pub washout: Option<usize>,
    pub batch_size: Option<usize>,
}

impl Hyper {
    pub fn pem_options(&self) -> PemOptions {
        let d = PemOptions::default();
        PemOptions { steps: self.pem_steps.unwrap_or(d.steps), lr: self.pem_lr.unwrap_or(d.lr), eval_every: d.eval_every }
    }

    pub fn gp_options(&self, seed: u64) -> GpOptions {
        let d = GpOptions::default();
        GpOptions {
            restarts: self.gp_restarts.unwrap_or(d.restarts),
            steps: self.gp_steps.unwrap_or(d.steps),
            lr: self.gp_lr.unwrap_or(d.lr),
            max_rows: self.gp_max_rows.unwrap_or(d.max_rows),
            seed,
        }
    }

    pub fn mlp_options(&self, seed: u64) -> MlpNarxOptions {
        let d = MlpNarxOptions::default();
        MlpNarxOptions {
            hidden_sizes: self.hidden_sizes.clone().unwrap_or(d.hidden_sizes),
            restarts: self.restarts.unwrap_or(d.restarts),
            iterations: self.iterations.unwrap_or(d.iterations),
            lr: self.lr.unwrap_or(d.lr),
            seed,
        }
    }

    pub fn bptt_options(&self, seed: u64) -> BpttOptions {
        let d = BpttOptions::default();
        BpttOptions {
            seq_len: self.seq_len.unwrap_or(d.seq_len),
            stride: self.stride.unwrap_or(d.stride),
            washout: self.washout.unwrap_or(d.washout),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.or(d.epochs),
            lr: self.lr.unwrap_or(d.lr),
            restarts: self.restarts.unwrap_or(d.restarts),
            n_u_grid: self.n_u_grid.clone().unwrap_or(d.n_u_grid),
            n_h_grid: self.n_h_grid.clone().or(self.hidden_sizes.clone()).unwrap_or(d.n_h_grid),
            seed,
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "model", rename_all = "snake_case")]
pub enum FittedModel {
    StateSpace(StateSpaceModel),
    Arx(ArxModel),
    Pnarx(PolyNarxModel),
    GpNarx(GpNarxModel),
    MlpNarx(MlpNarxModel),
    Recurrent(RecurrentModel),
}

impl FittedModel {
    /// Free-run simulation of a record: zero initial state for state-space
    /// and recurrent models, the record's first outputs for NARX models.
    pub fn simulate(&self, ts: &TimeSeries) -> Result<Vec<f64>> {
        match self {
            FittedModel::StateSpace(m) => simulate_ss(m, &ts.u, None),
            FittedModel::Arx(m) => simulate_record(m, ts),
            FittedModel::Pnarx(m) => simulate_record(m, ts),
            FittedModel::GpNarx(m) => simulate_record(m, ts),
            FittedModel::MlpNarx(m) => simulate_record(m, ts),
            FittedModel::Recurrent(m) => simulate_rnn(m, &ts.u),
        }
    }
}

/// A model with the identity of the grid cell that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub format_version: u32,
    pub benchmark_id: BenchmarkId,
    pub model_id: ModelId,
    pub seed: u64,
    #[serde(flatten)]
    pub model: FittedModel,
}

impl ModelRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rec: ModelRecord = serde_json::from_str(&text)?;
        if rec.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serde(format!("unsupported model record format {}", rec.format_version)));
        }
        if let FittedModel::Recurrent(m) = &rec.model {
            m.check()?;
        }
        Ok(rec)
    }
}

/// Selected hyperparameters, keyed by name.
pub type Selection = BTreeMap<String, Value>;

fn resolve_lags(benchmark: BenchmarkId, data: &FitData, hyper: &Hyper, sel: &mut Selection) -> Result<LagStructure> {
    let lags = if let Some(l) = hyper.lags {
        LagStructure::new(l.n_y, l.n_u)?
    } else if hyper.select_lags.unwrap_or(false) {
        let limit = (data.validation.len().saturating_sub(1) / 2).min(data.train.len().saturating_sub(1) / 4);
        let max_lag = hyper.max_lag.unwrap_or(MAX_LAG).min(limit).max(1);
        sel.insert("lag_search_max".into(), json!(max_lag));
        select_lags_aic(&data.train, &data.validation, max_lag, benchmark == BenchmarkId::Ced)?
    } else {
        benchmark.default_lags()
    };
    sel.insert("n_y".into(), json!(lags.n_y));
    sel.insert("n_u".into(), json!(lags.n_u));
    Ok(lags)
}

/// Fits one model on training material only.
pub fn fit_model(
    model: ModelId,
    benchmark: BenchmarkId,
    data: &FitData,
    hyper: &Hyper,
    seed: u64,
) -> Result<(FittedModel, Selection)> {
    let mut sel = Selection::new();
    let lags = if model.uses_lags() { Some(resolve_lags(benchmark, data, hyper, &mut sel)?) } else { None };
    let fitted = match model {
        ModelId::LtiSs => {
            let orders = hyper.state_orders.clone().unwrap_or_else(|| vec![benchmark.default_state_order()]);
            let opts = hyper.pem_options();
            let (m, info) = if orders.len() == 1 {
                fit_lti_ss(data, orders[0], &opts)?
            } else {
                select_state_order(data, &orders, &opts)?
            };
            sel.insert("n_x".into(), json!(info.n_x));
            sel.insert("pem_best_step".into(), json!(info.pem_best_step));
            sel.insert("pem_diverged".into(), json!(info.pem_diverged));
            sel.insert("init_stabilized".into(), json!(info.init_stabilized));
            FittedModel::StateSpace(m)
        }
        ModelId::LtiArx => FittedModel::Arx(fit_arx(&data.train, lags.expect("lagged model"))?),
        ModelId::Pnarx => {
            let (m, _) = fit_pnarx(data, lags.expect("lagged model"), hyper.max_degree.unwrap_or(crate::ar::pnarx::MAX_DEGREE))?;
            sel.insert("degree".into(), json!(m.degree));
            FittedModel::Pnarx(m)
        }
        ModelId::GpNarx => {
            let (m, info) = fit_gp_narx(data, lags.expect("lagged model"), &hyper.gp_options(seed))?;
            sel.insert("gp_train_rows".into(), json!(info.train_rows));
            sel.insert("gp_noise_var".into(), json!(m.hyper.noise_var()));
            sel.insert("gp_signal_var".into(), json!(m.hyper.signal_var()));
            sel.insert("gp_lengthscale".into(), json!(m.hyper.lengthscale()));
            FittedModel::GpNarx(m)
        }
        ModelId::MlpNarx => {
            let (m, _) = fit_mlp_narx(data, lags.expect("lagged model"), &hyper.mlp_options(seed))?;
            sel.insert("hidden_size".into(), json!(m.hidden_size));
            FittedModel::MlpNarx(m)
        }
        ModelId::MlpFir | ModelId::Rnn | ModelId::Gru | ModelId::Lstm | ModelId::Olstm => {
            let kind = model.cell_kind().expect("recurrent model");
            let (m, _) = bptt_train(data, kind, &hyper.bptt_options(seed))?;
            sel.insert("n_u".into(), json!(m.shape.n_u));
            sel.insert("n_h".into(), json!(m.shape.n_h));
            FittedModel::Recurrent(m)
        }
    };
    Ok((fitted, sel))
}

/// Seed of one grid cell.
pub fn cell_seed(base: u64, benchmark: BenchmarkId, model: ModelId) -> u64 {
    let b = BenchmarkId::ALL.iter().position(|x| *x == benchmark).unwrap_or(0) as u64;
    let m = ModelId::ALL.iter().position(|x| *x == model).unwrap_or(0) as u64;
    derive_seed(base, &[b, m])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for m in ModelId::ALL {
            assert_eq!(m.as_str().parse::<ModelId>().unwrap(), m);
        }
        assert!("narmax".parse::<ModelId>().is_err());
    }

    #[test]
    fn hyper_rejects_unknown_keys() {
        assert!(toml::from_str::<Hyper>("epochs = 3").is_ok());
        assert!(toml::from_str::<Hyper>("epoch = 3").is_err());
    }
}
