//! Input-driven recurrent simulation models: MLP-FIR, RNN, GRU, LSTM and a
//! fused-weight LSTM, trained by backpropagation through time.

pub mod cell;
mod model;
pub mod train;

pub use cell::{CellKind, CellShape};
pub use model::{rnn_free_run_rmse, simulate_rnn, RecurrentModel, RNN_FORMAT_VERSION};
pub use train::{bptt_train, BpttOptions, RecurrentRun};
