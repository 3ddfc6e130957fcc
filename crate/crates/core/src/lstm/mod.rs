//! Single-layer LSTM next-word model: forward scoring, exact gradients, Adam training, snapshots.

mod adam;
mod backward;
mod forward;
mod params;
mod snapshot;
mod train;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use backward::loss_and_gradients;
pub use forward::{lstm_step, sequence_nll, Carry, LstmState, Projected};
pub use params::{Block, Dims, Gate, LstmParams};
pub use snapshot::{next_word_distribution, EmbeddingSource, ModelSnapshot, SNAPSHOT_VERSION};
pub use train::{train, TrainConfig, TrainOutcome};
