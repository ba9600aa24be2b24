//! Neural protocol learning with a BS message hub.

pub mod config;
pub mod model;
pub mod stats;
pub mod train;

pub use config::{RegSign, TrainConfig};
pub use model::{rollout_episode, Choice, JointDecision, Trace, TraceRecord, TrainedProtocol};
pub use stats::{
    codeword_sparsity, estimate_entropies, hinge_form, ib_term, regularizer_ec, ChannelSparsity,
    EntropyReport,
};
pub use train::{train, CurveRow, LearningCurves, TrainOutput, ACTIVE_EPSILON};
