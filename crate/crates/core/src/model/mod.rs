//! The Attention-BiGRU sequence labeler, k-fold training and weight bundles.

pub mod arch;
pub mod network;
pub mod train;
pub mod weights;

pub use arch::{ArchConfig, EffectiveDims};
pub use network::{argmax, grad_check_model, AttentionBiGru, Mode};
pub use train::{evaluate_frames, train_fold, train_kfold, EpochRecord, History, TrainConfig, TrainedFold};
pub use weights::{find_weight_files, ModelWeights};
