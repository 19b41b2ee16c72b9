//! Differentiable layers with hand-written backward passes.
//!
//! Sequence layers accept `(T, F)` or batched `(B, T, F)` tensors; dense
//! layers act on the last axis of any tensor.

pub mod attention;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod gru;
pub mod init;
pub mod loss;
pub mod optim;
pub mod positional;
pub mod tensor;

pub use attention::MultiHeadSelfAttention;
pub use dense::{Activation, Dense};
pub use dropout::{dropout, dropout_backward};
pub use gradcheck::{grad_check, grad_check_layer, grad_check_skip_add, GradCheckOptions, GradCheckReport};
pub use gru::{BiGru, Gru};
pub use loss::{cross_entropy, cross_entropy_logit_grad, softmax_rows, weighted_skip_add, weighted_skip_add_backward};
pub use optim::{early_stopping, reduce_lr_on_plateau, Adam, EarlyStop, PlateauConfig};
pub use positional::{add_positional, positional_encoding};
pub use tensor::{Param, Parameterized, Tensor};
