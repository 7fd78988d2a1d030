//! Small MLP classifier, cross-entropy and entropy scores, and SGD with
//! momentum, weight decay and a step learning-rate schedule.

mod checkpoint;
mod gradcheck;
mod mlp;
mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{gradient_check, gradient_check_coords, DEFAULT_CHECKED_COORDS};
pub use mlp::{prediction_entropy, softmax_in_place, ForwardResult, Mlp};
pub use optim::{backward_and_update, learning_rate_at, SgdState, TrainerConfig};
