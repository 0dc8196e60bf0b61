//! Learned primal-dual power control: the unrolled iteration, its q-network,
//! reverse-mode differentiation, Adam and the training loop.

pub mod adam;
pub mod checkpoint;
pub mod lpda;
pub mod mlp;
pub mod tape;
pub mod train;

pub use checkpoint::Checkpoint;
pub use lpda::{cap_margin, loss, loss_and_gradient, lpda_forward, lpda_forward_with, LpdaOutput, QMap, UnfoldingParameters};
pub use mlp::{mlp_forward, mlp_input_encode, MlpParameters};
pub use train::{train, train_with, TrainConfig, TrainOutcome};
