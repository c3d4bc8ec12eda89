//! Minimal neural-network toolkit: tensors, layer kernels with hand-written
//! backward passes, sequential networks and Adam.

pub mod adam;
pub mod check;
pub mod layers;
pub mod network;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState, ADAM_EPS};
pub use network::{accumulate, Grads, Layer, NetworkParams, Tape, BN_MOMENTUM};
pub use tensor::{gemm, Real, Tensor};
