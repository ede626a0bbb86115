//! Minimal CPU tensor engine with explicit layer-wise backward passes.

pub mod activation;
mod conv;
mod layers;
mod param;
mod tensor;

pub use conv::{conv_out, conv_transpose_out, Conv2d, ConvTranspose2d};
pub use layers::{ActKind, Activation, BatchNorm2d, Dropout, Layer, Sequential};
pub use param::{Module, Param};
pub use tensor::{Tensor, TensorShape};

/// Whether layers use batch statistics, apply dropout and cache their
/// inputs for a backward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        self == Mode::Train
    }
}

/// Names of trainable parameters whose gradient is identically zero or
/// contains a non-finite value.
pub fn dead_gradients(m: &impl Module) -> Vec<String> {
    let mut dead = Vec::new();
    m.visit(&mut |p| {
        if p.trainable && (p.grad.iter().all(|&g| g == 0.0) || p.grad.iter().any(|g| !g.is_finite())) {
            dead.push(p.name.clone());
        }
    });
    dead
}
