//! Hand-differentiated layers and the residual dense U-Net built from them.
//!
//! Every layer offers `forward` (caches what backward needs), `infer`
//! (eval, no cache, `&self`) and `backward` (consumes the cache, stores
//! parameter gradients, returns the input gradient).

mod activation;
mod batchnorm;
mod block;
mod conv;
mod deconv;
mod param;
mod pool;
mod tensor;
mod unet;

pub use activation::{Activation, ActivationKind};
pub use batchnorm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use block::{ConvBlock, Rdb};
pub use conv::Conv2d;
pub use deconv::Deconv2;
pub use param::{Param, Visit};
pub use pool::MaxPool2;
pub use tensor::{concat_channels, split_channels, Tensor4};
pub use unet::{image_to_tensor, Model, NetConfig, RdUnet, SkipKind};

/// Whether batch norm uses batch statistics (and updates running ones) or
/// the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
