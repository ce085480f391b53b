use rand::Rng;

use super::activation::{Activation, ActivationKind};
use super::batchnorm::BatchNorm;
use super::conv::Conv2d;
use super::param::{join, Param, Visit};
use super::tensor::{concat_channels, split_channels, Tensor4};
use super::Mode;
use crate::error::Result;
use crate::real::Real;

/// 3x3 convolution, batch normalization, nonlinearity.
#[derive(Debug, Clone)]
pub struct ConvBlock<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
    pub act: Activation<T>,
}

impl<T: Real> ConvBlock<T> {
    pub fn new<R: Rng + ?Sized>(c_in: usize, c_out: usize, act: ActivationKind, rng: &mut R) -> Self {
        ConvBlock { conv: Conv2d::new(c_in, c_out, 3, rng), bn: BatchNorm::new(c_out), act: Activation::new(act) }
    }

    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let h = self.conv.forward(x)?;
        let h = self.bn.forward(&h, mode)?;
        Ok(self.act.forward(&h))
    }

    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let h = self.conv.infer(x)?;
        let h = self.bn.infer(&h)?;
        Ok(self.act.infer(&h))
    }

    pub fn backward(&mut self, g: &Tensor4<T>) -> Result<Tensor4<T>> {
        let g = self.act.backward(g)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

impl<T: Real> Visit<T> for ConvBlock<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
    }
}

/// Residual dense block.
///
/// The dense part convolves the input to the same channel count,
/// concatenates the result with the input and convolves the `2c` stack back
/// down to `c` channels; the residual part adds the block input:
///
/// ```text
/// d1  = act(bn(conv3x3(x)))      c -> c
/// d2  = conv3x3(concat(x, d1))  2c -> c
/// out = x + d2
/// ```
///
/// With `d2`'s weights and bias at zero the block is an exact identity,
/// i.e. a plain skip connection.
#[derive(Debug, Clone)]
pub struct Rdb<T> {
    channels: usize,
    pub dense: ConvBlock<T>,
    pub fuse: Conv2d<T>,
}

impl<T: Real> Rdb<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, act: ActivationKind, rng: &mut R) -> Self {
        Rdb {
            channels,
            dense: ConvBlock::new(channels, channels, act, rng),
            fuse: Conv2d::new(2 * channels, channels, 3, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let d1 = self.dense.forward(x, mode)?;
        let cat = concat_channels(x, &d1)?;
        let d2 = self.fuse.forward(&cat)?;
        x.add(&d2)
    }

    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let d1 = self.dense.infer(x)?;
        let cat = concat_channels(x, &d1)?;
        let d2 = self.fuse.infer(&cat)?;
        x.add(&d2)
    }

    pub fn backward(&mut self, g: &Tensor4<T>) -> Result<Tensor4<T>> {
        let g_cat = self.fuse.backward(g)?;
        let (g_x, g_d1) = split_channels(&g_cat, self.channels)?;
        let g_dense = self.dense.backward(&g_d1)?;
        let mut out = g.add(&g_x)?;
        out.add_assign(&g_dense)?;
        Ok(out)
    }
}

impl<T: Real> Visit<T> for Rdb<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.dense.visit(&join(prefix, "dense"), f);
        self.fuse.visit(&join(prefix, "fuse"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.dense.visit_mut(&join(prefix, "dense"), f);
        self.fuse.visit_mut(&join(prefix, "fuse"), f);
    }
}
