use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::activation::ActivationKind;
use super::block::{ConvBlock, Rdb};
use super::conv::Conv2d;
use super::deconv::Deconv2;
use super::param::{join, Param, Visit};
use super::pool::MaxPool2;
use super::tensor::{concat_channels, split_channels, Tensor4};
use super::Mode;
use crate::error::{Error, Result};
use crate::fourier::RealImage;
use crate::real::Real;

/// What sits on the encoder-to-decoder skip path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipKind {
    /// Residual dense block refinement.
    Rdb,
    /// Plain copy, giving the classic U-Net.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    /// Number of 2x2 pooling steps.
    pub depth: usize,
    /// Channels at the first encoder level; doubled after every pooling.
    pub base_channels: usize,
    pub activation: ActivationKind,
    pub skip: SkipKind,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { depth: 2, base_channels: 16, activation: ActivationKind::default(), skip: SkipKind::Rdb }
    }
}

impl NetConfig {
    /// Full-size layout for 320x320 slices.
    pub fn full_scale() -> Self {
        NetConfig { depth: 4, base_channels: 64, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 {
            return Err(Error::Config(format!(
                "depth ({}) and base_channels ({}) must be at least 1",
                self.depth, self.base_channels
            )));
        }
        if let ActivationKind::Polu { n } = self.activation {
            if !(n > 0.0) {
                return Err(Error::Config(format!("PoLU exponent must be positive, got {n}")));
            }
        }
        Ok(())
    }

    /// Channel count at encoder level `k`.
    pub fn channels_at(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Spatial sizes must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }
}

/// Encoder-decoder network with RDB-refined skips and a global residual:
/// `output = x + head(decoder(encoder(x)))`.
#[derive(Debug, Clone)]
pub struct RdUnet<T> {
    config: NetConfig,
    encoder: Vec<[ConvBlock<T>; 2]>,
    pools: Vec<MaxPool2>,
    ups: Vec<Deconv2<T>>,
    skips: Vec<Option<Rdb<T>>>,
    decoder: Vec<[ConvBlock<T>; 2]>,
    head: Conv2d<T>,
    cached: bool,
}

impl<T: Real> RdUnet<T> {
    /// He-initialized network; the same seed always yields the same weights.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let act = config.activation;
        let ch = |k| config.channels_at(k);
        let mut encoder = Vec::with_capacity(config.depth + 1);
        for k in 0..=config.depth {
            let c_in = if k == 0 { 1 } else { ch(k - 1) };
            encoder.push([ConvBlock::new(c_in, ch(k), act, &mut rng), ConvBlock::new(ch(k), ch(k), act, &mut rng)]);
        }
        let mut ups = Vec::with_capacity(config.depth);
        let mut skips = Vec::with_capacity(config.depth);
        let mut decoder = Vec::with_capacity(config.depth);
        for k in 0..config.depth {
            ups.push(Deconv2::new(ch(k + 1), &mut rng)?);
            skips.push(match config.skip {
                SkipKind::Rdb => Some(Rdb::new(ch(k), act, &mut rng)),
                SkipKind::Plain => None,
            });
            decoder.push([ConvBlock::new(2 * ch(k), ch(k), act, &mut rng), ConvBlock::new(ch(k), ch(k), act, &mut rng)]);
        }
        let head = Conv2d::new(ch(0), 1, 1, &mut rng);
        Ok(RdUnet {
            config,
            encoder,
            pools: (0..config.depth).map(|_| MaxPool2::new()).collect(),
            ups,
            skips,
            decoder,
            head,
            cached: false,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// Set every learnable parameter to zero; running statistics keep
    /// their neutral mean 0 / variance 1.
    pub fn zero_parameters(&mut self) {
        self.visit_mut("", &mut |_, p| {
            if p.trainable {
                p.value.fill(T::zero());
            }
        });
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.trainable {
                n += p.len();
            }
        });
        n
    }

    pub fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let m = self.config.size_multiple();
        if x.channels() != 1 || x.height() % m != 0 || x.width() % m != 0 {
            return Err(Error::shape(format!(
                "network of depth {} needs single-channel input with sides divisible by {m}, got {:?}",
                self.config.depth,
                x.shape()
            )));
        }
        x.check_finite("network input")
    }

    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        self.cached = false;
        let depth = self.config.depth;
        let mut h = x.clone();
        let mut features = Vec::with_capacity(depth);
        for k in 0..depth {
            for block in &mut self.encoder[k] {
                h = block.forward(&h, mode)?;
            }
            let pooled = self.pools[k].forward(&h)?;
            features.push(std::mem::replace(&mut h, pooled));
        }
        for block in &mut self.encoder[depth] {
            h = block.forward(&h, mode)?;
        }
        for k in (0..depth).rev() {
            let up = self.ups[k].forward(&h)?;
            let skip = match &mut self.skips[k] {
                Some(rdb) => rdb.forward(&features[k], mode)?,
                None => features[k].clone(),
            };
            h = concat_channels(&skip, &up)?;
            for block in &mut self.decoder[k] {
                h = block.forward(&h, mode)?;
            }
        }
        let residual = self.head.forward(&h)?;
        self.cached = true;
        x.add(&residual)
    }

    /// Eval-mode forward pass; safe to call from several threads.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let depth = self.config.depth;
        let mut h = x.clone();
        let mut features = Vec::with_capacity(depth);
        for k in 0..depth {
            for block in &self.encoder[k] {
                h = block.infer(&h)?;
            }
            let pooled = self.pools[k].infer(&h)?;
            features.push(std::mem::replace(&mut h, pooled));
        }
        for block in &self.encoder[depth] {
            h = block.infer(&h)?;
        }
        for k in (0..depth).rev() {
            let up = self.ups[k].infer(&h)?;
            let skip = match &self.skips[k] {
                Some(rdb) => rdb.infer(&features[k])?,
                None => features[k].clone(),
            };
            h = concat_channels(&skip, &up)?;
            for block in &self.decoder[k] {
                h = block.infer(&h)?;
            }
        }
        x.add(&self.head.infer(&h)?)
    }

    /// Reverse pass matching the last [`Self::forward`]: stores every
    /// parameter gradient and returns the gradient with respect to the input.
    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        if !self.cached {
            return Err(Error::BackwardBeforeForward("rdunet"));
        }
        self.cached = false;
        let depth = self.config.depth;
        let mut g = self.head.backward(grad_out)?;
        let mut skip_grads = Vec::with_capacity(depth);
        for k in 0..depth {
            for block in self.decoder[k].iter_mut().rev() {
                g = block.backward(&g)?;
            }
            let (g_skip, g_up) = split_channels(&g, self.config.channels_at(k))?;
            skip_grads.push(match &mut self.skips[k] {
                Some(rdb) => rdb.backward(&g_skip)?,
                None => g_skip,
            });
            g = self.ups[k].backward(&g_up)?;
        }
        for block in self.encoder[depth].iter_mut().rev() {
            g = block.backward(&g)?;
        }
        for k in (0..depth).rev() {
            g = self.pools[k].backward(&g)?;
            g.add_assign(&skip_grads[k])?;
            for block in self.encoder[k].iter_mut().rev() {
                g = block.backward(&g)?;
            }
        }
        // global residual passes the output gradient straight to the input
        g.add_assign(grad_out)?;
        Ok(g)
    }

    /// Clear every stored gradient.
    pub fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.grad = None);
    }
}

impl<T: Real> Visit<T> for RdUnet<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (k, level) in self.encoder.iter().enumerate() {
            for (i, block) in level.iter().enumerate() {
                block.visit(&join(prefix, &format!("enc{k}.{i}")), f);
            }
        }
        for k in 0..self.config.depth {
            self.ups[k].visit(&join(prefix, &format!("up{k}")), f);
            if let Some(rdb) = &self.skips[k] {
                rdb.visit(&join(prefix, &format!("rdb{k}")), f);
            }
            for (i, block) in self.decoder[k].iter().enumerate() {
                block.visit(&join(prefix, &format!("dec{k}.{i}")), f);
            }
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (k, level) in self.encoder.iter_mut().enumerate() {
            for (i, block) in level.iter_mut().enumerate() {
                block.visit_mut(&join(prefix, &format!("enc{k}.{i}")), f);
            }
        }
        for k in 0..self.config.depth {
            self.ups[k].visit_mut(&join(prefix, &format!("up{k}")), f);
            if let Some(rdb) = &mut self.skips[k] {
                rdb.visit_mut(&join(prefix, &format!("rdb{k}")), f);
            }
            for (i, block) in self.decoder[k].iter_mut().enumerate() {
                block.visit_mut(&join(prefix, &format!("dec{k}.{i}")), f);
            }
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Wrap one image as a `(1, 1, ny, nx)` tensor.
pub fn image_to_tensor<T: Real>(img: &RealImage) -> Tensor4<T> {
    Tensor4::from_fn([1, 1, img.ny, img.nx], |i| T::real(img.data[i]))
}

/// A trained network at whichever precision it was trained in.
#[derive(Debug, Clone)]
pub enum Model {
    F32(RdUnet<f32>),
    F64(RdUnet<f64>),
}

impl Model {
    pub fn config(&self) -> &NetConfig {
        match self {
            Model::F32(n) => n.config(),
            Model::F64(n) => n.config(),
        }
    }

    pub fn bits(&self) -> u32 {
        match self {
            Model::F32(_) => 32,
            Model::F64(_) => 64,
        }
    }

    /// Run the network in eval mode on a single image.
    pub fn infer_image(&self, img: &RealImage) -> Result<RealImage> {
        let data: Vec<f64> = match self {
            Model::F32(n) => n.infer(&image_to_tensor(img))?.data().iter().map(|&v| v as f64).collect(),
            Model::F64(n) => n.infer(&image_to_tensor(img))?.into_vec(),
        };
        RealImage::from_vec(img.ny, img.nx, data)
    }
}

impl From<RdUnet<f32>> for Model {
    fn from(n: RdUnet<f32>) -> Self {
        Model::F32(n)
    }
}

impl From<RdUnet<f64>> for Model {
    fn from(n: RdUnet<f64>) -> Self {
        Model::F64(n)
    }
}
