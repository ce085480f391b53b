use super::param::{join, Param, Visit};
use super::tensor::Tensor4;
use super::Mode;
use crate::error::{Error, Result};
use crate::real::Real;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
struct BnCache<T> {
    x_hat: Tensor4<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// Per-channel batch normalization with affine scale/shift and running
/// statistics for evaluation.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: Param::filled(&[channels], T::one()),
            beta: Param::filled(&[channels], T::zero()),
            running_mean: Param::buffer(&[channels], T::zero()),
            running_var: Param::buffer(&[channels], T::one()),
            cache: None,
        }
    }

    fn check(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.channels {
            return Err(Error::shape(format!(
                "batch norm over {} channels got {}",
                self.channels,
                x.channels()
            )));
        }
        Ok(())
    }

    /// Per-channel mean and biased variance over batch and space.
    fn batch_stats(x: &Tensor4<T>) -> (Vec<T>, Vec<T>) {
        let [b, c, h, w] = x.shape();
        let hw = h * w;
        let count = T::real((b * hw) as f64);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let mut s = T::zero();
            for n in 0..b {
                s = s + x.sample(n)[ch * hw..(ch + 1) * hw].iter().copied().sum::<T>();
            }
            let m = s / count;
            let mut v = T::zero();
            for n in 0..b {
                for &p in &x.sample(n)[ch * hw..(ch + 1) * hw] {
                    v = v + (p - m) * (p - m);
                }
            }
            mean[ch] = m;
            var[ch] = v / count;
        }
        (mean, var)
    }

    fn normalize(&self, x: &Tensor4<T>, mean: &[T], inv_std: &[T]) -> (Tensor4<T>, Tensor4<T>) {
        let [b, c, h, w] = x.shape();
        let hw = h * w;
        let mut x_hat = Tensor4::zeros(x.shape());
        let mut y = Tensor4::zeros(x.shape());
        for n in 0..b {
            let src = x.sample(n);
            let xh = x_hat.sample_mut(n);
            for ch in 0..c {
                for i in ch * hw..(ch + 1) * hw {
                    xh[i] = (src[i] - mean[ch]) * inv_std[ch];
                }
            }
            let yh = y.sample_mut(n);
            let xh = x_hat.sample(n);
            for ch in 0..c {
                let (g, bt) = (self.gamma.value[ch], self.beta.value[ch]);
                for i in ch * hw..(ch + 1) * hw {
                    yh[i] = g * xh[i] + bt;
                }
            }
        }
        (x_hat, y)
    }

    fn eval_stats(&self) -> (Vec<T>, Vec<T>) {
        let eps = T::real(BN_EPS);
        let inv = self.running_var.value.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        (self.running_mean.value.clone(), inv)
    }

    /// Train mode normalizes with batch statistics and updates the running
    /// averages; eval mode uses the running averages.
    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        self.check(x)?;
        let (mean, inv_std) = match mode {
            Mode::Train => {
                let [b, _, h, w] = x.shape();
                let count = b * h * w;
                if count < 2 {
                    return Err(Error::DegenerateBatch(count));
                }
                let (mean, var) = Self::batch_stats(x);
                let eps = T::real(BN_EPS);
                let mom = T::real(BN_MOMENTUM);
                let unbias = T::real(count as f64 / (count - 1) as f64);
                for ch in 0..self.channels {
                    let rm = &mut self.running_mean.value[ch];
                    *rm = (T::one() - mom) * *rm + mom * mean[ch];
                    let rv = &mut self.running_var.value[ch];
                    *rv = (T::one() - mom) * *rv + mom * var[ch] * unbias;
                }
                let inv_std = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                (mean, inv_std)
            }
            Mode::Eval => self.eval_stats(),
        };
        let (x_hat, y) = self.normalize(x, &mean, &inv_std);
        self.cache = Some(BnCache { x_hat, inv_std, mode });
        Ok(y)
    }

    /// Eval-mode forward without caching.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check(x)?;
        let (mean, inv_std) = self.eval_stats();
        Ok(self.normalize(x, &mean, &inv_std).1)
    }

    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let cache = self.cache.take().ok_or(Error::BackwardBeforeForward("batchnorm"))?;
        if grad_out.shape() != cache.x_hat.shape() {
            return Err(Error::shape(format!(
                "batch norm backward got {:?}, expected {:?}",
                grad_out.shape(),
                cache.x_hat.shape()
            )));
        }
        let [b, c, h, w] = grad_out.shape();
        let hw = h * w;
        let mut g_gamma = vec![T::zero(); c];
        let mut g_beta = vec![T::zero(); c];
        for n in 0..b {
            let g = grad_out.sample(n);
            let xh = cache.x_hat.sample(n);
            for ch in 0..c {
                for i in ch * hw..(ch + 1) * hw {
                    g_beta[ch] = g_beta[ch] + g[i];
                    g_gamma[ch] = g_gamma[ch] + g[i] * xh[i];
                }
            }
        }
        let mut gx = Tensor4::zeros(grad_out.shape());
        let count = T::real((b * hw) as f64);
        for n in 0..b {
            let g = grad_out.sample(n);
            let xh = cache.x_hat.sample(n);
            let dst = gx.sample_mut(n);
            for ch in 0..c {
                let scale = self.gamma.value[ch] * cache.inv_std[ch];
                match cache.mode {
                    Mode::Train => {
                        let (sb, sg) = (g_beta[ch] / count, g_gamma[ch] / count);
                        for i in ch * hw..(ch + 1) * hw {
                            dst[i] = scale * (g[i] - sb - xh[i] * sg);
                        }
                    }
                    Mode::Eval => {
                        for i in ch * hw..(ch + 1) * hw {
                            dst[i] = scale * g[i];
                        }
                    }
                }
            }
        }
        self.gamma.set_grad(g_gamma);
        self.beta.set_grad(g_beta);
        Ok(gx)
    }
}

impl<T: Real> Visit<T> for BatchNorm<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}
