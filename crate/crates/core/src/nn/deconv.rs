use rand::Rng;

use super::param::{join, Param, Visit};
use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::real::{matmul, Real};

/// 2x2 transposed convolution with stride 2: doubles height and width and
/// halves the channel count.
#[derive(Debug, Clone)]
pub struct Deconv2<T> {
    c_in: usize,
    c_out: usize,
    /// `(c_in, c_out, 2, 2)`
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor4<T>>,
}

impl<T: Real> Deconv2<T> {
    pub fn new<R: Rng + ?Sized>(c_in: usize, rng: &mut R) -> Result<Self> {
        let mut d = Self::zeroed(c_in)?;
        d.weight = Param::he_normal(&[c_in, c_in / 2, 2, 2], c_in, rng);
        Ok(d)
    }

    pub fn zeroed(c_in: usize) -> Result<Self> {
        if c_in == 0 || c_in % 2 != 0 {
            return Err(Error::shape(format!("up-convolution needs an even channel count, got {c_in}")));
        }
        let c_out = c_in / 2;
        Ok(Deconv2 {
            c_in,
            c_out,
            weight: Param::filled(&[c_in, c_out, 2, 2], T::zero()),
            bias: Param::filled(&[c_out], T::zero()),
            input: None,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.c_out
    }

    fn check(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.c_in {
            return Err(Error::shape(format!(
                "up-convolution expects {} channels, got {}",
                self.c_in,
                x.channels()
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor4<T>) -> Tensor4<T> {
        let [b, _, h, w] = x.shape();
        let hw = h * w;
        let taps = self.c_out * 4;
        let mut out = Tensor4::zeros([b, self.c_out, 2 * h, 2 * w]);
        let mut cols = vec![T::zero(); taps * hw];
        for n in 0..b {
            matmul(taps, self.c_in, hw, &self.weight.value, true, x.sample(n), false, &mut cols, false);
            let dst = out.sample_mut(n);
            for co in 0..self.c_out {
                let bias = self.bias.value[co];
                for d in 0..4 {
                    let (dy, dx) = (d / 2, d % 2);
                    let row = &cols[(co * 4 + d) * hw..][..hw];
                    for y in 0..h {
                        for xx in 0..w {
                            dst[(co * 2 * h + 2 * y + dy) * 2 * w + 2 * xx + dx] = row[y * w + xx] + bias;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check(x)?;
        Ok(self.run(x))
    }

    pub fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check(x)?;
        let out = self.run(x);
        self.input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self.input.take().ok_or(Error::BackwardBeforeForward("deconv2"))?;
        let [b, _, h, w] = x.shape();
        if grad_out.shape() != [b, self.c_out, 2 * h, 2 * w] {
            return Err(Error::shape("up-convolution gradient shape"));
        }
        let hw = h * w;
        let taps = self.c_out * 4;
        let mut gw = vec![T::zero(); self.c_in * taps];
        let mut gb = vec![T::zero(); self.c_out];
        let mut gx = Tensor4::zeros(x.shape());
        let mut gcols = vec![T::zero(); taps * hw];
        for n in 0..b {
            let g = grad_out.sample(n);
            for co in 0..self.c_out {
                for d in 0..4 {
                    let (dy, dx) = (d / 2, d % 2);
                    let row = &mut gcols[(co * 4 + d) * hw..][..hw];
                    for y in 0..h {
                        for xx in 0..w {
                            let v = g[(co * 2 * h + 2 * y + dy) * 2 * w + 2 * xx + dx];
                            row[y * w + xx] = v;
                            gb[co] = gb[co] + v;
                        }
                    }
                }
            }
            matmul(self.c_in, hw, taps, x.sample(n), false, &gcols, true, &mut gw, true);
            matmul(self.c_in, taps, hw, &self.weight.value, false, &gcols, false, gx.sample_mut(n), false);
        }
        self.weight.set_grad(gw);
        self.bias.set_grad(gb);
        Ok(gx)
    }
}

impl<T: Real> Visit<T> for Deconv2<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
