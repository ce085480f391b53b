use rand::Rng;

use super::param::{join, Param, Visit};
use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::real::{matmul, Real};

/// Stride-1 cross-correlation with a square odd kernel and zero padding
/// that preserves height and width.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    c_in: usize,
    c_out: usize,
    k: usize,
    /// `(c_out, c_in, k, k)`
    pub weight: Param<T>,
    /// `(c_out)`
    pub bias: Param<T>,
    input: Option<Tensor4<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(c_in: usize, c_out: usize, k: usize, rng: &mut R) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        Conv2d {
            c_in,
            c_out,
            k,
            weight: Param::he_normal(&[c_out, c_in, k, k], c_in * k * k, rng),
            bias: Param::filled(&[c_out], T::zero()),
            input: None,
        }
    }

    pub fn zeroed(c_in: usize, c_out: usize, k: usize) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        Conv2d {
            c_in,
            c_out,
            k,
            weight: Param::filled(&[c_out, c_in, k, k], T::zero()),
            bias: Param::filled(&[c_out], T::zero()),
            input: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.c_in
    }

    pub fn out_channels(&self) -> usize {
        self.c_out
    }

    fn check(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.c_in {
            return Err(Error::shape(format!(
                "conv{}x{} expects {} input channels, got {}",
                self.k,
                self.k,
                self.c_in,
                x.channels()
            )));
        }
        Ok(())
    }

    /// Unfold one sample `(c_in, h, w)` into `(c_in * k * k, h * w)`.
    fn im2col(&self, src: &[T], h: usize, w: usize, cols: &mut [T]) {
        let (k, pad) = (self.k, self.k / 2);
        let hw = h * w;
        for ci in 0..self.c_in {
            let plane = &src[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad as isize;
                        let dst = &mut row[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                        for (x, d) in dst.iter_mut().enumerate() {
                            let sx = x as isize + kx as isize - pad as isize;
                            *d = if sx < 0 || sx >= w as isize { T::zero() } else { src_row[sx as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatter-add columns back onto `(c_in, h, w)`.
    fn col2im(&self, cols: &[T], h: usize, w: usize, dst: &mut [T]) {
        let (k, pad) = (self.k, self.k / 2);
        let hw = h * w;
        for ci in 0..self.c_in {
            let plane = &mut dst[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x as isize + kx as isize - pad as isize;
                            if sx >= 0 && sx < w as isize {
                                let p = &mut plane[sy as usize * w + sx as usize];
                                *p = *p + row[y * w + x];
                            }
                        }
                    }
                }
            }
        }
    }

    fn run(&self, x: &Tensor4<T>) -> Tensor4<T> {
        let [b, _, h, w] = x.shape();
        let hw = h * w;
        let kk = self.c_in * self.k * self.k;
        let mut out = Tensor4::zeros([b, self.c_out, h, w]);
        let mut cols = if self.k == 1 { Vec::new() } else { vec![T::zero(); kk * hw] };
        for n in 0..b {
            let src = x.sample(n);
            let cols_ref: &[T] = if self.k == 1 {
                src
            } else {
                self.im2col(src, h, w, &mut cols);
                &cols
            };
            let dst = out.sample_mut(n);
            matmul(self.c_out, kk, hw, &self.weight.value, false, cols_ref, false, dst, false);
            for (co, plane) in dst.chunks_mut(hw).enumerate() {
                let bias = self.bias.value[co];
                plane.iter_mut().for_each(|v| *v = *v + bias);
            }
        }
        out
    }

    /// Forward pass that keeps the input for [`Self::backward`].
    pub fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check(x)?;
        let out = self.run(x);
        self.input = Some(x.clone());
        Ok(out)
    }

    /// Forward pass without caching.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check(x)?;
        Ok(self.run(x))
    }

    /// Stores weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self.input.take().ok_or(Error::BackwardBeforeForward("conv2d"))?;
        let [b, _, h, w] = x.shape();
        if grad_out.shape() != [b, self.c_out, h, w] {
            return Err(Error::shape(format!(
                "conv backward got gradient {:?} for output {:?}",
                grad_out.shape(),
                [b, self.c_out, h, w]
            )));
        }
        let hw = h * w;
        let kk = self.c_in * self.k * self.k;
        let mut gw = vec![T::zero(); self.c_out * kk];
        let mut gb = vec![T::zero(); self.c_out];
        let mut gx = Tensor4::zeros(x.shape());
        let mut cols = if self.k == 1 { Vec::new() } else { vec![T::zero(); kk * hw] };
        let mut gcols = vec![T::zero(); kk * hw];
        for n in 0..b {
            let src = x.sample(n);
            let gout = grad_out.sample(n);
            let cols_ref: &[T] = if self.k == 1 {
                src
            } else {
                self.im2col(src, h, w, &mut cols);
                &cols
            };
            matmul(self.c_out, hw, kk, gout, false, cols_ref, true, &mut gw, true);
            for (co, plane) in gout.chunks(hw).enumerate() {
                gb[co] = plane.iter().fold(gb[co], |acc, &v| acc + v);
            }
            if self.k == 1 {
                matmul(kk, self.c_out, hw, &self.weight.value, true, gout, false, gx.sample_mut(n), false);
            } else {
                matmul(kk, self.c_out, hw, &self.weight.value, true, gout, false, &mut gcols, false);
                self.col2im(&gcols, h, w, gx.sample_mut(n));
            }
        }
        self.weight.set_grad(gw);
        self.bias.set_grad(gb);
        Ok(gx)
    }
}

impl<T: Real> Visit<T> for Conv2d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
