//! Training objective: per-pixel squared error plus an `alpha`-weighted L1
//! penalty on the k-space difference,
//!
//! ```text
//! loss = (1/N) sum |y - yhat|^2 + alpha * (1/N) sum_k (|Re D_k| + |Im D_k|)
//! D    = fft2c(y) - fft2c(yhat)
//! ```
//!
//! with `N` the number of pixels in the batch. `alpha = 0` leaves the plain
//! mean squared error.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fourier::Fft2Plan;
use crate::nn::Tensor4;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub l2_term: f64,
    pub fourier_term: f64,
    pub alpha: f64,
}

impl LossReport {
    pub fn zero(alpha: f64) -> Self {
        LossReport { total: 0.0, l2_term: 0.0, fourier_term: 0.0, alpha }
    }
}

fn check<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>, alpha: f64) -> Result<()> {
    if pred.shape() != target.shape() || pred.channels() != 1 {
        return Err(Error::shape(format!(
            "loss needs matching single-channel tensors, got {:?} and {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be a finite value >= 0, got {alpha}")));
    }
    Ok(())
}

#[inline]
fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Loss value and its gradient with respect to `pred`, sharing one
/// transform per image.
pub fn loss_and_grad<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>, alpha: f64) -> Result<(LossReport, Tensor4<T>)> {
    evaluate(pred, target, alpha, true).map(|(r, g)| (r, g.expect("gradient requested")))
}

pub fn loss_forward<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>, alpha: f64) -> Result<LossReport> {
    evaluate(pred, target, alpha, false).map(|(r, _)| r)
}

pub fn loss_backward<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>, alpha: f64) -> Result<Tensor4<T>> {
    loss_and_grad(pred, target, alpha).map(|(_, g)| g)
}

fn evaluate<T: Real>(
    pred: &Tensor4<T>,
    target: &Tensor4<T>,
    alpha: f64,
    want_grad: bool,
) -> Result<(LossReport, Option<Tensor4<T>>)> {
    check(pred, target, alpha)?;
    let [b, _, h, w] = pred.shape();
    let n = (b * h * w) as f64;
    let mut sq = 0.0;
    let mut l1 = 0.0;
    let mut grad = want_grad.then(|| Tensor4::zeros(pred.shape()));
    let fourier = alpha > 0.0 || !want_grad;
    let fwd = fourier.then(|| Fft2Plan::<T>::forward(h, w));
    let inv = (fourier && want_grad && alpha > 0.0).then(|| Fft2Plan::<T>::inverse(h, w));
    let two_over_n = T::real(2.0 / n);
    let alpha_over_n = T::real(alpha / n);

    for s in 0..b {
        let (p, y) = (pred.sample(s), target.sample(s));
        // residual r = yhat - y, so D = fft2c(y - yhat) = -fft2c(r)
        let resid: Vec<T> = p.iter().zip(y).map(|(&a, &t)| a - t).collect();
        sq += resid.iter().map(|&v| v.as_f64() * v.as_f64()).sum::<f64>();
        if let Some(g) = grad.as_mut() {
            for (gv, &r) in g.sample_mut(s).iter_mut().zip(&resid) {
                *gv = two_over_n * r;
            }
        }
        if let Some(fwd) = &fwd {
            let spectrum = fwd.apply(&resid.iter().map(|&v| Complex::new(-v, T::zero())).collect::<Vec<_>>());
            l1 += spectrum.iter().map(|d| d.re.abs().as_f64() + d.im.abs().as_f64()).sum::<f64>();
            if let (Some(inv), Some(g)) = (&inv, grad.as_mut()) {
                // d/d yhat of sum |Re D| + |Im D| is -Re(F^H sign(D)); F^H = ifft2c
                let signs: Vec<Complex<T>> = spectrum.iter().map(|d| Complex::new(sign(d.re), sign(d.im))).collect();
                let back = inv.apply(&signs);
                for (gv, bv) in g.sample_mut(s).iter_mut().zip(&back) {
                    *gv = *gv - alpha_over_n * bv.re;
                }
            }
        }
    }
    let l2_term = sq / n;
    let fourier_term = l1 / n;
    let report = LossReport { total: l2_term + alpha * fourier_term, l2_term, fourier_term, alpha };
    Ok((report, grad))
}
