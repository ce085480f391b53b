use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::real::Real;

/// Pointwise nonlinearity following each conv + BN pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    /// Power linear unit: `v` for `v >= 0`, `(1 - v)^(-n) - 1` below zero.
    Polu { n: f64 },
}

impl Default for ActivationKind {
    fn default() -> Self {
        ActivationKind::Polu { n: 1.0 }
    }
}

impl ActivationKind {
    #[inline]
    pub fn value<T: Real>(self, v: T) -> T {
        if v >= T::zero() {
            return v;
        }
        match self {
            ActivationKind::Relu => T::zero(),
            ActivationKind::Polu { n } => (T::one() - v).powf(T::real(-n)) - T::one(),
        }
    }

    #[inline]
    pub fn derivative<T: Real>(self, v: T) -> T {
        if v >= T::zero() {
            return T::one();
        }
        match self {
            ActivationKind::Relu => T::zero(),
            ActivationKind::Polu { n } => T::real(n) * (T::one() - v).powf(T::real(-n - 1.0)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Activation<T> {
    pub kind: ActivationKind,
    input: Option<Tensor4<T>>,
}

impl<T: Real> Activation<T> {
    pub fn new(kind: ActivationKind) -> Self {
        Activation { kind, input: None }
    }

    pub fn infer(&self, x: &Tensor4<T>) -> Tensor4<T> {
        let mut out = x.clone();
        out.data_mut().iter_mut().for_each(|v| *v = self.kind.value(*v));
        out
    }

    pub fn forward(&mut self, x: &Tensor4<T>) -> Tensor4<T> {
        let out = self.infer(x);
        self.input = Some(x.clone());
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self.input.take().ok_or(Error::BackwardBeforeForward("activation"))?;
        if x.shape() != grad_out.shape() {
            return Err(Error::shape("activation gradient shape"));
        }
        let mut g = grad_out.clone();
        for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
            *gv = *gv * self.kind.derivative(xv);
        }
        Ok(g)
    }
}
