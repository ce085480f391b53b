use crate::error::{Error, Result};
use crate::real::Real;

/// Dense `(batch, channels, height, width)` array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor4 { shape, data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) || data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape(format!(
                "tensor shape {shape:?} does not fit {} values",
                data.len()
            )));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize) -> T) -> Self {
        Tensor4 { shape, data: (0..shape.iter().product()).map(&mut f).collect() }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// All channels of one batch element, `(c, h, w)` contiguous.
    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.shape[1] * self.shape[2] * self.shape[3];
        &mut self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        let [_, cc, h, w] = self.shape;
        self.data[((b * cc + c) * h + y) * w + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise sum; shapes must agree.
    pub fn add(&self, other: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Tensor4<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!("cannot add {:?} and {:?}", self.shape, other.shape)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 { shape: self.shape, data: self.data.iter().map(|v| U::real(v.as_f64())).collect() }
    }

    pub(crate) fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFiniteInput(op))
        }
    }
}

/// Stack `a` then `b` along the channel axis.
pub fn concat_channels<T: Real>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [ba, ca, ha, wa] = a.shape();
    let [bb, cb, hb, wb] = b.shape();
    if (ba, ha, wa) != (bb, hb, wb) {
        return Err(Error::shape(format!("cannot concatenate {:?} with {:?}", a.shape(), b.shape())));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for n in 0..ba {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Ok(Tensor4 { shape: [ba, ca + cb, ha, wa], data })
}

/// Split along channels into the first `c_first` channels and the rest;
/// the backward of [`concat_channels`].
pub fn split_channels<T: Real>(x: &Tensor4<T>, c_first: usize) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let [b, c, h, w] = x.shape();
    if c_first == 0 || c_first >= c {
        return Err(Error::shape(format!("cannot split {c} channels at {c_first}")));
    }
    let plane = h * w;
    let mut first = Vec::with_capacity(b * c_first * plane);
    let mut second = Vec::with_capacity(b * (c - c_first) * plane);
    for n in 0..b {
        let s = x.sample(n);
        first.extend_from_slice(&s[..c_first * plane]);
        second.extend_from_slice(&s[c_first * plane..]);
    }
    Ok((
        Tensor4 { shape: [b, c_first, h, w], data: first },
        Tensor4 { shape: [b, c - c_first, h, w], data: second },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_is_identity() {
        let a = Tensor4::<f64>::from_fn([2, 3, 2, 2], |i| i as f64);
        let b = Tensor4::<f64>::from_fn([2, 5, 2, 2], |i| -(i as f64));
        let cat = concat_channels(&a, &b).unwrap();
        assert_eq!(cat.shape(), [2, 8, 2, 2]);
        let (a2, b2) = split_channels(&cat, 3).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    fn concat_rejects_mismatch() {
        let a = Tensor4::<f64>::zeros([1, 1, 2, 2]);
        let b = Tensor4::<f64>::zeros([1, 1, 2, 4]);
        assert!(matches!(concat_channels(&a, &b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor4::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor4::<f32>::from_vec([0, 1, 2, 2], vec![]).is_err());
    }
}
