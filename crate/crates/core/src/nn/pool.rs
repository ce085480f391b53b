use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone)]
struct PoolCache {
    in_shape: [usize; 4],
    argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Ties go to the first element in row-major order.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    cache: Option<PoolCache>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        MaxPool2 { cache: None }
    }

    fn run<T: Real>(x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<usize>)> {
        let [b, c, h, w] = x.shape();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!("max pooling needs even height and width, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor4::zeros([b, c, oh, ow]);
        let mut argmax = Vec::with_capacity(out.len());
        let src = x.data();
        let dst = out.data_mut();
        let mut o = 0;
        for plane in 0..b * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * y + dy) * w + 2 * xx + dx;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    dst[o] = src[best];
                    argmax.push(best);
                    o += 1;
                }
            }
        }
        Ok((out, argmax))
    }

    pub fn infer<T: Real>(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(Self::run(x)?.0)
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let (out, argmax) = Self::run(x)?;
        self.cache = Some(PoolCache { in_shape: x.shape(), argmax });
        Ok(out)
    }

    pub fn backward<T: Real>(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let cache = self.cache.take().ok_or(Error::BackwardBeforeForward("maxpool2"))?;
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::shape("max pool gradient shape"));
        }
        let mut gx = Tensor4::zeros(cache.in_shape);
        let dst = gx.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
            dst[idx] = dst[idx] + g;
        }
        Ok(gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_window() {
        let x = Tensor4::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(MaxPool2::new().infer(&x).unwrap().data(), &[4.0]);
    }

    #[test]
    fn ties_route_to_first_element() {
        let x = Tensor4::<f64>::from_fn([1, 2, 4, 4], |_| 7.0);
        let mut pool = MaxPool2::new();
        let y = pool.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
        let g = pool.backward(&Tensor4::from_fn(y.shape(), |_| 1.0)).unwrap();
        assert_eq!(g.data().iter().filter(|&&v| v == 1.0).count(), 8);
        assert_eq!(g.at(0, 0, 0, 0), 1.0);
        assert_eq!(g.at(0, 0, 0, 1), 0.0);
        assert_eq!(g.at(0, 1, 2, 2), 1.0);
    }

    #[test]
    fn odd_size_is_rejected() {
        let x = Tensor4::<f64>::zeros([1, 1, 3, 4]);
        assert!(matches!(MaxPool2::new().infer(&x), Err(Error::ShapeMismatch(_))));
    }
}
