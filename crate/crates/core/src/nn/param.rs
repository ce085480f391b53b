use rand::Rng;
use rand_distr::StandardNormal;

use crate::real::Real;

/// A named-by-position array of learnable values (or running statistics,
/// when `trainable` is false) together with its latest gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Option<Vec<T>>,
    pub trainable: bool,
}

impl<T: Real> Param<T> {
    pub fn filled(shape: &[usize], v: T) -> Self {
        Param { shape: shape.to_vec(), value: vec![v; shape.iter().product()], grad: None, trainable: true }
    }

    pub fn buffer(shape: &[usize], v: T) -> Self {
        Param { trainable: false, ..Self::filled(shape, v) }
    }

    /// He-normal initialization, `std = sqrt(2 / fan_in)`.
    pub fn he_normal<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let value = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                T::real(z * std)
            })
            .collect();
        Param { shape: shape.to_vec(), value, grad: None, trainable: true }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub(crate) fn set_grad(&mut self, g: Vec<T>) {
        debug_assert_eq!(g.len(), self.value.len());
        self.grad = Some(g);
    }
}

/// Walks every parameter and buffer of a layer tree with dotted names.
pub trait Visit<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
