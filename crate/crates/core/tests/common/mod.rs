//! Central finite-difference gradient checking shared by the test targets.
#![allow(dead_code)]

use kspace_recon::nn::{
    concat_channels, split_channels, Activation, ActivationKind, BatchNorm, Conv2d, Deconv2, MaxPool2, Mode, NetConfig,
    Param, RdUnet, Rdb, Tensor4, Visit,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type T4 = Tensor4<f64>;

/// Something with a forward map, a backward map and (maybe) parameters.
pub trait Differentiable {
    fn fwd(&mut self, x: &T4) -> T4;
    fn bwd(&mut self, g: &T4) -> T4;
    fn params(&mut self) -> Option<&mut dyn Visit<f64>> {
        None
    }
}

struct NoParams;

impl Visit<f64> for NoParams {
    fn visit(&self, _: &str, _: &mut dyn FnMut(&str, &Param<f64>)) {}
    fn visit_mut(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param<f64>)) {}
}

macro_rules! with_params {
    ($ty:ty, |$s:ident, $x:ident| $f:expr, |$s2:ident, $g:ident| $b:expr) => {
        impl Differentiable for $ty {
            fn fwd(&mut self, $x: &T4) -> T4 {
                let $s = self;
                $f
            }
            fn bwd(&mut self, $g: &T4) -> T4 {
                let $s2 = self;
                $b
            }
            fn params(&mut self) -> Option<&mut dyn Visit<f64>> {
                Some(self)
            }
        }
    };
}

with_params!(Conv2d<f64>, |s, x| s.forward(x).unwrap(), |s, g| s.backward(g).unwrap());
with_params!(BatchNorm<f64>, |s, x| s.forward(x, Mode::Train).unwrap(), |s, g| s.backward(g).unwrap());
with_params!(Deconv2<f64>, |s, x| s.forward(x).unwrap(), |s, g| s.backward(g).unwrap());
with_params!(Rdb<f64>, |s, x| s.forward(x, Mode::Train).unwrap(), |s, g| s.backward(g).unwrap());
with_params!(RdUnet<f64>, |s, x| s.forward(x, Mode::Train).unwrap(), |s, g| s.backward(g).unwrap());

impl Differentiable for Activation<f64> {
    fn fwd(&mut self, x: &T4) -> T4 {
        self.forward(x)
    }
    fn bwd(&mut self, g: &T4) -> T4 {
        self.backward(g).unwrap()
    }
}

impl Differentiable for MaxPool2 {
    fn fwd(&mut self, x: &T4) -> T4 {
        self.forward(x).unwrap()
    }
    fn bwd(&mut self, g: &T4) -> T4 {
        self.backward(g).unwrap()
    }
}

/// Splits the channels at `at` and re-stacks the halves in swapped order.
pub struct Swap {
    pub at: usize,
}

impl Differentiable for Swap {
    fn fwd(&mut self, x: &T4) -> T4 {
        let (a, b) = split_channels(x, self.at).unwrap();
        concat_channels(&b, &a).unwrap()
    }
    fn bwd(&mut self, g: &T4) -> T4 {
        let (gb, ga) = split_channels(g, g.channels() - self.at).unwrap();
        concat_channels(&ga, &gb).unwrap()
    }
}

fn params_of(layer: &mut dyn Differentiable) -> &mut dyn Visit<f64> {
    // NoParams is zero-sized, so leaking one costs nothing
    match layer.params() {
        Some(p) => p,
        None => Box::leak(Box::new(NoParams)),
    }
}

fn trainable_len(v: &mut dyn Visit<f64>) -> usize {
    let mut n = 0;
    v.visit("", &mut |_, p| {
        if p.trainable {
            n += p.len()
        }
    });
    n
}

fn nudge(v: &mut dyn Visit<f64>, index: usize, delta: f64) {
    let mut i = index;
    v.visit_mut("", &mut |_, p| {
        if !p.trainable || i == usize::MAX {
            return;
        }
        if i < p.len() {
            p.value[i] += delta;
            i = usize::MAX;
        } else {
            i -= p.len();
        }
    });
}

fn grads(v: &mut dyn Visit<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    v.visit("", &mut |name, p| {
        if p.trainable {
            out.extend(p.grad.as_ref().unwrap_or_else(|| panic!("{name} has no gradient")));
        }
    });
    out
}

fn dot(a: &T4, b: &T4) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Relative error `|a - n| / max(|a|, |n|)` of analytic against numeric
/// gradients of the projection `sum(r * layer(x))`, over the input and every
/// trainable parameter.
pub fn check_once(layer: &mut dyn Differentiable, x: &T4, rng: &mut ChaCha8Rng) -> f64 {
    const H: f64 = 1e-5;
    let out = layer.fwd(x);
    let r = T4::from_fn(out.shape(), |_| rng.random_range(-1.0..1.0));
    let gx = layer.bwd(&r);
    let mut analytic = gx.data().to_vec();
    analytic.extend(grads(params_of(layer)));

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let v = x.data()[i];
        xp.data_mut()[i] = v + H;
        let fp = dot(&r, &layer.fwd(&xp));
        xp.data_mut()[i] = v - H;
        let fm = dot(&r, &layer.fwd(&xp));
        xp.data_mut()[i] = v;
        numeric.push((fp - fm) / (2.0 * H));
    }
    let n_params = trainable_len(params_of(layer));
    for i in 0..n_params {
        nudge(params_of(layer), i, H);
        let fp = dot(&r, &layer.fwd(x));
        nudge(params_of(layer), i, -2.0 * H);
        let fm = dot(&r, &layer.fwd(x));
        nudge(params_of(layer), i, H);
        numeric.push((fp - fm) / (2.0 * H));
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-300)
}

/// Perturb every trainable parameter so biases and BN affine terms are
/// not at their special initial values.
pub fn jitter(v: &mut dyn Visit<f64>, rng: &mut ChaCha8Rng) {
    v.visit_mut("", &mut |_, p| {
        if p.trainable {
            p.value.iter_mut().for_each(|w| *w += rng.random_range(-0.2..0.2));
        }
    });
}

pub struct Case {
    pub name: &'static str,
    pub shape: [usize; 4],
    pub tolerance: f64,
    pub make: fn(&mut ChaCha8Rng) -> Box<dyn Differentiable>,
}

fn boxed<L: Differentiable + 'static>(mut l: L, rng: &mut ChaCha8Rng) -> Box<dyn Differentiable> {
    if let Some(p) = l.params() {
        jitter(p, rng);
    }
    Box::new(l)
}

pub fn cases() -> Vec<Case> {
    vec![
        Case { name: "conv3x3", shape: [2, 3, 6, 5], tolerance: 1e-4, make: |r| boxed(Conv2d::new(3, 4, 3, r), r) },
        Case { name: "conv1x1", shape: [2, 4, 5, 5], tolerance: 1e-4, make: |r| boxed(Conv2d::new(4, 2, 1, r), r) },
        Case { name: "batchnorm_train", shape: [3, 3, 4, 4], tolerance: 1e-4, make: |r| boxed(BatchNorm::new(3), r) },
        Case {
            name: "polu",
            shape: [2, 2, 5, 5],
            tolerance: 1e-4,
            make: |_| Box::new(Activation::<f64>::new(ActivationKind::Polu { n: 1.0 })),
        },
        Case {
            name: "polu_n2",
            shape: [2, 2, 5, 5],
            tolerance: 1e-4,
            make: |_| Box::new(Activation::<f64>::new(ActivationKind::Polu { n: 2.0 })),
        },
        Case { name: "maxpool2", shape: [2, 3, 6, 6], tolerance: 1e-4, make: |_| Box::new(MaxPool2::new()) },
        Case {
            name: "deconv2",
            shape: [2, 4, 3, 4],
            tolerance: 1e-4,
            make: |r| boxed(Deconv2::new(4, r).unwrap(), r),
        },
        Case { name: "concat", shape: [2, 5, 3, 3], tolerance: 1e-4, make: |_| Box::new(Swap { at: 2 }) },
        Case {
            name: "rdb",
            shape: [2, 3, 6, 6],
            tolerance: 1e-4,
            make: |r| boxed(Rdb::new(3, ActivationKind::default(), r), r),
        },
        Case {
            name: "rd_unet_depth1",
            shape: [2, 1, 8, 8],
            tolerance: 1e-3,
            make: |r| {
                let cfg = NetConfig { depth: 1, base_channels: 4, ..Default::default() };
                boxed(RdUnet::<f64>::new(cfg, r.random()).unwrap(), r)
            },
        },
    ]
}

/// Worst relative error of `case` over `trials` random inputs and weights.
pub fn worst_error(case: &Case, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut layer = (case.make)(&mut rng);
        let x = T4::from_fn(case.shape, |_| rng.random_range(-1.0..1.0));
        worst = worst.max(check_once(layer.as_mut(), &x, &mut rng));
    }
    worst
}
