//! Data preparation and the SGD training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fourier::RealImage;
use crate::loss::{loss_and_grad, LossReport};
use crate::metrics::mean_mse;
use crate::nn::{Mode, Model, NetConfig, RdUnet, Tensor4, Visit};
use crate::real::Real;
use crate::simulate::{apply_mask, rss_combine, zero_filled_recon, CoilKSpace, SamplingMask};

pub const NORMALIZE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            32 => Ok(Precision::F32),
            64 => Ok(Precision::F64),
            other => Err(Error::Config(format!("precision must be 32 or 64, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    /// Halve the learning rate after this many epochs.
    pub lr_halve_every: usize,
    /// Weight of the k-space L1 term.
    pub alpha: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Expand every pair into its eight rotations/reflections.
    pub augment: bool,
    /// Stop after this many SGD steps, if set.
    pub max_steps: Option<usize>,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 3,
            lr0: 0.02,
            momentum: 0.5,
            lr_halve_every: 20,
            alpha: 0.01,
            seed: 0,
            precision: Precision::F32,
            augment: true,
            max_steps: None,
            checkpoint_every: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr0 >= 0.0) || !self.lr0.is_finite() {
            return bad(format!("lr0 must be finite and non-negative, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.lr_halve_every == 0 || self.checkpoint_every == 0 {
            return bad("lr_halve_every and checkpoint_every must be at least 1".into());
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be finite and non-negative, got {}", self.alpha));
        }
        Ok(())
    }
}

/// Step schedule: `lr0 * 0.5^floor(epoch / lr_halve_every)`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let halvings = (epoch / cfg.lr_halve_every.max(1)) as i32;
    cfg.lr0 * 0.5f64.powi(halvings)
}

/// Zero mean, unit (population) variance; constant images map to zero.
pub fn normalize(img: &RealImage) -> RealImage {
    let n = img.data.len() as f64;
    let mean = img.data.iter().sum::<f64>() / n;
    let var = img.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + NORMALIZE_EPS);
    RealImage { ny: img.ny, nx: img.nx, data: img.data.iter().map(|v| (v - mean) * scale).collect() }
}

fn rot90(img: &RealImage) -> RealImage {
    let n = img.ny;
    RealImage::from_fn(n, n, |y, x| img.at(x, n - 1 - y))
}

fn mirror(img: &RealImage) -> RealImage {
    let n = img.nx;
    RealImage::from_fn(img.ny, n, |y, x| img.at(y, n - 1 - x))
}

/// The eight rotations and reflections of a square image; element 0 is the
/// image itself, 1..4 its rotations, 4..8 the rotations of its mirror.
pub fn augment8(img: &RealImage) -> Result<Vec<RealImage>> {
    if img.ny != img.nx {
        return Err(Error::shape(format!("augmentation needs a square image, got {}x{}", img.ny, img.nx)));
    }
    let mut out = Vec::with_capacity(8);
    for start in [img.clone(), mirror(img)] {
        let mut cur = start;
        for _ in 0..4 {
            let next = rot90(&cur);
            out.push(cur);
            cur = next;
        }
    }
    Ok(out)
}

/// Network input (zero-filled) and target (fully sampled), both normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub input: RealImage,
    pub target: RealImage,
}

impl SamplePair {
    /// Build a pair by undersampling fully sampled coil k-space.
    pub fn from_kspace(full: &CoilKSpace, mask: &SamplingMask) -> Result<Self> {
        let zf = zero_filled_recon(&apply_mask(full, mask)?)?;
        let truth = rss_combine(full)?;
        Ok(SamplePair { input: normalize(&zf), target: normalize(&truth) })
    }

    pub fn from_images(zero_filled: &RealImage, truth: &RealImage) -> Result<Self> {
        if !zero_filled.same_shape(truth) {
            return Err(Error::shape("input and target differ in shape"));
        }
        Ok(SamplePair { input: normalize(zero_filled), target: normalize(truth) })
    }
}

/// Expand each pair into its eight aligned rotations/reflections.
pub fn augment_pairs(pairs: &[SamplePair]) -> Result<Vec<SamplePair>> {
    let mut out = Vec::with_capacity(pairs.len() * 8);
    for p in pairs {
        for (input, target) in augment8(&p.input)?.into_iter().zip(augment8(&p.target)?) {
            out.push(SamplePair { input, target });
        }
    }
    Ok(out)
}

/// Heavy-ball SGD: `v = momentum * v + grad; p -= lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(momentum: f64) -> Self {
        Sgd { momentum, velocity: Vec::new() }
    }

    /// Update every trainable parameter from its stored gradient.
    pub fn step(&mut self, model: &mut dyn Visit<T>, lr: f64) -> Result<()> {
        // check first so a missing gradient leaves the model untouched
        let mut missing = None;
        model.visit("", &mut |name, p| {
            if p.trainable && p.grad.is_none() && missing.is_none() {
                missing = Some(name.to_string());
            }
        });
        if let Some(name) = missing {
            return Err(Error::NoGradient(name));
        }
        let (mu, lr) = (T::real(self.momentum), T::real(lr));
        let velocity = &mut self.velocity;
        let mut i = 0;
        model.visit_mut("", &mut |_, p| {
            if !p.trainable {
                return;
            }
            if velocity.len() == i {
                velocity.push(vec![T::zero(); p.len()]);
            }
            let v = &mut velocity[i];
            let g = p.grad.as_ref().expect("checked above");
            for ((pv, vv), &gv) in p.value.iter_mut().zip(v.iter_mut()).zip(g) {
                *vv = mu * *vv + gv;
                *pv = *pv - lr * *vv;
            }
            i += 1;
        });
        Ok(())
    }
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Total loss of every SGD step, in order.
    pub steps: Vec<f64>,
}

fn batch_tensors<T: Real>(pairs: &[&SamplePair]) -> (Tensor4<T>, Tensor4<T>) {
    let (ny, nx) = (pairs[0].input.ny, pairs[0].input.nx);
    let shape = [pairs.len(), 1, ny, nx];
    let plane = ny * nx;
    let x = Tensor4::from_fn(shape, |i| T::real(pairs[i / plane].input.data[i % plane]));
    let y = Tensor4::from_fn(shape, |i| T::real(pairs[i / plane].target.data[i % plane]));
    (x, y)
}

fn check_dataset(dataset: &[SamplePair], config: &NetConfig) -> Result<()> {
    let first = dataset.first().ok_or_else(|| Error::Config("training set is empty".into()))?;
    let m = config.size_multiple();
    if first.input.ny % m != 0 || first.input.nx % m != 0 {
        return Err(Error::shape(format!(
            "{}x{} images are not divisible by {m} for a depth-{} network",
            first.input.ny, first.input.nx, config.depth
        )));
    }
    if dataset.iter().any(|p| !p.input.same_shape(&first.input) || !p.target.same_shape(&first.input)) {
        return Err(Error::shape("training pairs differ in shape"));
    }
    Ok(())
}

/// [`train_loop_with`] without checkpoint callbacks.
pub fn train_loop<T: Real>(dataset: &[SamplePair], net: &mut RdUnet<T>, cfg: &TrainConfig) -> Result<TrainHistory> {
    train_loop_with(dataset, net, cfg, &mut |_, _| Ok(()))
}

/// Train with shuffled mini-batches. `on_checkpoint(epochs_done, net)` runs
/// every `checkpoint_every` epochs and once more at the end.
pub fn train_loop_with<T: Real>(
    dataset: &[SamplePair],
    net: &mut RdUnet<T>,
    cfg: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(usize, &RdUnet<T>) -> Result<()>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    check_dataset(dataset, net.config())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut sgd = Sgd::new(cfg.momentum);
    let mut history = TrainHistory::default();
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    let mut last_saved = None;

    for epoch in 0..cfg.epochs {
        if history.steps.len() >= max_steps {
            break;
        }
        let lr = lr_schedule(epoch, cfg);
        order.shuffle(&mut rng);
        let mut sum = LossReport::zero(cfg.alpha);
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if history.steps.len() >= max_steps {
                break;
            }
            let pairs: Vec<&SamplePair> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (x, y) = batch_tensors::<T>(&pairs);
            let pred = net.forward(&x, Mode::Train)?;
            let (report, grad) = loss_and_grad(&pred, &y, cfg.alpha)?;
            if !report.total.is_finite() || !pred.is_finite() {
                return Err(Error::DivergedTraining { epoch });
            }
            net.backward(&grad)?;
            sgd.step(net, lr)?;
            let k = pairs.len() as f64;
            sum.total += report.total * k;
            sum.l2_term += report.l2_term * k;
            sum.fourier_term += report.fourier_term * k;
            seen += pairs.len();
            history.steps.push(report.total);
        }
        let k = seen.max(1) as f64;
        let loss = LossReport {
            total: sum.total / k,
            l2_term: sum.l2_term / k,
            fourier_term: sum.fourier_term / k,
            alpha: cfg.alpha,
        };
        history.epochs.push(EpochRecord { epoch, lr, loss });
        if (epoch + 1) % cfg.checkpoint_every == 0 {
            on_checkpoint(epoch + 1, net)?;
            last_saved = Some(epoch + 1);
        }
    }
    let done = history.epochs.len();
    if last_saved != Some(done) {
        on_checkpoint(done, net)?;
    }
    Ok(history)
}

/// Build a network at the configured precision, initialized from
/// `cfg.seed`, and train it.
pub fn train_model(dataset: &[SamplePair], net_cfg: &NetConfig, cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    match cfg.precision {
        Precision::F32 => {
            let mut net = RdUnet::<f32>::new(*net_cfg, cfg.seed)?;
            let h = train_loop(dataset, &mut net, cfg)?;
            Ok((net.into(), h))
        }
        Precision::F64 => {
            let mut net = RdUnet::<f64>::new(*net_cfg, cfg.seed)?;
            let h = train_loop(dataset, &mut net, cfg)?;
            Ok((net.into(), h))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub alpha: f64,
    /// Mean squared error on the held-out pairs.
    pub mse: f64,
    pub final_loss: f64,
}

/// Train one network per `alpha` and rank them by held-out MSE (best first).
pub fn sweep_alpha(
    train_set: &[SamplePair],
    held_out: &[SamplePair],
    net_cfg: &NetConfig,
    cfg: &TrainConfig,
    alphas: &[f64],
) -> Result<Vec<SweepEntry>> {
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let run = TrainConfig { alpha, ..cfg.clone() };
        let (model, history) = train_model(train_set, net_cfg, &run)?;
        let mse = mean_mse(&model, held_out)?;
        out.push(SweepEntry { alpha, mse, final_loss: history.steps.last().copied().unwrap_or(f64::NAN) });
    }
    out.sort_by(|a, b| a.mse.total_cmp(&b.mse));
    Ok(out)
}
