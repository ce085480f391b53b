//! Reconstruction error and the method comparison harness.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fourier::RealImage;
use crate::grappa::{grappa_recon, GrappaSettings};
use crate::nn::Model;
use crate::simulate::{apply_mask, rss_combine, zero_filled_recon, CoilKSpace, SamplingMask};
use crate::train::{normalize, SamplePair};

/// Mean squared pixel difference.
pub fn mse(y: &RealImage, yhat: &RealImage) -> Result<f64> {
    if !y.same_shape(yhat) {
        return Err(Error::shape(format!("{}x{} vs {}x{}", y.ny, y.nx, yhat.ny, yhat.nx)));
    }
    let sum: f64 = y.data.iter().zip(&yhat.data).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / y.data.len() as f64)
}

/// Average MSE of a network's predictions over input/target pairs.
pub fn mean_mse(model: &Model, pairs: &[SamplePair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("no pairs to evaluate".into()));
    }
    let mut total = 0.0;
    for p in pairs {
        total += mse(&p.target, &model.infer_image(&p.input)?)?;
    }
    Ok(total / pairs.len() as f64)
}

/// One undersampled acquisition with its ground truth.
#[derive(Debug, Clone)]
pub struct TestCase {
    pub truth: RealImage,
    pub kspace: CoilKSpace,
    pub mask: SamplingMask,
}

impl TestCase {
    /// Undersample fully sampled data; the truth is its coil combination.
    pub fn from_full(full: &CoilKSpace, mask: &SamplingMask) -> Result<Self> {
        Ok(TestCase { truth: rss_combine(full)?, kspace: apply_mask(full, mask)?, mask: mask.clone() })
    }

    pub fn zero_filled(&self) -> Result<RealImage> {
        zero_filled_recon(&self.kspace)
    }
}

#[derive(Debug, Clone)]
pub enum Method {
    ZeroFill,
    Grappa(GrappaSettings),
    /// One trained network per seed.
    Network(BTreeMap<u64, Model>),
}

impl Method {
    fn is_learned(&self) -> bool {
        matches!(self, Method::Network(_))
    }

    /// Normalized reconstruction of one case.
    fn reconstruct(&self, case: &TestCase, seed: u64, name: &str) -> Result<RealImage> {
        match self {
            Method::ZeroFill => Ok(normalize(&case.zero_filled()?)),
            Method::Grappa(s) => Ok(normalize(&grappa_recon(&case.kspace, &case.mask, s)?)),
            Method::Network(models) => {
                let model = models
                    .get(&seed)
                    .ok_or_else(|| Error::MissingModel(format!("{name} has no model for seed {seed}")))?;
                model.infer_image(&normalize(&case.zero_filled()?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodStats {
    pub name: String,
    pub mse_mean: f64,
    /// Sample standard deviation across trials; zero for a single trial.
    pub mse_std: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub per_method: Vec<MethodStats>,
}

/// Score each method on the test set. Learned methods get one trial per
/// seed; fixed methods are evaluated once.
pub fn evaluate_methods(test_set: &[TestCase], methods: &[(String, Method)], seeds: &[u64]) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    let truths: Vec<RealImage> = test_set.iter().map(|c| normalize(&c.truth)).collect();
    let mut report = EvalReport::default();
    for (name, method) in methods {
        let trials: Vec<u64> = if method.is_learned() {
            if seeds.is_empty() {
                return Err(Error::Config("learned methods need at least one seed".into()));
            }
            seeds.to_vec()
        } else {
            vec![0]
        };
        let mut per_trial = Vec::with_capacity(trials.len());
        for &seed in &trials {
            let mut sum = 0.0;
            for (case, truth) in test_set.iter().zip(&truths) {
                sum += mse(truth, &method.reconstruct(case, seed, name)?)?;
            }
            per_trial.push(sum / test_set.len() as f64);
        }
        report.per_method.push(stats(name, &per_trial));
    }
    Ok(report)
}

fn stats(name: &str, values: &[f64]) -> MethodStats {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    MethodStats { name: name.to_string(), mse_mean: mean, mse_std: std, n_trials: n }
}

impl EvalReport {
    pub fn get(&self, name: &str) -> Option<&MethodStats> {
        self.per_method.iter().find(|m| m.name == name)
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let width = self.per_method.iter().map(|m| m.name.len()).max().unwrap_or(0).max(6);
        let mut s = format!("{:<width$}  {:>12}  {:>12}  {:>6}\n", "method", "mse_mean", "mse_std", "trials");
        for m in &self.per_method {
            let _ = writeln!(s, "{:<width$}  {:>12.6}  {:>12.6}  {:>6}", m.name, m.mse_mean, m.mse_std, m.n_trials);
        }
        s
    }

    /// `name.field = value` lines, floats written losslessly.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for m in &self.per_method {
            let _ = writeln!(s, "{}.mse_mean = {:?}", m.name, m.mse_mean);
            let _ = writeln!(s, "{}.mse_std = {:?}", m.name, m.mse_std);
            let _ = writeln!(s, "{}.n_trials = {}", m.name, m.n_trials);
        }
        s
    }

    pub fn from_key_value(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::format(format!("bad report line: {line:?}"));
        let mut report = EvalReport::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line.split_once('=').ok_or_else(|| bad(line))?;
            let (name, field) = key.trim().rsplit_once('.').ok_or_else(|| bad(line))?;
            if report.per_method.last().is_none_or(|m| m.name != name) {
                report.per_method.push(MethodStats {
                    name: name.to_string(),
                    mse_mean: 0.0,
                    mse_std: 0.0,
                    n_trials: 0,
                });
            }
            let entry = report.per_method.last_mut().expect("pushed above");
            let value = value.trim();
            match field {
                "mse_mean" => entry.mse_mean = value.parse().map_err(|_| bad(line))?,
                "mse_std" => entry.mse_std = value.parse().map_err(|_| bad(line))?,
                "n_trials" => entry.n_trials = value.parse().map_err(|_| bad(line))?,
                _ => return Err(bad(line)),
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{NetConfig, RdUnet};
    use crate::simulate::{build_mask, forward_acquire, make_sensitivities, shepp_logan};

    #[test]
    fn mse_examples() {
        let y = RealImage::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(mse(&y, &RealImage::zeros(2, 2)).unwrap(), 0.5);
        let a = RealImage::from_fn(3, 3, |r, c| (r * 3 + c) as f64);
        let b = RealImage::from_fn(3, 3, |r, c| (r + c * c) as f64 * 0.5);
        let scale = |img: &RealImage| RealImage { data: img.data.iter().map(|v| v * 3.0).collect(), ..img.clone() };
        let base = mse(&a, &b).unwrap();
        assert!((mse(&scale(&a), &scale(&b)).unwrap() - 9.0 * base).abs() < 1e-12 * base);
        assert!(matches!(mse(&a, &RealImage::zeros(3, 2)), Err(Error::ShapeMismatch(_))));
    }

    fn cases() -> Vec<TestCase> {
        let sens = make_sensitivities(4, 32, 32).unwrap();
        let full = forward_acquire(&shepp_logan(32, 32).unwrap(), &sens).unwrap();
        vec![TestCase::from_full(&full, &build_mask(32, 4, 16).unwrap()).unwrap()]
    }

    #[test]
    fn evaluation_statistics() {
        let cases = cases();
        let methods = vec![
            ("zf".to_string(), Method::ZeroFill),
            ("zf_again".to_string(), Method::ZeroFill),
            ("grappa".to_string(), Method::Grappa(GrappaSettings::default())),
        ];
        let report = evaluate_methods(&cases, &methods, &[1, 2, 3]).unwrap();
        let zf = report.get("zf").unwrap();
        assert_eq!(zf.mse_std, 0.0);
        assert_eq!(zf.n_trials, 1);
        assert!(zf.mse_mean > 0.0);
        assert_eq!(zf.mse_mean, report.get("zf_again").unwrap().mse_mean);
        assert_eq!(report, evaluate_methods(&cases, &methods, &[1, 2, 3]).unwrap());
        assert_eq!(EvalReport::from_key_value(&report.to_key_value()).unwrap(), report);
        assert!(report.to_table().lines().count() == 4);
    }

    #[test]
    fn network_trials_and_missing_models() {
        let cases = cases();
        let cfg = NetConfig { depth: 1, base_channels: 4, ..Default::default() };
        let mut models = BTreeMap::new();
        for seed in [5u64, 6] {
            let mut net = RdUnet::<f64>::new(cfg, seed).unwrap();
            net.zero_parameters();
            models.insert(seed, Model::from(net));
        }
        let methods = vec![("zf".to_string(), Method::ZeroFill), ("net".to_string(), Method::Network(models))];
        let report = evaluate_methods(&cases, &methods, &[5, 6]).unwrap();
        let net = report.get("net").unwrap();
        assert_eq!(net.n_trials, 2);
        // zero parameters pass the normalized zero-filled input through
        assert!((net.mse_mean - report.get("zf").unwrap().mse_mean).abs() < 1e-12);
        assert_eq!(net.mse_std, 0.0);
        assert!(matches!(evaluate_methods(&cases, &methods, &[7]), Err(Error::MissingModel(_))));
    }
}
