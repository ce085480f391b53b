//! Zero-filling, GRAPPA, a plain U-Net and the residual dense U-Net at two
//! Fourier weights, each network trained from several seeds.
//!
//! cargo run --release --example compare_methods -- [steps] [seeds]

use std::collections::BTreeMap;

use kspace_recon::grappa::GrappaSettings;
use kspace_recon::metrics::{evaluate_methods, Method, TestCase};
use kspace_recon::nn::{NetConfig, SkipKind};
use kspace_recon::simulate::{forward_acquire, make_sensitivities, random_phantom, SamplingMask};
use kspace_recon::train::{augment_pairs, train_model, SamplePair, TrainConfig};
use kspace_recon::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let steps = args.next().flatten().unwrap_or(150);
    let n_seeds = args.next().flatten().unwrap_or(3) as u64;

    let sens = make_sensitivities(8, 64, 64)?;
    let mask = SamplingMask::build(64, 4, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut full = || forward_acquire(&random_phantom(64, 64, &mut rng)?, &sens);
    let train: Vec<SamplePair> = (0..4).map(|_| SamplePair::from_kspace(&full()?, &mask)).collect::<Result<_>>()?;
    let train = augment_pairs(&train)?;
    let test: Vec<TestCase> = (0..8).map(|_| TestCase::from_full(&full()?, &mask)).collect::<Result<_>>()?;

    let seeds: Vec<u64> = (1..=n_seeds).collect();
    let rd = NetConfig::default();
    let plain = NetConfig { skip: SkipKind::Plain, ..rd };
    let mut methods = vec![
        ("zero_fill".to_string(), Method::ZeroFill),
        ("grappa".to_string(), Method::Grappa(GrappaSettings::default())),
    ];
    for (label, net, alpha) in [("u_net", plain, 0.01), ("rd_unet_a0", rd, 0.0), ("rd_unet_a0.01", rd, 0.01)] {
        let mut models = BTreeMap::new();
        for &seed in &seeds {
            let cfg = TrainConfig { epochs: usize::MAX, max_steps: Some(steps), alpha, seed, ..TrainConfig::default() };
            models.insert(seed, train_model(&train, &net, &cfg)?.0);
        }
        methods.push((label.to_string(), Method::Network(models)));
    }
    print!("{}", evaluate_methods(&test, &methods, &seeds)?.to_table());
    Ok(())
}
