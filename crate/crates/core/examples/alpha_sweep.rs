//! Pick the Fourier-loss weight with the lowest held-out error.
//!
//! cargo run --release --example alpha_sweep -- [steps]

use kspace_recon::nn::NetConfig;
use kspace_recon::simulate::{forward_acquire, make_sensitivities, random_phantom, SamplingMask};
use kspace_recon::train::{augment_pairs, sweep_alpha, SamplePair, TrainConfig};
use kspace_recon::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pairs(n: usize, seed: u64) -> Result<Vec<SamplePair>> {
    let sens = make_sensitivities(8, 64, 64)?;
    let mask = SamplingMask::build(64, 4, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| SamplePair::from_kspace(&forward_acquire(&random_phantom(64, 64, &mut rng)?, &sens)?, &mask))
        .collect()
}

fn main() -> Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let train = augment_pairs(&pairs(3, 10)?)?;
    let held_out = pairs(6, 20)?;
    let cfg = TrainConfig { epochs: usize::MAX, max_steps: Some(steps), ..TrainConfig::default() };
    let ranked = sweep_alpha(&train, &held_out, &NetConfig::default(), &cfg, &[0.05, 0.01, 0.005, 0.0])?;
    println!("rank  alpha   held-out mse  final loss");
    for (i, r) in ranked.iter().enumerate() {
        println!("{:>4}  {:<6}  {:>12.5}  {:>10.5}", i + 1, r.alpha, r.mse, r.final_loss);
    }
    Ok(())
}
