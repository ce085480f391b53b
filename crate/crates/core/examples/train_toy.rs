//! Train a small residual dense U-Net on augmented phantom pairs and compare
//! it with zero-filling on unseen phantoms.
//!
//! cargo run --release --example train_toy -- [steps]

use std::time::Instant;

use kspace_recon::metrics::mean_mse;
use kspace_recon::nn::NetConfig;
use kspace_recon::simulate::{forward_acquire, make_sensitivities, random_phantom, SamplingMask};
use kspace_recon::train::{augment_pairs, train_model, SamplePair, TrainConfig};
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
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let train = augment_pairs(&pairs(4, 1)?)?;
    let held_out = pairs(8, 2)?;
    let zf: f64 = held_out.iter().map(|p| kspace_recon::metrics::mse(&p.target, &p.input).unwrap()).sum::<f64>()
        / held_out.len() as f64;

    let cfg = TrainConfig { epochs: usize::MAX, max_steps: Some(steps), ..TrainConfig::default() };
    let start = Instant::now();
    let (model, history) = train_model(&train, &NetConfig::default(), &cfg)?;
    let secs = start.elapsed().as_secs_f64();

    for (i, l) in history.steps.iter().enumerate().step_by(20) {
        println!("step {i:4}  loss {l:.5}");
    }
    println!("final loss      {:.5}", history.steps.last().unwrap());
    println!("zero-filled mse {zf:.5}");
    println!("network mse     {:.5}", mean_mse(&model, &held_out)?);
    println!("{} steps in {secs:.1}s", history.steps.len());
    Ok(())
}
