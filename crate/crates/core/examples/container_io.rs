//! The tensor container, checkpoints and run configuration files.
//!
//! cargo run --example container_io

use kspace_recon::io::{Checkpoint, Container, RunConfig, TensorData};
use kspace_recon::nn::{NetConfig, RdUnet};
use kspace_recon::simulate::{shepp_logan, SamplingMask};
use kspace_recon::Result;

fn main() -> Result<()> {
    let mut c = Container::new();
    c.insert_image("image", &shepp_logan(16, 16)?)?;
    c.insert_mask("mask", &SamplingMask::build(16, 4, 4)?)?;
    c.insert("notes", &[3], TensorData::F32(vec![1.0, 2.0, 3.0]))?;
    let bytes = c.to_bytes();
    println!("container: {} bytes, header {:?}", bytes.len(), std::str::from_utf8(&bytes[..4]).unwrap());
    for e in Container::from_bytes(&bytes)?.entries() {
        println!("  {:<12} dtype {} dims {:?}", e.name, e.data.code(), e.dims);
    }

    let net = RdUnet::<f32>::new(NetConfig { depth: 1, base_channels: 4, ..Default::default() }, 3)?;
    let ck = Checkpoint { model: net.into(), seed: 3 }.to_container()?;
    println!("checkpoint: {} entries, e.g.", ck.entries().len());
    for e in ck.entries().iter().take(4) {
        println!("  {:<24} dims {:?}", e.name, e.dims);
    }

    let mut cfg = RunConfig::default();
    cfg.train.epochs = 20;
    cfg.train.max_steps = Some(200);
    println!("\nrun configuration:\n{}", cfg.to_toml_string()?);
    assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string()?)?, cfg);
    Ok(())
}
