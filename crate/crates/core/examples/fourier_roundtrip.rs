//! Centered unitary 2-D FFT on a Shepp-Logan phantom.
//!
//! cargo run --example fourier_roundtrip

use kspace_recon::fourier::{fft2c, ifft2c, ComplexImage};
use kspace_recon::simulate::shepp_logan;
use kspace_recon::Result;

fn main() -> Result<()> {
    let (ny, nx) = (128, 96);
    let img = ComplexImage::from_real(&shepp_logan(ny, nx)?);
    let k = fft2c(&img)?;
    let back = ifft2c(&k)?;

    let err = img.data.iter().zip(&back.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let dc = k.data[(ny / 2) * nx + nx / 2];
    let sum: f64 = img.data.iter().map(|z| z.re).sum();
    let (peak, _) = k.data.iter().enumerate().fold((0, 0.0), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best });

    println!("image energy   {:.6}", img.energy());
    println!("k-space energy {:.6}", k.energy());
    println!("round trip max error {err:.2e}");
    println!("DC at ({}, {}) = {:.4}, image sum / sqrt(N) = {:.4}", ny / 2, nx / 2, dc.re, sum / ((ny * nx) as f64).sqrt());
    println!("largest coefficient at ({}, {})", peak / nx, peak % nx);
    Ok(())
}
