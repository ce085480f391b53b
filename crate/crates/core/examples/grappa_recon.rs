//! GRAPPA against zero-filling, and the effect of the ridge weight.
//!
//! cargo run --release --example grappa_recon

use kspace_recon::grappa::{calibrate, grappa_recon, reconstruct, GrappaSettings, KernelGeometry};
use kspace_recon::metrics::mse;
use kspace_recon::simulate::{apply_mask, forward_acquire, make_sensitivities, shepp_logan, zero_filled_recon, SamplingMask};
use kspace_recon::train::normalize;
use kspace_recon::Result;

fn main() -> Result<()> {
    let n = 96;
    let truth = normalize(&shepp_logan(n, n)?);
    let full = forward_acquire(&shepp_logan(n, n)?, &make_sensitivities(8, n, n)?)?;

    for accel in [2, 3, 4] {
        let mask = SamplingMask::build(n, accel, 24)?;
        let under = apply_mask(&full, &mask)?;
        let zf = mse(&truth, &normalize(&zero_filled_recon(&under)?))?;
        let g = mse(&truth, &normalize(&grappa_recon(&under, &mask, &GrappaSettings::default())?))?;
        println!("R={accel}: zero-filled {zf:.4}  GRAPPA {g:.4}");
    }

    let mask = SamplingMask::build(n, 4, 24)?;
    let under = apply_mask(&full, &mask)?;
    let acs = under.rows(mask.acs_rows());
    println!("\nR=4, ridge sweep:");
    for lambda in [0.0, 1e-6, 1e-4, 1e-2, 1.0] {
        let kernel = calibrate(&acs, 4, KernelGeometry::default(), lambda)?;
        let err = mse(&truth, &normalize(&reconstruct(&under, &mask, &kernel)?))?;
        println!("  lambda {lambda:<6e} kernel norm {:8.3}  mse {err:.4}", kernel.norm());
    }
    Ok(())
}
