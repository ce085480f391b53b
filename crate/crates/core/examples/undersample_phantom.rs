//! Simulate an 8-coil acquisition, undersample it and look at the aliasing.
//!
//! cargo run --example undersample_phantom -- [out_dir]

use std::path::PathBuf;

use kspace_recon::io::{diff_to_gray8, to_gray8, write_png};
use kspace_recon::metrics::mse;
use kspace_recon::simulate::{
    apply_mask, forward_acquire, make_sensitivities, rss_combine, shepp_logan, zero_filled_recon, SamplingMask,
};
use kspace_recon::train::normalize;
use kspace_recon::Result;

fn main() -> Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "undersample_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| kspace_recon::Error::Io { path: out.clone(), source: e })?;

    let n = 128;
    let truth = shepp_logan(n, n)?;
    let full = forward_acquire(&truth, &make_sensitivities(8, n, n)?)?;
    println!("fully sampled RSS vs phantom: {:.2e}", mse(&truth, &rss_combine(&full)?)?);

    for (accel, acs) in [(2, 16), (4, 16), (4, 32), (8, 16)] {
        let mask = SamplingMask::build(n, accel, acs)?;
        let zf = zero_filled_recon(&apply_mask(&full, &mask)?)?;
        let err = mse(&normalize(&truth), &normalize(&zf))?;
        println!("R={accel} acs={acs:2}: {:3} of {n} lines, zero-filled mse {err:.4}", mask.kept());
        let name = format!("zf_r{accel}_acs{acs}");
        write_png(&out.join(format!("{name}.png")), n, n, &to_gray8(&zf))?;
        write_png(&out.join(format!("{name}_diff.png")), n, n, &diff_to_gray8(&normalize(&zf), &normalize(&truth))?)?;
    }
    write_png(&out.join("truth.png"), n, n, &to_gray8(&truth))?;
    println!("images written to {}", out.display());
    Ok(())
}
