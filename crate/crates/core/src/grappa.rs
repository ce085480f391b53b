//! GRAPPA: fill skipped phase-encode lines with linear combinations of the
//! acquired neighbours from every coil, the weights being fitted on the
//! fully sampled calibration (ACS) block.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::RealImage;
use crate::simulate::{rss_combine, CoilKSpace, SamplingMask};

/// Minimum number of calibration windows (row positions times columns).
pub const MIN_WINDOWS: usize = 16;

/// Source neighbourhood of one interpolation kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelGeometry {
    /// Acquired lines, spaced `R` apart, that bracket the gap.
    pub n_src_lines: usize,
    /// Adjacent readout columns per source line.
    pub kx: usize,
}

impl Default for KernelGeometry {
    fn default() -> Self {
        KernelGeometry { n_src_lines: 4, kx: 5 }
    }
}

impl KernelGeometry {
    /// Row offsets of the source lines relative to the acquired line
    /// directly above the gap.
    pub fn line_offsets(&self, accel: usize) -> Vec<isize> {
        let first = -(((self.n_src_lines as isize) - 1) / 2);
        (0..self.n_src_lines as isize).map(|j| (first + j) * accel as isize).collect()
    }

    pub fn column_offsets(&self) -> Vec<isize> {
        let half = (self.kx / 2) as isize;
        (0..self.kx as isize).map(|t| t - half).collect()
    }

    pub fn n_features(&self, nc: usize) -> usize {
        nc * self.n_src_lines * self.kx
    }
}

/// Calibration knobs; `lambda` is relative to the mean diagonal of the normal matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrappaSettings {
    pub geometry: KernelGeometry,
    pub lambda: f64,
}

impl Default for GrappaSettings {
    fn default() -> Self {
        GrappaSettings { geometry: KernelGeometry::default(), lambda: 1e-4 }
    }
}

/// Fitted interpolation weights, one `(n_features x nc)` block per
/// missing-line offset `r = 1..R`.
#[derive(Debug, Clone)]
pub struct GrappaKernel {
    pub accel: usize,
    pub nc: usize,
    pub geometry: KernelGeometry,
    /// Absolute Tikhonov weight actually added to the normal equations.
    pub lambda: f64,
    pub weights: Vec<DMatrix<Complex64>>,
}

impl GrappaKernel {
    /// Weights for offset `r` (1-based).
    pub fn offset(&self, r: usize) -> &DMatrix<Complex64> {
        &self.weights[r - 1]
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_squared()).sum::<f64>().sqrt()
    }
}

/// Least-squares system gathered from the ACS block: one row per window,
/// shared source matrix, one target matrix per offset.
#[derive(Debug, Clone)]
pub struct CalibrationSystem {
    pub sources: DMatrix<Complex64>,
    pub targets: Vec<DMatrix<Complex64>>,
}

fn gather_features(
    ksp: &CoilKSpace,
    row_of: impl Fn(isize) -> Option<usize>,
    y0: isize,
    x: usize,
    lines: &[isize],
    cols: &[isize],
    out: &mut [Complex64],
) {
    let nx = ksp.nx as isize;
    let mut f = 0;
    for c in 0..ksp.nc {
        for &dy in lines {
            let row = row_of(y0 + dy);
            for &dx in cols {
                out[f] = match row {
                    Some(y) => ksp.at(c, y, (x as isize + dx).rem_euclid(nx) as usize),
                    None => Complex64::new(0.0, 0.0),
                };
                f += 1;
            }
        }
    }
}

/// Build the calibration system from a fully sampled ACS block.
pub fn calibration_system(
    acs: &CoilKSpace,
    accel: usize,
    geometry: KernelGeometry,
) -> Result<CalibrationSystem> {
    if acs.nc < 2 {
        return Err(Error::NeedMultipleCoils(acs.nc));
    }
    if accel == 0 || geometry.n_src_lines == 0 || geometry.kx == 0 {
        return Err(Error::InsufficientCalibration(format!(
            "degenerate kernel: R = {accel}, {} lines x {} columns",
            geometry.n_src_lines, geometry.kx
        )));
    }
    let lines = geometry.line_offsets(accel);
    let cols = geometry.column_offsets();
    let lo = (-lines[0]).max(0);
    let reach = (*lines.last().unwrap()).max(accel as isize - 1);
    let hi = acs.ny as isize - 1 - reach;
    let positions = if hi >= lo { (hi - lo + 1) as usize } else { 0 };
    let windows = positions * acs.nx;
    if positions == 0 || windows < MIN_WINDOWS {
        return Err(Error::InsufficientCalibration(format!(
            "{} ACS rows give {windows} windows for R = {accel} with {} source lines (need {MIN_WINDOWS})",
            acs.ny, geometry.n_src_lines
        )));
    }

    let nf = geometry.n_features(acs.nc);
    let mut sources = DMatrix::zeros(windows, nf);
    let mut targets = vec![DMatrix::zeros(windows, acs.nc); accel - 1];
    let mut feat = vec![Complex64::new(0.0, 0.0); nf];
    let row_of = |y: isize| Some(y as usize);
    let mut w = 0;
    for y0 in lo..=hi {
        for x in 0..acs.nx {
            gather_features(acs, row_of, y0, x, &lines, &cols, &mut feat);
            for (f, v) in feat.iter().enumerate() {
                sources[(w, f)] = *v;
            }
            for (ri, t) in targets.iter_mut().enumerate() {
                let y = (y0 + ri as isize + 1) as usize;
                for c in 0..acs.nc {
                    t[(w, c)] = acs.at(c, y, x);
                }
            }
            w += 1;
        }
    }
    Ok(CalibrationSystem { sources, targets })
}

/// Ridge solution of `sources * W = targets`, regularized by
/// `lambda * mean(diag(sources^H sources))`. Returns the weights and the
/// absolute regularization used.
pub fn solve_ridge(
    sources: &DMatrix<Complex64>,
    targets: &[DMatrix<Complex64>],
    lambda: f64,
) -> Result<(Vec<DMatrix<Complex64>>, f64)> {
    let normal = sources.adjoint() * sources;
    let n = normal.nrows();
    let mean_diag = (0..n).map(|i| normal[(i, i)].re).sum::<f64>() / n.max(1) as f64;
    let reg = lambda * mean_diag;
    let mut system = normal;
    for i in 0..n {
        system[(i, i)] += Complex64::new(reg, 0.0);
    }
    let chol = Cholesky::new(system);
    let singular = |offset| Error::SingularCalibration { offset };
    let chol = match chol {
        Some(c) => c,
        None => return Err(singular(1)),
    };
    let pivots: Vec<f64> = chol.l_dirty().diagonal().iter().map(|v| v.re * v.re).collect();
    let max_p = pivots.iter().cloned().fold(0.0, f64::max);
    let min_p = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_p <= 0.0 || min_p <= 1e-13 * max_p {
        return Err(singular(1));
    }
    let weights = targets.iter().map(|t| chol.solve(&(sources.adjoint() * t))).collect::<Vec<_>>();
    for (i, w) in weights.iter().enumerate() {
        if w.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(singular(i + 1));
        }
    }
    Ok((weights, reg))
}

/// Fit the interpolation kernel on a fully sampled ACS block.
pub fn calibrate(
    acs: &CoilKSpace,
    accel: usize,
    geometry: KernelGeometry,
    lambda: f64,
) -> Result<GrappaKernel> {
    let system = calibration_system(acs, accel, geometry)?;
    let (weights, reg) = solve_ridge(&system.sources, &system.targets, lambda)?;
    Ok(GrappaKernel { accel, nc: acs.nc, geometry, lambda: reg, weights })
}

/// Complete the undersampled k-space. Acquired rows are copied unchanged.
pub fn fill_kspace(
    ksp_under: &CoilKSpace,
    mask: &SamplingMask,
    kernel: &GrappaKernel,
) -> Result<CoilKSpace> {
    if kernel.accel != mask.accel || kernel.nc != ksp_under.nc {
        return Err(Error::KernelMismatch(format!(
            "kernel calibrated for R = {}, {} coils; data has R = {}, {} coils",
            kernel.accel, kernel.nc, mask.accel, ksp_under.nc
        )));
    }
    if mask.n_pe() != ksp_under.ny {
        return Err(Error::shape(format!(
            "mask covers {} lines but k-space has {} rows",
            mask.n_pe(),
            ksp_under.ny
        )));
    }
    let lines = kernel.geometry.line_offsets(kernel.accel);
    let cols = kernel.geometry.column_offsets();
    let nf = kernel.geometry.n_features(ksp_under.nc);
    let ny = ksp_under.ny as isize;
    let row_of = |y: isize| {
        let y = y.rem_euclid(ny) as usize;
        mask.keep[y].then_some(y)
    };
    let mut out = ksp_under.clone();
    let mut feat = vec![Complex64::new(0.0, 0.0); nf];
    for y in (0..ksp_under.ny).filter(|&y| !mask.keep[y]) {
        let r = y % kernel.accel;
        let y0 = (y - r) as isize;
        let w = kernel.offset(r);
        for x in 0..ksp_under.nx {
            gather_features(ksp_under, row_of, y0, x, &lines, &cols, &mut feat);
            for c in 0..ksp_under.nc {
                let mut acc = Complex64::new(0.0, 0.0);
                for (f, v) in feat.iter().enumerate() {
                    acc += v * w[(f, c)];
                }
                out.data[(c * ksp_under.ny + y) * ksp_under.nx + x] = acc;
            }
        }
    }
    Ok(out)
}

/// Fill the missing lines, then combine coils by root-sum-of-squares.
pub fn reconstruct(
    ksp_under: &CoilKSpace,
    mask: &SamplingMask,
    kernel: &GrappaKernel,
) -> Result<RealImage> {
    rss_combine(&fill_kspace(ksp_under, mask, kernel)?)
}

/// Calibrate on the mask's ACS block and reconstruct in one call.
pub fn grappa_recon(
    ksp_under: &CoilKSpace,
    mask: &SamplingMask,
    settings: &GrappaSettings,
) -> Result<RealImage> {
    if mask.n_pe() != ksp_under.ny {
        return Err(Error::shape(format!(
            "mask covers {} lines but k-space has {} rows",
            mask.n_pe(),
            ksp_under.ny
        )));
    }
    let acs = ksp_under.rows(mask.acs_rows());
    let kernel = calibrate(&acs, mask.accel, settings.geometry, settings.lambda)?;
    reconstruct(ksp_under, mask, &kernel)
}
