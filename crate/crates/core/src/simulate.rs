//! Synthetic acquisition: phantoms, coil sensitivities, retrospective
//! Cartesian undersampling and zero-filled reconstruction.

use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fourier::{fft2c, ifft2c, ComplexImage, RealImage};

/// Which phase-encode lines (rows of k-space) are acquired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    pub keep: Vec<bool>,
    pub accel: usize,
    pub n_acs: usize,
}

impl SamplingMask {
    /// Uniform lines `i % accel == 0` plus a centered block of `n_acs` lines.
    pub fn build(n_pe: usize, accel: usize, n_acs: usize) -> Result<Self> {
        if n_pe == 0 || accel == 0 || accel > n_pe {
            return Err(Error::InvalidMaskSpec(format!(
                "acceleration {accel} must lie in 1..={n_pe}"
            )));
        }
        if n_acs > n_pe {
            return Err(Error::InvalidMaskSpec(format!(
                "{n_acs} ACS lines exceed {n_pe} phase-encode lines"
            )));
        }
        let acs = acs_range(n_pe, n_acs);
        let keep = (0..n_pe).map(|i| i % accel == 0 || acs.contains(&i)).collect();
        Ok(SamplingMask { keep, accel, n_acs })
    }

    pub fn n_pe(&self) -> usize {
        self.keep.len()
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Rows of the centered calibration block.
    pub fn acs_rows(&self) -> Range<usize> {
        acs_range(self.keep.len(), self.n_acs)
    }

    pub fn kept_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i)
    }
}

fn acs_range(n_pe: usize, n_acs: usize) -> Range<usize> {
    let start = (n_pe / 2).saturating_sub(n_acs / 2);
    start..start + n_acs
}

/// Shorthand for [`SamplingMask::build`].
pub fn build_mask(n_pe: usize, accel: usize, n_acs: usize) -> Result<SamplingMask> {
    SamplingMask::build(n_pe, accel, n_acs)
}

/// Complex per-coil weighting `(nc, ny, nx)`, coil-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMaps {
    pub nc: usize,
    pub ny: usize,
    pub nx: usize,
    pub maps: Vec<Complex64>,
}

impl SensitivityMaps {
    pub fn coil(&self, c: usize) -> &[Complex64] {
        let n = self.ny * self.nx;
        &self.maps[c * n..(c + 1) * n]
    }
}

/// Multi-coil k-space `(nc, ny, nx)`, coil-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilKSpace {
    pub nc: usize,
    pub ny: usize,
    pub nx: usize,
    pub data: Vec<Complex64>,
}

impl CoilKSpace {
    pub fn zeros(nc: usize, ny: usize, nx: usize) -> Self {
        CoilKSpace { nc, ny, nx, data: vec![Complex64::new(0.0, 0.0); nc * ny * nx] }
    }

    pub fn from_vec(nc: usize, ny: usize, nx: usize, data: Vec<Complex64>) -> Result<Self> {
        if nc == 0 || ny == 0 || nx == 0 || data.len() != nc * ny * nx {
            return Err(Error::shape(format!(
                "coil k-space ({nc}, {ny}, {nx}) needs {} samples, got {}",
                nc * ny * nx,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFiniteInput("CoilKSpace"));
        }
        Ok(CoilKSpace { nc, ny, nx, data })
    }

    pub fn coil(&self, c: usize) -> &[Complex64] {
        let n = self.ny * self.nx;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn coil_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.ny * self.nx;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> Complex64 {
        self.data[(c * self.ny + y) * self.nx + x]
    }

    pub fn coil_image(&self, c: usize) -> ComplexImage<f64> {
        ComplexImage { ny: self.ny, nx: self.nx, data: self.coil(c).to_vec() }
    }

    /// Copy of rows `rows` of every coil.
    pub fn rows(&self, rows: Range<usize>) -> CoilKSpace {
        let ny = rows.len();
        let mut data = Vec::with_capacity(self.nc * ny * self.nx);
        for c in 0..self.nc {
            for y in rows.clone() {
                let off = (c * self.ny + y) * self.nx;
                data.extend_from_slice(&self.data[off..off + self.nx]);
            }
        }
        CoilKSpace { nc: self.nc, ny, nx: self.nx, data }
    }
}

/// Ellipse `(intensity, semi-axis x, semi-axis y, center x, center y, angle in degrees)`
/// on the `[-1, 1]^2` canvas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

impl Ellipse {
    const fn new(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Self {
        Ellipse { intensity, a, b, x0, y0, phi_deg }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// The ten-ellipse Shepp-Logan head with the high-contrast intensities.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse::new(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse::new(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    Ellipse::new(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    Ellipse::new(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    Ellipse::new(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    Ellipse::new(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    Ellipse::new(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

const MIN_PHANTOM: usize = 8;

/// Canvas coordinate of pixel `(row, col)`; the center column sits at x = 0.
pub fn pixel_coords(row: usize, col: usize, ny: usize, nx: usize) -> (f64, f64) {
    let x = (col as f64 - (nx / 2) as f64) * 2.0 / nx as f64;
    let y = ((ny / 2) as f64 - row as f64) * 2.0 / ny as f64;
    (x, y)
}

/// Rasterize a list of ellipses, clamping the result into `[0, 1]`.
pub fn render_ellipses(ellipses: &[Ellipse], ny: usize, nx: usize) -> Result<RealImage> {
    if ny < MIN_PHANTOM || nx < MIN_PHANTOM {
        return Err(Error::TooSmall { ny, nx, min: MIN_PHANTOM });
    }
    Ok(RealImage::from_fn(ny, nx, |row, col| {
        let (x, y) = pixel_coords(row, col, ny, nx);
        let v: f64 = ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
        v.clamp(0.0, 1.0)
    }))
}

pub fn shepp_logan(ny: usize, nx: usize) -> Result<RealImage> {
    render_ellipses(&SHEPP_LOGAN, ny, nx)
}

/// Ellipse set for a randomly perturbed head: jittered geometry and
/// contrast of the inner structures plus up to three small lesions.
pub fn random_ellipses<R: Rng + ?Sized>(rng: &mut R) -> Vec<Ellipse> {
    let mut out: Vec<Ellipse> = Vec::with_capacity(13);
    let skull_scale = rng.random_range(0.9..1.03);
    for (i, e) in SHEPP_LOGAN.iter().enumerate() {
        let mut e = *e;
        if i < 2 {
            e.a *= skull_scale;
            e.b *= skull_scale;
        } else {
            e.a *= rng.random_range(0.8..1.2);
            e.b *= rng.random_range(0.8..1.2);
            e.x0 += rng.random_range(-0.04..0.04);
            e.y0 += rng.random_range(-0.04..0.04);
            e.phi_deg += rng.random_range(-10.0..10.0);
            e.intensity *= rng.random_range(0.5..1.5);
        }
        out.push(e);
    }
    let lesions = rng.random_range(0..=3);
    for _ in 0..lesions {
        let r = rng.random_range(0.0..0.45);
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        out.push(Ellipse::new(
            sign * rng.random_range(0.1..0.3),
            rng.random_range(0.03..0.1),
            rng.random_range(0.03..0.1),
            r * t.cos(),
            r * t.sin() * 1.2,
            rng.random_range(0.0..180.0),
        ));
    }
    out
}

/// A randomly perturbed Shepp-Logan variant.
pub fn random_phantom<R: Rng + ?Sized>(ny: usize, nx: usize, rng: &mut R) -> Result<RealImage> {
    render_ellipses(&random_ellipses(rng), ny, nx)
}

/// Gaussian-magnitude, linear-phase coil maps normalized to unit root-sum-of-squares.
///
/// Coil centers sit at equally spaced angles on a circle of radius
/// `0.5 * min(ny, nx)` around the image center.
pub fn make_sensitivities(nc: usize, ny: usize, nx: usize) -> Result<SensitivityMaps> {
    if nc == 0 || ny == 0 || nx == 0 {
        return Err(Error::shape(format!("sensitivity maps need nc, ny, nx >= 1, got ({nc}, {ny}, {nx})")));
    }
    let n = ny * nx;
    if nc == 1 {
        // a lone coil sees the object uniformly
        return Ok(SensitivityMaps { nc, ny, nx, maps: vec![Complex64::new(1.0, 0.0); n] });
    }
    let min_dim = ny.min(nx) as f64;
    let radius = 0.5 * min_dim;
    let sigma = 0.4 * min_dim;
    let (cy, cx) = ((ny / 2) as f64, (nx / 2) as f64);
    let mut maps = vec![Complex64::new(0.0, 0.0); nc * n];
    for c in 0..nc {
        let theta = std::f64::consts::TAU * c as f64 / nc as f64;
        let (sy, sx) = theta.sin_cos();
        let (py, px) = (cy + radius * sy, cx + radius * sx);
        for y in 0..ny {
            for x in 0..nx {
                let (dy, dx) = (y as f64 - py, x as f64 - px);
                let mag = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
                let along = ((x as f64 - cx) * sx + (y as f64 - cy) * sy) / min_dim;
                let phase = theta + 0.5 * std::f64::consts::PI * along;
                maps[c * n + y * nx + x] = Complex64::from_polar(mag, phase);
            }
        }
    }
    for p in 0..n {
        let rss = (0..nc).map(|c| maps[c * n + p].norm_sqr()).sum::<f64>().sqrt();
        for c in 0..nc {
            maps[c * n + p] /= rss;
        }
    }
    Ok(SensitivityMaps { nc, ny, nx, maps })
}

/// Weight the image by every coil map and transform to k-space.
pub fn forward_acquire(img: &RealImage, sens: &SensitivityMaps) -> Result<CoilKSpace> {
    if img.ny != sens.ny || img.nx != sens.nx {
        return Err(Error::shape(format!(
            "image {}x{} vs sensitivity maps {}x{}",
            img.ny, img.nx, sens.ny, sens.nx
        )));
    }
    let mut data = Vec::with_capacity(sens.maps.len());
    for c in 0..sens.nc {
        let weighted = ComplexImage {
            ny: img.ny,
            nx: img.nx,
            data: img.data.iter().zip(sens.coil(c)).map(|(&v, s)| s * v).collect(),
        };
        data.extend(fft2c(&weighted)?.data);
    }
    Ok(CoilKSpace { nc: sens.nc, ny: img.ny, nx: img.nx, data })
}

/// Zero every phase-encode row the mask does not keep.
pub fn apply_mask(ksp: &CoilKSpace, mask: &SamplingMask) -> Result<CoilKSpace> {
    if mask.n_pe() != ksp.ny {
        return Err(Error::shape(format!(
            "mask covers {} lines but k-space has {} rows",
            mask.n_pe(),
            ksp.ny
        )));
    }
    let mut out = ksp.clone();
    for c in 0..ksp.nc {
        let coil = out.coil_mut(c);
        for (y, &keep) in mask.keep.iter().enumerate() {
            if !keep {
                coil[y * ksp.nx..(y + 1) * ksp.nx].fill(Complex64::new(0.0, 0.0));
            }
        }
    }
    Ok(out)
}

/// Root-sum-of-squares combination of the per-coil inverse transforms.
pub fn rss_combine(ksp: &CoilKSpace) -> Result<RealImage> {
    let n = ksp.ny * ksp.nx;
    let mut acc = vec![0.0; n];
    for c in 0..ksp.nc {
        let img = ifft2c(&ksp.coil_image(c))?;
        for (a, v) in acc.iter_mut().zip(&img.data) {
            *a += v.norm_sqr();
        }
    }
    Ok(RealImage { ny: ksp.ny, nx: ksp.nx, data: acc.into_iter().map(f64::sqrt).collect() })
}

/// Inverse transform of (possibly undersampled) coil k-space with missing
/// samples left at zero, combined by root-sum-of-squares.
pub fn zero_filled_recon(ksp: &CoilKSpace) -> Result<RealImage> {
    rss_combine(ksp)
}
