//! Centered, unitary 2D discrete Fourier transforms.
//!
//! Images are stored row-major with `ny` rows (phase-encode direction) and
//! `nx` columns (frequency-encode direction). The transforms place DC at
//! `(ny / 2, nx / 2)` and scale by `1 / sqrt(ny * nx)` in both directions,
//! so `ifft2c` is the exact adjoint of `fft2c`.

use std::sync::Arc;

use num_complex::Complex;
use num_traits::{Float, Zero};
use rustfft::{Fft, FftDirection, FftNum, FftPlanner};

use crate::error::{Error, Result};

/// Complex 2D array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage<T = f64> {
    pub ny: usize,
    pub nx: usize,
    pub data: Vec<Complex<T>>,
}

/// Real 2D array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    pub ny: usize,
    pub nx: usize,
    pub data: Vec<f64>,
}

impl<T: Clone + num_traits::Num> ComplexImage<T> {
    pub fn zeros(ny: usize, nx: usize) -> Self {
        ComplexImage { ny, nx, data: vec![Complex::zero(); ny * nx] }
    }

    pub fn from_vec(ny: usize, nx: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if ny == 0 || nx == 0 || data.len() != ny * nx {
            return Err(Error::shape(format!(
                "complex image {ny}x{nx} needs {} samples, got {}",
                ny * nx,
                data.len()
            )));
        }
        Ok(ComplexImage { ny, nx, data })
    }

    pub fn row(&self, y: usize) -> &[Complex<T>] {
        &self.data[y * self.nx..(y + 1) * self.nx]
    }
}

impl<T: Float> ComplexImage<T> {
    /// Squared l2 norm.
    pub fn energy(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc + v.norm_sqr())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl ComplexImage<f64> {
    pub fn from_real(img: &RealImage) -> Self {
        ComplexImage {
            ny: img.ny,
            nx: img.nx,
            data: img.data.iter().map(|&v| Complex::new(v, 0.0)).collect(),
        }
    }

    pub fn magnitude(&self) -> RealImage {
        RealImage { ny: self.ny, nx: self.nx, data: self.data.iter().map(|v| v.norm()).collect() }
    }
}

impl RealImage {
    pub fn zeros(ny: usize, nx: usize) -> Self {
        RealImage { ny, nx, data: vec![0.0; ny * nx] }
    }

    pub fn from_vec(ny: usize, nx: usize, data: Vec<f64>) -> Result<Self> {
        if ny == 0 || nx == 0 || data.len() != ny * nx {
            return Err(Error::shape(format!(
                "image {ny}x{nx} needs {} pixels, got {}",
                ny * nx,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("RealImage"));
        }
        Ok(RealImage { ny, nx, data })
    }

    pub fn from_fn(ny: usize, nx: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(ny * nx);
        for y in 0..ny {
            for x in 0..nx {
                data.push(f(y, x));
            }
        }
        RealImage { ny, nx, data }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.nx + x]
    }

    pub fn same_shape(&self, other: &RealImage) -> bool {
        self.ny == other.ny && self.nx == other.nx
    }
}

/// Circularly shift a row-major array by `(sy, sx)`.
fn roll<C: Copy>(data: &[C], ny: usize, nx: usize, sy: usize, sx: usize) -> Vec<C> {
    let mut out = Vec::with_capacity(data.len());
    // out[y][x] = in[(y - sy) mod ny][(x - sx) mod nx]
    for y in 0..ny {
        let src_y = (y + ny - sy % ny) % ny;
        let row = &data[src_y * nx..(src_y + 1) * nx];
        let split = (nx - sx % nx) % nx;
        out.extend_from_slice(&row[split..]);
        out.extend_from_slice(&row[..split]);
    }
    out
}

/// Move the zero-frequency sample from index 0 to the array center.
pub fn fftshift<C: Copy>(data: &[C], ny: usize, nx: usize) -> Vec<C> {
    roll(data, ny, nx, ny / 2, nx / 2)
}

/// Inverse of [`fftshift`]; differs from it for odd sizes.
pub fn ifftshift<C: Copy>(data: &[C], ny: usize, nx: usize) -> Vec<C> {
    roll(data, ny, nx, ny - ny / 2, nx - nx / 2)
}

/// Reusable row/column FFT plans for one image size.
pub struct Fft2Plan<T: FftNum> {
    ny: usize,
    nx: usize,
    rows: Arc<dyn Fft<T>>,
    cols: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: FftNum + Float> Fft2Plan<T> {
    pub fn new(ny: usize, nx: usize, direction: FftDirection) -> Self {
        let mut planner = FftPlanner::new();
        let rows = planner.plan_fft(nx, direction);
        let cols = planner.plan_fft(ny, direction);
        let scale = T::one() / T::from_usize(ny * nx).expect("size fits").sqrt();
        Fft2Plan { ny, nx, rows, cols, scale }
    }

    pub fn forward(ny: usize, nx: usize) -> Self {
        Self::new(ny, nx, FftDirection::Forward)
    }

    pub fn inverse(ny: usize, nx: usize) -> Self {
        Self::new(ny, nx, FftDirection::Inverse)
    }

    /// Centered, unitary transform of a row-major buffer.
    pub fn apply(&self, data: &[Complex<T>]) -> Vec<Complex<T>> {
        let (ny, nx) = (self.ny, self.nx);
        assert_eq!(data.len(), ny * nx, "buffer does not match plan size");
        let mut buf = ifftshift(data, ny, nx);
        self.rows.process(&mut buf);

        let mut transposed = vec![Complex::zero(); ny * nx];
        for y in 0..ny {
            for x in 0..nx {
                transposed[x * ny + y] = buf[y * nx + x];
            }
        }
        self.cols.process(&mut transposed);
        for x in 0..nx {
            for y in 0..ny {
                buf[y * nx + x] = transposed[x * ny + y] * self.scale;
            }
        }
        fftshift(&buf, ny, nx)
    }
}

fn transform<T: FftNum + Float>(
    img: &ComplexImage<T>,
    direction: FftDirection,
    op: &'static str,
) -> Result<ComplexImage<T>> {
    if !img.is_finite() {
        return Err(Error::NonFiniteInput(op));
    }
    let plan = Fft2Plan::new(img.ny, img.nx, direction);
    Ok(ComplexImage { ny: img.ny, nx: img.nx, data: plan.apply(&img.data) })
}

/// Centered unitary forward transform (image to k-space).
pub fn fft2c<T: FftNum + Float>(img: &ComplexImage<T>) -> Result<ComplexImage<T>> {
    transform(img, FftDirection::Forward, "fft2c")
}

/// Centered unitary inverse transform (k-space to image).
pub fn ifft2c<T: FftNum + Float>(ksp: &ComplexImage<T>) -> Result<ComplexImage<T>> {
    transform(ksp, FftDirection::Inverse, "ifft2c")
}
