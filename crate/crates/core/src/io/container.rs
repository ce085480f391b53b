//! The `KSR1` tensor container.
//!
//! Layout (little-endian): magic `KSR1`, version `u16`, entry count `u32`,
//! then per entry a `u16` name length and UTF-8 name, a dtype code `u8`
//! (1 f32, 2 f64, 3 complex f32, 4 complex f64, 5 bool), `u8` rank, `u64`
//! dims and the row-major payload. Complex values are stored re, im.

use std::path::Path;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};
use crate::fourier::RealImage;
use crate::simulate::{CoilKSpace, SamplingMask};

pub const MAGIC: &[u8; 4] = b"KSR1";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    C64(Vec<Complex32>),
    C128(Vec<Complex64>),
    Bool(Vec<bool>),
}

impl TensorData {
    pub fn code(&self) -> u8 {
        match self {
            TensorData::F32(_) => 1,
            TensorData::F64(_) => 2,
            TensorData::C64(_) => 3,
            TensorData::C128(_) => 4,
            TensorData::Bool(_) => 5,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::C64(v) => v.len(),
            TensorData::C128(v) => v.len(),
            TensorData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Real values widened to f64; `None` for complex or bool data.
    pub fn to_f64(&self) -> Option<Vec<f64>> {
        match self {
            TensorData::F32(v) => Some(v.iter().map(|&x| x as f64).collect()),
            TensorData::F64(v) => Some(v.clone()),
            _ => None,
        }
    }

    /// Complex values widened to f64; `None` for real or bool data.
    pub fn to_c128(&self) -> Option<Vec<Complex64>> {
        match self {
            TensorData::C64(v) => Some(v.iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect()),
            TensorData::C128(v) => Some(v.clone()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: TensorData,
}

/// An ordered set of named arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    entries: Vec<Entry>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    fn require(&self, name: &str) -> Result<&Entry> {
        self.get(name).ok_or_else(|| Error::format(format!("missing entry {name:?}")))
    }

    pub fn insert(&mut self, name: impl Into<String>, dims: &[usize], data: TensorData) -> Result<()> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(Error::format("entry name too long"));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::format(format!("entry {name:?} has too many dimensions")));
        }
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::shape(format!("entry {name:?}: dims {dims:?} do not match {} values", data.len())));
        }
        if self.contains(&name) {
            return Err(Error::format(format!("duplicate entry {name:?}")));
        }
        self.entries.push(Entry { name, dims: dims.to_vec(), data });
        Ok(())
    }

    pub fn insert_scalar(&mut self, name: impl Into<String>, v: f64) -> Result<()> {
        self.insert(name, &[], TensorData::F64(vec![v]))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let e = self.require(name)?;
        match e.data.to_f64().as_deref() {
            Some([v]) => Ok(*v),
            _ => Err(Error::format(format!("entry {name:?} is not a real scalar"))),
        }
    }

    pub fn insert_image(&mut self, name: impl Into<String>, img: &RealImage) -> Result<()> {
        self.insert(name, &[img.ny, img.nx], TensorData::F64(img.data.clone()))
    }

    pub fn image(&self, name: &str) -> Result<RealImage> {
        let e = self.require(name)?;
        match (e.dims.as_slice(), e.data.to_f64()) {
            (&[ny, nx], Some(data)) => RealImage::from_vec(ny, nx, data),
            _ => Err(Error::format(format!("entry {name:?} is not a real 2-D image"))),
        }
    }

    pub fn insert_kspace(&mut self, name: impl Into<String>, ksp: &CoilKSpace) -> Result<()> {
        self.insert(name, &[ksp.nc, ksp.ny, ksp.nx], TensorData::C128(ksp.data.clone()))
    }

    /// Read a `(coils, ny, nx)` complex entry.
    pub fn kspace(&self, name: &str) -> Result<CoilKSpace> {
        let e = self.require(name)?;
        match (e.dims.as_slice(), e.data.to_c128()) {
            (&[nc, ny, nx], Some(data)) => CoilKSpace::from_vec(nc, ny, nx, data),
            _ => Err(Error::format(format!("entry {name:?} is not complex (coils, ny, nx) data"))),
        }
    }

    /// Read a `(slices, coils, ny, nx)` complex volume, one slice at a time.
    pub fn kspace_volume(&self, name: &str) -> Result<Vec<CoilKSpace>> {
        let e = self.require(name)?;
        match (e.dims.as_slice(), e.data.to_c128()) {
            (&[ns, nc, ny, nx], Some(data)) => {
                let per = nc * ny * nx;
                (0..ns).map(|s| CoilKSpace::from_vec(nc, ny, nx, data[s * per..(s + 1) * per].to_vec())).collect()
            }
            (&[_, _, _], Some(_)) => Ok(vec![self.kspace(name)?]),
            _ => Err(Error::format(format!("entry {name:?} is not complex (slices, coils, ny, nx) data"))),
        }
    }

    /// Stores the kept-line flags as `name` and `[accel, n_acs]` as `name.params`.
    pub fn insert_mask(&mut self, name: &str, mask: &SamplingMask) -> Result<()> {
        self.insert(name, &[mask.keep.len()], TensorData::Bool(mask.keep.clone()))?;
        self.insert(
            format!("{name}.params"),
            &[2],
            TensorData::F64(vec![mask.accel as f64, mask.n_acs as f64]),
        )
    }

    pub fn mask(&self, name: &str) -> Result<SamplingMask> {
        let keep = match &self.require(name)?.data {
            TensorData::Bool(k) => k.clone(),
            _ => return Err(Error::format(format!("entry {name:?} is not a bool mask"))),
        };
        let params = self.require(&format!("{name}.params"))?.data.to_f64();
        let Some(&[accel, n_acs]) = params.as_deref() else {
            return Err(Error::format(format!("entry {name:?}.params must hold [accel, n_acs]")));
        };
        let mask = SamplingMask::build(keep.len(), accel as usize, n_acs as usize)?;
        if mask.keep != keep {
            return Err(Error::format(format!("mask {name:?} does not match its parameters")));
        }
        Ok(mask)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.data.code());
            out.push(e.dims.len() as u8);
            for &d in &e.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &e.data {
                TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::C64(v) => v.iter().for_each(|z| {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }),
                TensorData::C128(v) => v.iter().for_each(|z| {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }),
                TensorData::Bool(v) => out.extend(v.iter().map(|&b| b as u8)),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("not a KSR1 container"));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::format(format!("unsupported container version {version}")));
        }
        let count = u32::from_le_bytes(r.array()?);
        let mut c = Container::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(r.array()?) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format("entry name is not UTF-8"))?
                .to_string();
            let [code, ndim] = r.array()?;
            let mut dims = Vec::with_capacity(ndim as usize);
            for _ in 0..ndim {
                let d = u64::from_le_bytes(r.array()?);
                dims.push(usize::try_from(d).map_err(|_| Error::format("dimension overflows usize"))?);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::format("entry size overflows"))?;
            let width = match code {
                1 => 4,
                2 | 3 => 8,
                4 => 16,
                5 => 1,
                other => return Err(Error::format(format!("unknown dtype code {other} for {name:?}"))),
            };
            let raw = r.take(n.checked_mul(width).ok_or_else(|| Error::format("entry size overflows"))?)?;
            let data = match code {
                1 => TensorData::F32(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect()),
                2 => TensorData::F64(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()),
                3 => TensorData::C64(
                    raw.chunks_exact(8)
                        .map(|b| {
                            Complex32::new(
                                f32::from_le_bytes(b[..4].try_into().unwrap()),
                                f32::from_le_bytes(b[4..].try_into().unwrap()),
                            )
                        })
                        .collect(),
                ),
                4 => TensorData::C128(
                    raw.chunks_exact(16)
                        .map(|b| {
                            Complex64::new(
                                f64::from_le_bytes(b[..8].try_into().unwrap()),
                                f64::from_le_bytes(b[8..].try_into().unwrap()),
                            )
                        })
                        .collect(),
                ),
                _ => TensorData::Bool(
                    raw.iter()
                        .map(|&b| match b {
                            0 => Ok(false),
                            1 => Ok(true),
                            _ => Err(Error::format(format!("bad bool byte in {name:?}"))),
                        })
                        .collect::<Result<_>>()?,
                ),
            };
            c.insert(name, &dims, data)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::format("trailing bytes after last entry"));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { path: None, reason } => Error::Format { path: Some(path.to_path_buf()), reason },
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("unexpected end of container"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut c = Container::new();
        c.insert("ab", &[2], TensorData::F32(vec![1.0, -2.0])).unwrap();
        let b = c.to_bytes();
        let mut expect = b"KSR1".to_vec();
        expect.extend([1, 0, 1, 0, 0, 0, 2, 0, b'a', b'b', 1, 1]);
        expect.extend(2u64.to_le_bytes());
        expect.extend(1.0f32.to_le_bytes());
        expect.extend((-2.0f32).to_le_bytes());
        assert_eq!(b, expect);
    }

    #[test]
    fn every_dtype_round_trips() {
        let mut c = Container::new();
        c.insert("f32", &[2, 1], TensorData::F32(vec![0.5, f32::MIN_POSITIVE])).unwrap();
        c.insert("f64", &[3], TensorData::F64(vec![1e-300, -0.0, 7.25])).unwrap();
        c.insert("c64", &[1], TensorData::C64(vec![Complex32::new(1.5, -2.5)])).unwrap();
        c.insert("c128", &[1, 1, 1], TensorData::C128(vec![Complex64::new(3.0, 4.0)])).unwrap();
        c.insert("mask", &[4], TensorData::Bool(vec![true, false, false, true])).unwrap();
        c.insert_scalar("s", 2.5).unwrap();
        c.insert("empty", &[0, 3], TensorData::F64(vec![])).unwrap();
        let back = Container::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.scalar("s").unwrap(), 2.5);
    }

    #[test]
    fn rejects_malformed_input() {
        let mut c = Container::new();
        c.insert("x", &[2], TensorData::F64(vec![1.0, 2.0])).unwrap();
        assert!(c.insert("x", &[1], TensorData::F64(vec![0.0])).is_err());
        assert!(c.insert("y", &[3], TensorData::F64(vec![0.0])).is_err());
        let good = c.to_bytes();
        assert!(Container::from_bytes(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(Container::from_bytes(&extra).is_err());
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(Container::from_bytes(&magic).is_err());
        let mut dtype = good;
        dtype[4 + 2 + 4 + 2 + 1] = 9;
        assert!(Container::from_bytes(&dtype).is_err());
    }

    #[test]
    fn typed_helpers() {
        let mut c = Container::new();
        let img = RealImage::from_fn(2, 3, |r, col| (r * 3 + col) as f64);
        c.insert_image("img", &img).unwrap();
        let mask = SamplingMask::build(16, 4, 4).unwrap();
        c.insert_mask("mask", &mask).unwrap();
        let ksp = CoilKSpace::from_vec(2, 1, 2, (0..4).map(|i| Complex64::new(i as f64, 1.0)).collect()).unwrap();
        c.insert_kspace("k", &ksp).unwrap();
        let c = Container::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(c.image("img").unwrap(), img);
        assert_eq!(c.mask("mask").unwrap(), mask);
        assert_eq!(c.kspace("k").unwrap(), ksp);
        assert_eq!(c.kspace_volume("k").unwrap(), vec![ksp]);
        assert!(c.image("k").is_err());
        assert!(c.image("missing").is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_f64_payloads_round_trip(v in proptest::collection::vec(any::<f64>(), 0..64)) {
            let mut c = Container::new();
            c.insert("v", &[v.len()], TensorData::F64(v.clone())).unwrap();
            let back = Container::from_bytes(&c.to_bytes()).unwrap();
            let TensorData::F64(w) = &back.entries()[0].data else { panic!() };
            prop_assert_eq!(w.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }
}
