//! Network checkpoints stored in the tensor container.

use std::path::Path;

use super::container::{Container, TensorData};
use crate::error::{Error, Result};
use crate::nn::{ActivationKind, Model, NetConfig, Param, RdUnet, SkipKind, Visit};
use crate::real::Real;

/// A trained network plus the seed that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
}

fn put_config(c: &mut Container, cfg: &NetConfig, seed: u64) -> Result<()> {
    let (act, n) = match cfg.activation {
        ActivationKind::Relu => (0.0, 0.0),
        ActivationKind::Polu { n } => (1.0, n),
    };
    let skip = match cfg.skip {
        SkipKind::Rdb => 0.0,
        SkipKind::Plain => 1.0,
    };
    c.insert_scalar("netconfig.depth", cfg.depth as f64)?;
    c.insert_scalar("netconfig.base_channels", cfg.base_channels as f64)?;
    c.insert_scalar("netconfig.activation", act)?;
    c.insert_scalar("netconfig.polu_n", n)?;
    c.insert_scalar("netconfig.skip", skip)?;
    // split so every u64 survives the trip through f64
    c.insert("train.seed", &[2], TensorData::F64(vec![(seed >> 32) as f64, (seed & 0xffff_ffff) as f64]))
}

fn get_config(c: &Container) -> Result<(NetConfig, u64)> {
    let count = |name: &str| -> Result<usize> {
        let v = c.scalar(name)?;
        if v.fract() != 0.0 || v < 0.0 {
            return Err(Error::format(format!("{name} must be a non-negative integer")));
        }
        Ok(v as usize)
    };
    let activation = match count("netconfig.activation")? {
        0 => ActivationKind::Relu,
        1 => ActivationKind::Polu { n: c.scalar("netconfig.polu_n")? },
        other => return Err(Error::format(format!("unknown activation code {other}"))),
    };
    let skip = match count("netconfig.skip")? {
        0 => SkipKind::Rdb,
        1 => SkipKind::Plain,
        other => return Err(Error::format(format!("unknown skip code {other}"))),
    };
    let cfg = NetConfig {
        depth: count("netconfig.depth")?,
        base_channels: count("netconfig.base_channels")?,
        activation,
        skip,
    };
    let seed = match c.get("train.seed").and_then(|e| e.data.to_f64()).as_deref() {
        Some(&[hi, lo]) => ((hi as u64) << 32) | lo as u64,
        _ => return Err(Error::format("train.seed must hold two 32-bit halves")),
    };
    Ok((cfg, seed))
}

fn wrap<T: Real>(v: &[T]) -> TensorData {
    if T::BITS == 32 {
        TensorData::F32(v.iter().map(|x| x.as_f64() as f32).collect())
    } else {
        TensorData::F64(v.iter().map(|x| x.as_f64()).collect())
    }
}

fn put_net<T: Real>(c: &mut Container, net: &RdUnet<T>) -> Result<()> {
    let mut result = Ok(());
    net.visit("", &mut |name, p: &Param<T>| {
        if result.is_ok() {
            result = c.insert(name, &p.shape, wrap(&p.value));
        }
    });
    result
}

fn get_net<T: Real>(c: &Container, cfg: NetConfig) -> Result<RdUnet<T>> {
    let mut net = RdUnet::<T>::new(cfg, 0)?;
    let mut result = Ok(());
    let mut used = 0usize;
    net.visit_mut("", &mut |name, p| {
        if result.is_err() {
            return;
        }
        let Some(e) = c.get(name) else {
            result = Err(Error::format(format!("checkpoint lacks {name:?}")));
            return;
        };
        if e.dims != p.shape {
            result = Err(Error::format(format!("{name:?} has dims {:?}, expected {:?}", e.dims, p.shape)));
            return;
        }
        let ok_dtype = matches!((&e.data, T::BITS), (TensorData::F32(_), 32) | (TensorData::F64(_), 64));
        match e.data.to_f64() {
            Some(v) if ok_dtype => p.value = v.into_iter().map(T::real).collect(),
            _ => result = Err(Error::format(format!("{name:?} has the wrong dtype"))),
        }
        used += 1;
    });
    result?;
    let extra = c.entries().iter().filter(|e| !e.name.starts_with("netconfig.") && e.name != "train.seed").count();
    if extra != used {
        return Err(Error::format("checkpoint has entries the network does not use"));
    }
    Ok(net)
}

impl Checkpoint {
    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        match &self.model {
            Model::F32(n) => put_net(&mut c, n)?,
            Model::F64(n) => put_net(&mut c, n)?,
        }
        put_config(&mut c, self.model.config(), self.seed)?;
        Ok(c)
    }

    /// Precision is taken from the stored weights.
    pub fn from_container(c: &Container) -> Result<Self> {
        let (cfg, seed) = get_config(c)?;
        let bits = c.entries().first().map(|e| e.data.code());
        let model = match bits {
            Some(1) => Model::F32(get_net(c, cfg)?),
            Some(2) => Model::F64(get_net(c, cfg)?),
            _ => return Err(Error::format("checkpoint does not start with a real weight entry")),
        };
        Ok(Checkpoint { model, seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?).map_err(|e| match e {
            Error::Format { path: None, reason } => Error::Format { path: Some(path.to_path_buf()), reason },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::RealImage;

    fn params<T: Real>(net: &RdUnet<T>) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        net.visit("", &mut |n, p| out.push((n.to_string(), p.value.iter().map(|v| v.as_f64()).collect())));
        out
    }

    #[test]
    fn round_trip_preserves_every_value() {
        let cfg = NetConfig { depth: 1, base_channels: 4, activation: ActivationKind::Polu { n: 1.5 }, skip: SkipKind::Plain };
        let net = RdUnet::<f32>::new(cfg, 11).unwrap();
        let ck = Checkpoint { model: net.clone().into(), seed: u64::MAX - 3 };
        let back = Checkpoint::from_container(&Container::from_bytes(&ck.to_container().unwrap().to_bytes()).unwrap()).unwrap();
        assert_eq!(back.seed, u64::MAX - 3);
        assert_eq!(back.model.config(), &cfg);
        let Model::F32(b) = &back.model else { panic!("precision changed") };
        assert_eq!(params(b), params(&net));

        let img = RealImage::from_fn(8, 8, |r, c| (r as f64 - c as f64) * 0.1);
        assert_eq!(back.model.infer_image(&img).unwrap(), ck.model.infer_image(&img).unwrap());
    }

    #[test]
    fn f64_and_corruption() {
        let cfg = NetConfig { depth: 1, base_channels: 2, ..Default::default() };
        let ck = Checkpoint { model: RdUnet::<f64>::new(cfg, 1).unwrap().into(), seed: 9 };
        let c = ck.to_container().unwrap();
        assert!(matches!(Checkpoint::from_container(&c).unwrap().model, Model::F64(_)));

        let mut missing = Container::new();
        for e in c.entries().iter().skip(1) {
            missing.insert(e.name.clone(), &e.dims, e.data.clone()).unwrap();
        }
        assert!(Checkpoint::from_container(&missing).is_err());

        let mut extra = c.clone();
        extra.insert_scalar("stray", 1.0).unwrap();
        assert!(Checkpoint::from_container(&extra).is_err());
    }
}
