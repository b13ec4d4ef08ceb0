//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic       b"CGANPLAN"
//! version     u32
//! metadata    u32 byte length + UTF-8 JSON
//! tensors     u32 count + count x tensor
//! optimizers  u8 flag; when 1: u32 count + count x (name, u64 step, u32 count + tensors)
//!
//! tensor      u32 name length + UTF-8 name, u32 rank, rank x u32 dims, f32 data
//! name        u32 byte length + UTF-8
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::layers::Module;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CGANPLAN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub name: String,
    pub step: u64,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub tensors: Vec<NamedTensor>,
    pub optimizers: Option<Vec<OptimizerState>>,
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R, limit: usize) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > limit {
        return Err(Error::Model(format!("string of {len} bytes exceeds limit")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Model(format!("invalid UTF-8: {e}")))
}

fn write_tensors<W: Write>(w: &mut W, tensors: &[NamedTensor]) -> Result<()> {
    w.write_u32::<LittleEndian>(tensors.len() as u32)?;
    for t in tensors {
        write_str(w, &t.name)?;
        let shape = t.tensor.shape();
        w.write_u32::<LittleEndian>(shape.len() as u32)?;
        for &d in shape {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in t.tensor.data() {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

fn read_tensors<R: Read>(r: &mut R) -> Result<Vec<NamedTensor>> {
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name = read_str(r, 1 << 12)?;
        let rank = r.read_u32::<LittleEndian>()? as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::Model(format!("tensor {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u32::<LittleEndian>()? as usize);
        }
        let n: usize = shape.iter().product();
        if n > 1 << 28 {
            return Err(Error::Model(format!("tensor {name} is implausibly large")));
        }
        let mut data = vec![0f32; n];
        r.read_f32_into::<LittleEndian>(&mut data)?;
        out.push(NamedTensor {
            name,
            tensor: Tensor::new(shape, data)?,
        });
    }
    Ok(out)
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        write_str(&mut w, &self.metadata)?;
        write_tensors(&mut w, &self.tensors)?;
        match &self.optimizers {
            None => w.write_u8(0)?,
            Some(opts) => {
                w.write_u8(1)?;
                w.write_u32::<LittleEndian>(opts.len() as u32)?;
                for o in opts {
                    write_str(&mut w, &o.name)?;
                    w.write_u64::<LittleEndian>(o.step)?;
                    write_tensors(&mut w, &o.tensors)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let io_err = |e: Error| match e {
            Error::Io(io) => Error::Model(format!("truncated or unreadable checkpoint: {io}")),
            other => other,
        };
        (|| {
            let mut magic = [0u8; 8];
            r.read_exact(&mut magic)?;
            if &magic != CHECKPOINT_MAGIC {
                return Err(Error::Model("not a checkpoint (bad magic)".into()));
            }
            let version = r.read_u32::<LittleEndian>()?;
            if version != CHECKPOINT_VERSION {
                return Err(Error::Model(format!("unsupported checkpoint version {version}")));
            }
            let metadata = read_str(&mut r, 1 << 20)?;
            let tensors = read_tensors(&mut r)?;
            let optimizers = match r.read_u8()? {
                0 => None,
                1 => {
                    let n = r.read_u32::<LittleEndian>()? as usize;
                    let mut opts = Vec::with_capacity(n.min(16));
                    for _ in 0..n {
                        let name = read_str(&mut r, 1 << 12)?;
                        let step = r.read_u64::<LittleEndian>()?;
                        let tensors = read_tensors(&mut r)?;
                        opts.push(OptimizerState { name, step, tensors });
                    }
                    Some(opts)
                }
                other => return Err(Error::Model(format!("bad optimizer flag {other}"))),
            };
            let mut rest = Vec::new();
            r.read_to_end(&mut rest)?;
            if !rest.is_empty() {
                return Err(Error::Model(format!("{} trailing bytes in checkpoint", rest.len())));
            }
            Ok(Checkpoint {
                metadata,
                tensors,
                optimizers,
            })
        })()
        .map_err(io_err)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn tensor_map(&self) -> BTreeMap<&str, &Tensor<f32>> {
        self.tensors.iter().map(|t| (t.name.as_str(), &t.tensor)).collect()
    }
}

/// Parameters then buffers of `module`, each name prefixed with `prefix.`.
pub fn export_module(prefix: &str, module: &mut dyn Module<f32>) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    module.params(&mut |name, p| {
        out.push(NamedTensor {
            name: format!("{prefix}.{name}"),
            tensor: p.value.clone(),
        })
    });
    module.buffers(&mut |name, b| {
        out.push(NamedTensor {
            name: format!("{prefix}.{name}"),
            tensor: b.clone(),
        })
    });
    out
}

/// Overwrites `module`'s parameters and buffers from `tensors`.
pub fn import_module(
    prefix: &str,
    module: &mut dyn Module<f32>,
    tensors: &BTreeMap<&str, &Tensor<f32>>,
) -> Result<()> {
    let mut failure = None;
    let mut assign = |name: &str, dst: &mut Tensor<f32>| {
        if failure.is_some() {
            return;
        }
        let key = format!("{prefix}.{name}");
        match tensors.get(key.as_str()) {
            Some(src) if src.shape() == dst.shape() => *dst = (*src).clone(),
            Some(src) => {
                failure = Some(Error::Model(format!(
                    "{key}: checkpoint shape {:?} != model shape {:?}",
                    src.shape(),
                    dst.shape()
                )))
            }
            None => failure = Some(Error::Model(format!("checkpoint lacks tensor {key}"))),
        }
    };
    module.params(&mut |name, p| assign(name, &mut p.value));
    module.buffers(&mut |name, b| assign(name, b));
    failure.map_or(Ok(()), Err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            metadata: r#"{"seed":3}"#.into(),
            tensors: vec![
                NamedTensor {
                    name: "G.trunk.0.weight".into(),
                    tensor: Tensor::from_fn(&[3, 2], |i| i as f32 * 0.1 - f32::MIN_POSITIVE),
                },
                NamedTensor {
                    name: "scalar".into(),
                    tensor: Tensor::new(vec![1], vec![f32::NAN]).unwrap(),
                },
            ],
            optimizers: Some(vec![OptimizerState {
                name: "G".into(),
                step: 17,
                tensors: vec![NamedTensor {
                    name: "x.m".into(),
                    tensor: Tensor::from_fn(&[2, 1, 1, 2], |i| -(i as f32)),
                }],
            }]),
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..8], b"CGANPLAN");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.tensors[0], ck.tensors[0]);
        assert!(back.tensors[1].tensor.data()[0].is_nan());
    }

    #[test]
    fn without_optimizer_section() {
        let mut ck = sample();
        ck.optimizers = None;
        let bytes = ck.to_bytes();
        assert_eq!(*bytes.last().unwrap(), 0);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn corrupt_inputs_are_model_errors() {
        let bytes = sample().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Model(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Model(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::Model(_))));
    }
}
