//! The `CSI4CKPT` container: one network's spec and parameters.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic       8 bytes  "CSI4CKPT"
//! version     u16      1
//! kind        u8       1 generator, 2 critic, 3 discriminator, 4 classifier
//! spec        kind-specific u32/f32/u8 fields
//! range       f32 ×2   data normalization min, max (NaN when absent)
//! init_seed   u64
//! count       u32      number of tensors
//! per tensor: name_len u16, name bytes, rank u8, dims u32 × rank, f32 × prod(dims)
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{ClassifierSpec, CriticSpec, DiscriminatorSpec, GeneratorSpec, HiddenActivation, ModelSpec};
use crate::data::NormParams;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::tensor::Tensor;

pub const CKPT_MAGIC: &[u8; 8] = b"CSI4CKPT";
pub const CKPT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ModelParams,
    /// Normalization range of the training data, so generated samples can be
    /// mapped back to amplitudes without the original dataset.
    pub data_range: Option<NormParams>,
}

impl Checkpoint {
    /// Pairs `params` with `spec` after checking names and shapes agree.
    pub fn new(spec: ModelSpec, params: ModelParams, data_range: Option<NormParams>) -> Result<Self> {
        check_layout(&spec, &params)?;
        Ok(Checkpoint { spec, params, data_range })
    }
}

fn check_layout(spec: &ModelSpec, params: &ModelParams) -> Result<()> {
    let expected = spec.layout(0)?;
    if expected.len() != params.len() {
        return Err(Error::format(format!(
            "{} expects {} tensors, checkpoint holds {}",
            spec.kind(),
            expected.len(),
            params.len()
        )));
    }
    for ((name, shape), (got_name, t)) in expected.iter().zip(params.iter()) {
        if name != got_name || shape.as_slice() != t.shape() {
            return Err(Error::format(format!(
                "tensor {got_name} {:?} does not match {} layout entry {name} {shape:?}",
                t.shape(),
                spec.kind()
            )));
        }
    }
    Ok(())
}

struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::format(format!("{v} does not fit a u32 field")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_spec(o: &mut Out, spec: &ModelSpec) -> Result<()> {
    match spec {
        ModelSpec::Generator(s) => {
            o.u8(1);
            for v in [s.latent_dim, s.num_classes, s.embed_dim] {
                o.u32(v)?;
            }
            for &h in &s.hidden {
                o.u32(h)?;
            }
            o.u32(s.antennas)?;
            o.u32(s.time)?;
            match s.activation {
                HiddenActivation::LeakyRelu(slope) => {
                    o.u8(0);
                    o.f32(slope);
                }
                HiddenActivation::Relu => {
                    o.u8(1);
                    o.f32(0.0);
                }
            }
            o.u8(s.batch_norm as u8);
        }
        ModelSpec::Critic(s) => {
            o.u8(2);
            for v in [s.in_features, s.num_classes, s.embed_dim, s.hidden[0], s.hidden[1]] {
                o.u32(v)?;
            }
            o.f32(s.dropout_rate);
            o.f32(s.slope);
        }
        ModelSpec::Discriminator(s) => {
            o.u8(3);
            for v in [s.in_features, s.num_classes, s.embed_dim] {
                o.u32(v)?;
            }
            for &h in &s.hidden {
                o.u32(h)?;
            }
            o.f32(s.slope);
        }
        ModelSpec::Classifier(s) => {
            o.u8(4);
            for v in [s.antennas, s.time] {
                o.u32(v)?;
            }
            for &c in &s.conv_channels {
                o.u32(c)?;
            }
            for v in [s.num_classes, s.kernel, s.padding, s.pool] {
                o.u32(v)?;
            }
        }
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut w: W) -> Result<()> {
    let mut o = Out(Vec::new());
    o.0.extend_from_slice(CKPT_MAGIC);
    o.u16(CKPT_VERSION);
    write_spec(&mut o, &ckpt.spec)?;
    let (lo, hi) = ckpt.data_range.map_or((f32::NAN, f32::NAN), |r| (r.min, r.max));
    o.f32(lo);
    o.f32(hi);
    o.0.extend_from_slice(&ckpt.params.init_seed.to_le_bytes());
    o.u32(ckpt.params.len())?;
    for (name, t) in ckpt.params.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::format("parameter name too long"))?;
        o.u16(len);
        o.0.extend_from_slice(name.as_bytes());
        o.u8(u8::try_from(t.rank()).map_err(|_| Error::format("tensor rank too large"))?);
        for &d in t.shape() {
            o.u32(d)?;
        }
        for v in t.data() {
            o.f32(*v);
        }
    }
    w.write_all(&o.0)?;
    Ok(())
}

struct In<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.bytes.len() - self.pos {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!("truncated CSI4CKPT at offset {}", self.pos),
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::format(format!("bad flag byte {v}"))),
        }
    }
}

fn read_spec(c: &mut In) -> Result<ModelSpec> {
    Ok(match c.u8()? {
        1 => {
            let (latent_dim, num_classes, embed_dim) = (c.u32()?, c.u32()?, c.u32()?);
            let hidden = [c.u32()?, c.u32()?, c.u32()?, c.u32()?];
            let (antennas, time) = (c.u32()?, c.u32()?);
            let relu = c.flag()?;
            let slope = c.f32()?;
            let activation = if relu { HiddenActivation::Relu } else { HiddenActivation::LeakyRelu(slope) };
            ModelSpec::Generator(GeneratorSpec {
                latent_dim,
                num_classes,
                embed_dim,
                hidden,
                antennas,
                time,
                activation,
                batch_norm: c.flag()?,
            })
        }
        2 => ModelSpec::Critic(CriticSpec {
            in_features: c.u32()?,
            num_classes: c.u32()?,
            embed_dim: c.u32()?,
            hidden: [c.u32()?, c.u32()?],
            dropout_rate: c.f32()?,
            slope: c.f32()?,
        }),
        3 => ModelSpec::Discriminator(DiscriminatorSpec {
            in_features: c.u32()?,
            num_classes: c.u32()?,
            embed_dim: c.u32()?,
            hidden: [c.u32()?, c.u32()?, c.u32()?, c.u32()?],
            slope: c.f32()?,
        }),
        4 => ModelSpec::Classifier(ClassifierSpec {
            antennas: c.u32()?,
            time: c.u32()?,
            conv_channels: [c.u32()?, c.u32()?, c.u32()?],
            num_classes: c.u32()?,
            kernel: c.u32()?,
            padding: c.u32()?,
            pool: c.u32()?,
        }),
        other => return Err(Error::format(format!("unknown model kind {other}"))),
    })
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = In { bytes: &bytes, pos: 0 };
    let magic = c.take(8).map_err(|_| Error::format("file too short for CSI4CKPT header"))?;
    if magic != CKPT_MAGIC {
        return Err(Error::format(format!(
            "bad magic {:?}, expected CSI4CKPT",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = c.u16()?;
    if version != CKPT_VERSION {
        return Err(Error::format(format!("unsupported CSI4CKPT version {version}")));
    }
    let spec = read_spec(&mut c)?;
    let (lo, hi) = (c.f32()?, c.f32()?);
    let data_range = (!lo.is_nan() && !hi.is_nan()).then_some(NormParams { min: lo, max: hi });
    let init_seed = c.u64()?;
    let count = c.u32()?;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::format("parameter name is not UTF-8"))?
            .to_string();
        let rank = c.u8()? as usize;
        let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::format(format!("tensor {name} is absurdly large")))?;
        let raw = c.take(n.checked_mul(4).ok_or_else(|| Error::format("tensor too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        entries.push((name, Tensor::new(&shape, data)?));
    }
    if c.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after CSI4CKPT payload",
            bytes.len() - c.pos
        )));
    }
    let params = ModelParams::new(entries, init_seed).map_err(|e| Error::format(e.to_string()))?;
    Checkpoint::new(spec, params, data_range)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(ckpt, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(io::BufReader::new(fs::File::open(path)?))
}
