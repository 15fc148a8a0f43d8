//! The `CSI4DATA` container.
//!
//! All integers and floats little-endian:
//!
//! ```text
//! magic       8 bytes  "CSI4DATA"
//! version     u16      1
//! m           u32      samples
//! antennas    u16
//! time        u16
//! K           u16      classes
//! user_id     i16      -1 = none
//! normalized  u8       0 / 1
//! min, max    f32 ×2   normalization range (0 when not normalized)
//! amplitudes  f32 × m·antennas·time, sample-major
//! labels      u16 × m
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{CsiBatch, NormParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATA_MAGIC: &[u8; 8] = b"CSI4DATA";
pub const DATA_VERSION: u16 = 1;

fn narrow<T: TryFrom<usize>>(v: usize, what: &str) -> Result<T> {
    T::try_from(v).map_err(|_| Error::format(format!("{what} {v} does not fit the container field")))
}

pub fn write_csi<W: Write>(batch: &CsiBatch, mut w: W) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + batch.amplitudes().len() * 4 + batch.len() * 2);
    buf.extend_from_slice(DATA_MAGIC);
    buf.extend_from_slice(&DATA_VERSION.to_le_bytes());
    buf.extend_from_slice(&narrow::<u32>(batch.len(), "sample count")?.to_le_bytes());
    buf.extend_from_slice(&narrow::<u16>(batch.antennas(), "antenna count")?.to_le_bytes());
    buf.extend_from_slice(&narrow::<u16>(batch.time(), "time length")?.to_le_bytes());
    buf.extend_from_slice(&narrow::<u16>(batch.num_classes(), "class count")?.to_le_bytes());
    buf.extend_from_slice(&batch.user_id.unwrap_or(-1).to_le_bytes());
    let (flag, norm) = match batch.norm_params() {
        Some(p) => (1u8, p),
        None => (0u8, NormParams { min: 0.0, max: 0.0 }),
    };
    buf.push(flag);
    buf.extend_from_slice(&norm.min.to_le_bytes());
    buf.extend_from_slice(&norm.max.to_le_bytes());
    for v in batch.amplitudes().data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &l in batch.labels() {
        buf.extend_from_slice(&(l as u16).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!(
                    "truncated CSI4DATA payload: need {} bytes at offset {}, have {}",
                    n,
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn i16(&mut self) -> Result<i16> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn read_csi<R: Read>(mut r: R) -> Result<CsiBatch> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    let magic = c.take(8).map_err(|_| Error::format("file too short for CSI4DATA header"))?;
    if magic != DATA_MAGIC {
        return Err(Error::format(format!(
            "bad magic {:?}, expected CSI4DATA",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = c.u16()?;
    if version != DATA_VERSION {
        return Err(Error::format(format!("unsupported CSI4DATA version {version}")));
    }
    let m = c.u32()? as usize;
    let antennas = c.u16()? as usize;
    let time = c.u16()? as usize;
    let k = c.u16()? as usize;
    let user = c.i16()?;
    let normalized = match c.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(Error::format(format!("bad normalized flag {other}"))),
    };
    let min = c.f32()?;
    let max = c.f32()?;
    let n = m * antennas * time;
    let raw = c.take(n * 4)?;
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let raw = c.take(m * 2)?;
    let labels: Vec<usize> = raw
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes(b.try_into().expect("2 bytes")) as usize)
        .collect();
    if c.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after CSI4DATA payload",
            bytes.len() - c.pos
        )));
    }
    let amplitudes = Tensor::new(&[m, antennas, time], data)?;
    let batch = CsiBatch::new(amplitudes, labels, k)?
        .with_user((user >= 0).then_some(user))
        .with_norm(normalized.then_some(NormParams { min, max }));
    Ok(batch)
}

/// Write `batch` to `path`, replacing any existing file.
pub fn save_csi(batch: &CsiBatch, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csi(batch, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_csi(path: impl AsRef<Path>) -> Result<CsiBatch> {
    let f = fs::File::open(path)?;
    read_csi(io::BufReader::new(f))
}

/// Audit listing `index,label,source,user`, one row per sample.
pub fn write_provenance_csv<W: Write>(batch: &CsiBatch, mut w: W) -> Result<()> {
    writeln!(w, "index,label,source,user")?;
    let user = batch.user_id.map(|u| u.to_string()).unwrap_or_default();
    for (i, (&l, s)) in batch.labels().iter().zip(batch.sources()).enumerate() {
        writeln!(w, "{i},{l},{},{user}", s.as_str())?;
    }
    Ok(())
}
