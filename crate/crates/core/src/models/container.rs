//! Versioned binary tensor container.
//!
//! ```text
//! magic      8 bytes   "DPRIOR01"
//! count      u32 LE    number of tensors
//! table      count x { name_len u16, name utf8, dtype u8 (1 = f64 LE, 2 = utf8 JSON),
//!                      ndim u8, dims ndim x u64, offset u64, byte_len u64 }
//! data       raw tensor bytes, offsets relative to the start of this section
//! crc32      u32 LE    CRC-32 (IEEE) of every preceding byte
//! ```
//! Matrices are stored row-major; a `K x 64 x 64` tensor is `K` row-major
//! 64x64 blocks.

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DPRIOR01";
const MAGIC_FAMILY: &[u8; 6] = b"DPRIOR";

const DTYPE_F64: u8 = 1;
const DTYPE_JSON: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F64(Vec<f64>),
    Json(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f64(name: &str, shape: &[usize], values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { name: name.to_owned(), shape: shape.iter().map(|&d| d as u64).collect(), data: TensorData::F64(values) }
    }

    pub fn json(name: &str, text: String) -> Self {
        Self { name: name.to_owned(), shape: vec![text.len() as u64], data: TensorData::Json(text) }
    }

    fn bytes(&self) -> Vec<u8> {
        match &self.data {
            TensorData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::Json(s) => s.as_bytes().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub tensors: Vec<Tensor>,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl TensorFile {
    pub fn push(&mut self, t: Tensor) {
        self.tensors.push(t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// f64 tensor `name`, checking its shape.
    pub fn f64_tensor(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let t = self.get(name).ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))?;
        let expected: Vec<u64> = shape.iter().map(|&d| d as u64).collect();
        if t.shape != expected {
            return Err(Error::Format(format!("tensor {name:?} has shape {:?}, expected {expected:?}", t.shape)));
        }
        match &t.data {
            TensorData::F64(v) => Ok(v),
            TensorData::Json(_) => Err(Error::Format(format!("tensor {name:?} is not f64"))),
        }
    }

    pub fn shape(&self, name: &str) -> Result<&[u64]> {
        self.get(name).map(|t| t.shape.as_slice()).ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))
    }

    pub fn json_tensor(&self, name: &str) -> Result<&str> {
        match self.get(name).map(|t| &t.data) {
            Some(TensorData::Json(s)) => Ok(s),
            Some(_) => Err(Error::Format(format!("tensor {name:?} is not JSON"))),
            None => Err(Error::Format(format!("missing tensor {name:?}"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payloads: Vec<Vec<u8>> = self.tensors.iter().map(Tensor::bytes).collect();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (t, bytes) in self.tensors.iter().zip(&payloads) {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(match t.data {
                TensorData::F64(_) => DTYPE_F64,
                TensorData::Json(_) => DTYPE_JSON,
            });
            out.push(t.shape.len() as u8);
            for d in &t.shape {
                out.extend_from_slice(&d.to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            offset += bytes.len() as u64;
        }
        for bytes in &payloads {
            out.extend_from_slice(bytes);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < MAGIC.len() {
            return Err(if buf.starts_with(&MAGIC[..buf.len()]) { Error::Truncated } else { Error::Format("bad magic".into()) });
        }
        if &buf[..8] != MAGIC {
            if &buf[..6] == MAGIC_FAMILY {
                return Err(Error::VersionMismatch { found: String::from_utf8_lossy(&buf[..8]).into_owned() });
            }
            return Err(Error::Format("bad magic".into()));
        }
        let mut cur = Cursor { buf, pos: 8 };
        let count = cur.u32()? as usize;
        struct Entry {
            name: String,
            dtype: u8,
            shape: Vec<u64>,
            offset: u64,
            len: u64,
        }
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let dtype = cur.u8()?;
            let ndim = cur.u8()? as usize;
            let shape = (0..ndim).map(|_| cur.u64()).collect::<Result<Vec<_>>>()?;
            let offset = cur.u64()?;
            let len = cur.u64()?;
            entries.push(Entry { name, dtype, shape, offset, len });
        }
        let data_start = cur.pos;
        let data_len = entries.iter().map(|e| e.offset.saturating_add(e.len)).max().unwrap_or(0);
        let data_end = usize::try_from(data_len).ok().and_then(|l| data_start.checked_add(l)).ok_or(Error::Truncated)?;
        if buf.len() < data_end + 4 {
            return Err(Error::Truncated);
        }
        if buf.len() > data_end + 4 {
            return Err(Error::Format(format!("{} trailing bytes", buf.len() - data_end - 4)));
        }
        let stored = u32::from_le_bytes(buf[data_end..data_end + 4].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(&buf[..data_end]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut tensors = Vec::with_capacity(entries.len());
        for e in entries {
            let start = data_start + e.offset as usize;
            let bytes = &buf[start..start + e.len as usize];
            let data = match e.dtype {
                DTYPE_F64 => {
                    if bytes.len() % 8 != 0 {
                        return Err(Error::Format(format!("tensor {:?} length not a multiple of 8", e.name)));
                    }
                    let values: Vec<f64> =
                        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                    if values.len() as u64 != e.shape.iter().product::<u64>() {
                        return Err(Error::Format(format!("tensor {:?} size does not match its shape", e.name)));
                    }
                    TensorData::F64(values)
                }
                DTYPE_JSON => TensorData::Json(
                    String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format(format!("tensor {:?} is not UTF-8", e.name)))?,
                ),
                other => return Err(Error::Format(format!("unknown dtype {other} for tensor {:?}", e.name))),
            };
            tensors.push(Tensor { name: e.name, shape: e.shape, data });
        }
        Ok(Self { tensors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_file() -> TensorFile {
        let mut f = TensorFile::default();
        f.push(Tensor::f64("pi", &[2], vec![0.25, 0.75]));
        f.push(Tensor::f64("sigma_k", &[2, 1, 1], vec![1.0, f64::MIN_POSITIVE]));
        f.push(Tensor::json("meta", r#"{"kind":"gmm"}"#.into()));
        f
    }

    #[test]
    fn round_trip_is_lossless() {
        let f = sample_file();
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        let back = TensorFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.f64_tensor("sigma_k", &[2, 1, 1]).unwrap()[1], f64::MIN_POSITIVE);
        assert!(back.f64_tensor("sigma_k", &[2]).is_err());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample_file().to_bytes();

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(TensorFile::from_bytes(&wrong_magic), Err(Error::Format(_))));

        let mut version = bytes.clone();
        version[7] = b'9';
        assert!(matches!(TensorFile::from_bytes(&version), Err(Error::VersionMismatch { .. })));

        let mut flipped = bytes.clone();
        let n = flipped.len();
        flipped[n - 10] ^= 0x40;
        assert!(matches!(TensorFile::from_bytes(&flipped), Err(Error::Checksum { .. })));

        for cut in [3, 9, 20, bytes.len() - 1] {
            assert!(matches!(TensorFile::from_bytes(&bytes[..cut]), Err(Error::Truncated)), "cut {cut}");
        }
    }
}
