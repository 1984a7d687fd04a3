//! Binary named-tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  b"FUSECKPT"
//! version   u32
//! meta_len  u64, followed by meta_len bytes of UTF-8 JSON
//! count     u32
//! repeated count times:
//!   name_len u32, name bytes (UTF-8)
//!   ndim     u32, ndim x u64 extents
//!   payload  prod(extents) x f64
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"FUSECKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Metadata string plus ordered named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorContainer {
    pub metadata: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl TensorContainer {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let meta = self.metadata.as_bytes();
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(meta)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &x in t.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let meta_len = read_u64(r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let metadata = String::from_utf8(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let count = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
            let ndim = read_u32(r)? as usize;
            let shape = (0..ndim).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        Ok(Self { metadata, tensors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_fixed() {
        let c = TensorContainer {
            metadata: "{}".into(),
            tensors: vec![("w".into(), Tensor::matrix(1, 2, vec![1.0, -2.5]).unwrap())],
        };
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 8 + 4 + 8 + 2 + 4 + 4 + 1 + 4 + 16 + 16);
        let back = TensorContainer::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = TensorContainer::default().to_bytes();
        bytes[0] = b'X';
        assert!(TensorContainer::read_from(&mut bytes.as_slice()).is_err());
    }
}
