//! Self-describing binary parameter files.
//!
//! Layout (little-endian): magic `VXCK`, version `u16`, entry count `u32`,
//! then per entry the name (`u16` byte length + UTF-8), dtype tag `u8`
//! (0 = f32, 1 = f64), rank `u8`, dims `u32 × rank`, and the values.

use std::path::Path;

use crate::error::format_err;
use crate::{NnError, ParamStore, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VXCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn checkpoint_bytes<T: Scalar>(store: &ParamStore<T>) -> Result<Vec<u8>, NnError> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let count = u32::try_from(store.len()).map_err(|_| format_err("entry count", "too many parameters"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, value) in store.iter() {
        let len = u16::try_from(name.len()).map_err(|_| format_err(name, "name longer than 65535 bytes"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(T::DTYPE);
        let rank = u8::try_from(value.rank()).map_err(|_| format_err(name, "rank above 255"))?;
        out.push(rank);
        for &d in value.shape() {
            let d = u32::try_from(d).map_err(|_| format_err(name, "axis longer than u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in value.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(store: &ParamStore<T>, path: &Path) -> Result<(), NnError> {
    let bytes = checkpoint_bytes(store)?;
    std::fs::write(path, bytes).map_err(|source| NnError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8], NnError> {
        if self.bytes.len() - self.pos < n {
            return Err(format_err(field, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, field: &str) -> Result<u8, NnError> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &str) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, field: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }
}

pub fn checkpoint_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<ParamStore<T>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(format_err("magic", "not a VXCK checkpoint"));
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(format_err("version", format!("unsupported version {version}")));
    }
    let count = r.u32("entry count")?;
    let mut store = ParamStore::new();
    for i in 0..count {
        let len = r.u16(&format!("entry {i} name length"))? as usize;
        let name = std::str::from_utf8(r.take(len, &format!("entry {i} name"))?)
            .map_err(|_| format_err(format!("entry {i} name"), "invalid UTF-8"))?
            .to_string();
        let dtype = r.u8(&name)?;
        if dtype != T::DTYPE {
            return Err(format_err(&name, format!("dtype tag {dtype}, expected {}", T::DTYPE)));
        }
        let rank = r.u8(&name)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32(&name)? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = r.take(n * T::BYTES, &name)?;
        let data = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
        let value = Tensor::new(&shape, data).map_err(|e| format_err(&name, e.to_string()))?;
        store.add(name.clone(), value).map_err(|_| format_err(&name, "duplicate entry"))?;
    }
    if r.pos != bytes.len() {
        return Err(format_err("trailer", format!("{} unexpected trailing bytes", bytes.len() - r.pos)));
    }
    Ok(store)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ParamStore<T>, NnError> {
    let bytes = std::fs::read(path).map_err(|source| NnError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add("enc.conv.weight", Tensor::from_f64(&[2, 1, 1, 1, 1], &[0.1, -3.5]).unwrap()).unwrap();
        s.add("enc.conv.bias", Tensor::from_f64(&[2], &[f64::MIN_POSITIVE, 7.0]).unwrap()).unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = store();
        let bytes = checkpoint_bytes(&s).unwrap();
        let back: ParamStore<f32> = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(checkpoint_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn truncation_names_the_entry() {
        let bytes = checkpoint_bytes(&store()).unwrap();
        match checkpoint_from_bytes::<f32>(&bytes[..bytes.len() - 2]) {
            Err(NnError::Format { field, .. }) => assert_eq!(field, "enc.conv.bias"),
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn dtype_mismatch_is_a_format_error() {
        let bytes = checkpoint_bytes(&store()).unwrap();
        assert!(matches!(checkpoint_from_bytes::<f64>(&bytes), Err(NnError::Format { .. })));
    }
}
