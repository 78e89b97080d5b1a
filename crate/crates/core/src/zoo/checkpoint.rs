//! Binary checkpoints: magic `BDCK`, `u32` version, `u32` tensor count, then
//! per tensor a `u16` name length, the UTF-8 name, a `u8` dtype code, a `u8`
//! rank, `u32` dims and the raw little-endian data. Everything is
//! little-endian.

use std::fs;
use std::path::Path;

use super::network::Network;
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{DType, Element, Tensor};

pub const MAGIC: &[u8; 4] = b"BDCK";
pub const VERSION: u32 = 1;
/// Names with this prefix carry metadata and are skipped when loading
/// parameters.
pub const META_PREFIX: &str = "meta.";

/// One stored tensor, kept in f64 so either element type can be read back.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dtype: DType,
    pub value: Tensor<f64>,
}

pub fn encode<T: Element>(tensors: &[(&str, &Tensor<T>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(tensors.len()).map_err(|_| ck("too many tensors"))?.to_le_bytes());
    for (name, t) in tensors {
        let len = u16::try_from(name.len()).map_err(|_| ck(format!("name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(T::DTYPE.code());
        out.push(u8::try_from(t.rank()).map_err(|_| ck("rank too large"))?);
        for &d in t.shape() {
            out.extend_from_slice(&u32::try_from(d).map_err(|_| ck("dimension too large"))?.to_le_bytes());
        }
        out.extend_from_slice(&t.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ck("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ck(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| ck("name is not UTF-8"))?;
        let code = r.u8()?;
        let dtype = DType::from_code(code).ok_or_else(|| ck(format!("{name}: unknown dtype code {code}")))?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n * dtype.size_bytes())?;
        let data = match dtype {
            DType::F32 => raw.chunks_exact(4).map(|c| f32::read_le(c).as_f64()).collect(),
            DType::F64 => raw.chunks_exact(8).map(f64::read_le).collect(),
        };
        let value = Tensor::new(shape, data).map_err(|e| ck(format!("{name}: {e}")))?;
        entries.push(Entry { name, dtype, value });
    }
    if r.pos != bytes.len() {
        return Err(ck(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(entries)
}

pub fn save_store<T: Element>(path: &Path, store: &ParamStore<T>, meta: &[(&str, f64)]) -> Result<()> {
    let meta: Vec<(String, Tensor<T>)> = meta
        .iter()
        .map(|(k, v)| (format!("{META_PREFIX}{k}"), Tensor::scalar(T::from_f64(*v))))
        .collect();
    let mut items: Vec<(&str, &Tensor<T>)> = meta.iter().map(|(k, v)| (k.as_str(), v)).collect();
    items.extend(store.iter().map(|p| (p.name.as_str(), &p.value)));
    let bytes = encode(&items)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<Entry>> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact {
            path: path.to_path_buf(),
            hint: "run the stage that produces it first".into(),
        },
        _ => Error::io(path, e),
    })?;
    decode(&bytes)
}

/// Metadata value stored under `meta.<key>`.
pub fn meta(entries: &[Entry], key: &str) -> Option<f64> {
    let name = format!("{META_PREFIX}{key}");
    entries.iter().find(|e| e.name == name).map(|e| e.value.item())
}

impl<T: Element> Network<T> {
    pub fn save(&self, path: &Path, meta: &[(&str, f64)]) -> Result<()> {
        save_store(path, self.store(), meta)
    }

    /// Overwrites every parameter from `entries`. The entries must cover the
    /// model exactly (metadata aside) with matching shapes and element type.
    pub fn load_entries(&mut self, entries: &[Entry]) -> Result<()> {
        let mut seen = 0;
        for e in entries.iter().filter(|e| !e.name.starts_with(META_PREFIX)) {
            let id = self
                .store()
                .id(&e.name)
                .ok_or_else(|| ck(format!("unexpected tensor {} for {}", e.name, self.spec().prefix)))?;
            if e.dtype != T::DTYPE {
                return Err(ck(format!("{}: stored as {:?}, model uses {:?}", e.name, e.dtype, T::DTYPE)));
            }
            let p = self.store_mut().get_mut(id);
            if p.value.shape() != e.value.shape() {
                return Err(ck(format!(
                    "{}: stored shape {:?}, model shape {:?}",
                    e.name,
                    e.value.shape(),
                    p.value.shape()
                )));
            }
            p.value = e.value.cast();
            seen += 1;
        }
        if seen != self.store().len() {
            return Err(ck(format!(
                "checkpoint holds {seen} of {} tensors for {}",
                self.store().len(),
                self.spec().prefix
            )));
        }
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        self.load_entries(&read(path)?)
    }
}

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| ck("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::build_adapter;

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::new(vec![2], vec![1.0, -2.0]).unwrap();
        let b = encode(&[("w", &t)]).unwrap();
        assert_eq!(&b[..4], b"BDCK");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..14], &1u16.to_le_bytes());
        assert_eq!(b[14], b'w');
        assert_eq!(b[15], 0);
        assert_eq!(b[16], 1);
        assert_eq!(&b[17..21], &2u32.to_le_bytes());
        assert_eq!(&b[21..25], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 29);
    }

    #[test]
    fn decode_rejects_damage() {
        let t = Tensor::<f64>::scalar(3.0);
        let b = encode(&[("x", &t)]).unwrap();
        assert_eq!(decode(&b).unwrap()[0].value.item(), 3.0);
        assert!(decode(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut v2 = b.clone();
        v2[4] = 2;
        assert!(decode(&v2).is_err());
        let mut extra = b;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    #[test]
    fn network_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bdck");
        let a = build_adapter(8, 3, 4).unwrap();
        a.save(&path, &[("classes", 3.0)]).unwrap();
        let mut b = build_adapter(8, 3, 99).unwrap();
        b.load(&path).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(meta(&read(&path).unwrap(), "classes"), Some(3.0));
    }

    #[test]
    fn load_rejects_wrong_architecture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bdck");
        build_adapter(8, 3, 4).unwrap().save(&path, &[]).unwrap();
        let mut other = build_adapter(8, 4, 4).unwrap();
        assert!(other.load(&path).is_err());
        let missing = dir.path().join("nope.bdck");
        assert!(matches!(other.load(&missing), Err(Error::MissingArtifact { .. })));
    }
}
