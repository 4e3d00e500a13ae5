//! Checkpoint file format: a versioned header, then one or more named
//! parameter sets (actor, critic), each parameter stored as name, shape, and
//! row-major little-endian float64 payload. Round-trips are bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use super::{ParameterSet, Tensor};

const MAGIC: &[u8; 8] = b"ABRNET01";

fn push_str(buf: &mut Vec<u8>, s: &str) {
    let bytes = s.as_bytes();
    buf.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    buf.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }
}

/// Serializes the named parameter sets to `path` atomically (temp file plus
/// rename), so an interrupted writer never leaves a half-written checkpoint.
pub fn save_checkpoint(path: impl AsRef<Path>, sets: &[(&str, &ParameterSet)]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(sets.len() as u32).to_le_bytes());
    for (set_name, set) in sets {
        push_str(&mut buf, set_name);
        buf.extend_from_slice(&(set.len() as u32).to_le_bytes());
        for (name, tensor) in set.iter() {
            push_str(&mut buf, name);
            buf.push(tensor.shape.len() as u8);
            for &dim in &tensor.shape {
                buf.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for &value in &tensor.data {
                buf.extend_from_slice(&value.to_le_bytes());
            }
        }
    }

    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads every parameter set in the file, in stored order.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<(String, ParameterSet)>> {
    let buf = fs::read(path.as_ref())?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let set_count = r.u32()? as usize;
    let mut sets = Vec::with_capacity(set_count);
    for _ in 0..set_count {
        let set_name = r.string()?;
        let param_count = r.u32()? as usize;
        let mut set = ParameterSet::default();
        for _ in 0..param_count {
            let name = r.string()?;
            let ndim = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            set.insert(name, Tensor { shape, data });
        }
        sets.push((set_name, set));
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after last parameter set".into()));
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::{init_params, NetworkConfig, NetworkRole};

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = NetworkConfig { lstm_hidden: 4, fc_sizes: [3, 2], ..NetworkConfig::default() };
        let actor = init_params(&cfg, 1, NetworkRole::Actor).unwrap();
        let critic = init_params(&cfg, 2, NetworkRole::Critic).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");

        save_checkpoint(&path, &[("actor", &actor), ("critic", &critic)]).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "actor");
        assert_eq!(loaded[0].1, actor);
        assert_eq!(loaded[1].0, "critic");
        assert_eq!(loaded[1].1, critic);

        // Re-saving the loaded sets reproduces the file byte for byte.
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&path2, &[("actor", &loaded[0].1), ("critic", &loaded[1].1)]).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
