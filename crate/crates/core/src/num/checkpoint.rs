//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  b"SSPC"
//! version u32      currently 1
//! config  u64      caller-supplied config hash
//! seed    u64
//! epoch   u32
//! count   u32      number of parameters
//! then per parameter, in store order:
//!   name_len u32, name bytes (UTF-8)
//!   ndims    u32, each dim as u64
//!   values   numel × f64 (IEEE-754 bit patterns)
//! ```
//!
//! Writing is a pure function of the store contents, so identical training
//! runs produce byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tape::ParamStore;
use super::tensor::Tensor;
use super::NumError;

const MAGIC: &[u8; 4] = b"SSPC";
const VERSION: u32 = 1;

/// Metadata stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub config_hash: u64,
    pub seed: u64,
    pub epoch: u32,
}

pub fn save(path: &Path, store: &ParamStore, manifest: &Manifest) -> Result<(), NumError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&manifest.config_hash.to_le_bytes())?;
    w.write_all(&manifest.seed.to_le_bytes())?;
    w.write_all(&manifest.epoch.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(p.value.shape().len() as u32).to_le_bytes())?;
        for &d in p.value.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ParamStore, Manifest), NumError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NumError::BadCheckpoint("bad magic".to_string()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NumError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let manifest = Manifest {
        config_hash: read_u64(&mut r)?,
        seed: read_u64(&mut r)?,
        epoch: read_u32(&mut r)?,
    };
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| NumError::BadCheckpoint("non-UTF-8 parameter name".to_string()))?;
        let ndims = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        store.add(name, Tensor::new(shape, data)?);
    }
    Ok((store, manifest))
}

fn read_u32(r: &mut impl Read) -> Result<u32, NumError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, NumError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// FNV-1a over the canonical config text, used as the manifest config hash.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Rng;

    #[test]
    fn round_trip_bitwise() {
        let mut rng = Rng::new(4);
        let mut store = ParamStore::new();
        store.add("emb", Tensor::randn(&[5, 3], 0.3, &mut rng));
        store.add("w", Tensor::randn(&[3, 2], 0.3, &mut rng));
        let manifest = Manifest {
            config_hash: fnv1a(b"cfg"),
            seed: 17,
            epoch: 2,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &store, &manifest).unwrap();
        let (loaded, m2) = load(&path).unwrap();
        assert_eq!(manifest, m2);
        assert_eq!(store.len(), loaded.len());
        for (a, b) in store.iter().zip(loaded.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.shape(), b.value.shape());
            let ab: Vec<u64> = a.value.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOPE0000000000000000000000").unwrap();
        assert!(matches!(load(&path), Err(NumError::BadCheckpoint(_))));
    }
}
