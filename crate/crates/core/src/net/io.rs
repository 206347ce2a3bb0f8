//! Binary checkpoint and tensor files (little-endian).
//!
//! Checkpoint: `FQSP`, u32 version, u32 length + JSON model config, u32 tensor
//! count, then per tensor u32 name length, UTF-8 name, u32 rank, u64 dims and
//! f64 values. Tensor file: `FQT1`, u32 rank, u64 dims, f64 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{FreqSp, FreqSpConfig};
use super::tensor::{Tensor, MAX_RANK};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FQSP";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const TENSOR_MAGIC: &[u8; 4] = b"FQT1";

/// Upper bound on a single length field, to fail fast on corrupt files.
const MAX_LEN: u64 = 1 << 32;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor_body(out: &mut Vec<u8>, t: &Tensor) {
    put_u32(out, t.rank() as u32);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn checkpoint_bytes(model: &FreqSp) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    let config = serde_json::to_vec(model.config())?;
    put_u32(&mut out, config.len() as u32);
    out.extend_from_slice(&config);
    put_u32(&mut out, model.params().len() as u32);
    for (name, t) in model.params().iter() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_tensor_body(&mut out, t);
    }
    Ok(out)
}

struct Reader<R> {
    inner: R,
    what: &'static str,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.inner.read_exact(&mut buf).map_err(|e| Error::format(self.what, format!("truncated: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.bytes(4)?;
        if got != want {
            return Err(Error::format(self.what, format!("bad magic {got:?}")));
        }
        Ok(())
    }

    fn tensor_body(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::format(self.what, format!("rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut count: u64 = 1;
        for _ in 0..rank {
            let d = self.u64()?;
            count = count.saturating_mul(d);
            dims.push(d as usize);
        }
        if count > MAX_LEN {
            return Err(Error::format(self.what, format!("implausible shape {dims:?}")));
        }
        let raw = self.bytes(count as usize * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Tensor::new(&dims, data)
    }

    fn expect_end(&mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.inner.read(&mut extra) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format(self.what, "trailing bytes")),
            Err(e) => Err(Error::format(self.what, e.to_string())),
        }
    }
}

pub fn read_checkpoint(input: impl Read) -> Result<FreqSp> {
    let mut r = Reader { inner: input, what: "checkpoint" };
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let len = r.u32()? as usize;
    let config: FreqSpConfig = serde_json::from_slice(&r.bytes(len)?)?;
    let count = r.u32()? as usize;
    let mut named = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(n)?).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        named.push((name, r.tensor_body()?));
    }
    r.expect_end()?;
    FreqSp::from_parts(config, named)
}

pub fn save_checkpoint(model: &FreqSp, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<FreqSp> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

pub fn tensor_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * (t.rank() + t.len()));
    out.extend_from_slice(TENSOR_MAGIC);
    put_tensor_body(&mut out, t);
    out
}

pub fn read_tensor(input: impl Read) -> Result<Tensor> {
    let mut r = Reader { inner: input, what: "tensor file" };
    r.magic(TENSOR_MAGIC)?;
    let t = r.tensor_body()?;
    r.expect_end()?;
    Ok(t)
}

pub fn save_tensor(t: &Tensor, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&tensor_bytes(t)).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let model = FreqSp::new(FreqSpConfig { input_size: 32, ..Default::default() }, 9).unwrap();
        let bytes = checkpoint_bytes(&model).unwrap();
        assert_eq!(&bytes[..4], b"FQSP");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(back, model);
        assert_eq!(checkpoint_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let model = FreqSp::new(FreqSpConfig { input_size: 32, ..Default::default() }, 9).unwrap();
        let bytes = checkpoint_bytes(&model).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad[..]).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(read_checkpoint(&long[..]).is_err());
    }

    #[test]
    fn tensor_layout() {
        let t = Tensor::new(&[1, 2], vec![1.5, -2.0]).unwrap();
        let bytes = tensor_bytes(&t);
        let mut want = b"FQT1".to_vec();
        want.extend_from_slice(&2u32.to_le_bytes());
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes());
        want.extend_from_slice(&1.5f64.to_le_bytes());
        want.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(bytes, want);
        assert_eq!(read_tensor(&bytes[..]).unwrap(), t);
    }
}
