//! Binary `TNSR` tensor files.
//!
//! A single tensor is stored as the magic `TNSR`, a little-endian `u32` order
//! `D`, `D` little-endian `u32` dims, then `prod(dims)` little-endian `f64`
//! values in vec order. A sample stack is a little-endian `u32` count followed
//! by that many single-tensor records, all with identical dims. A file that
//! starts with the magic is read as a stack of one.

use std::io::Write;
use std::path::Path;

use super::DenseTensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNSR";

pub fn write_tensor<W: Write>(w: &mut W, t: &DenseTensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.order() as u32).to_le_bytes())?;
    for &p in t.dims() {
        w.write_all(&(p as u32).to_le_bytes())?;
    }
    for v in t.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_tensor_stack<W: Write>(w: &mut W, tensors: &[DenseTensor]) -> Result<()> {
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        write_tensor(w, t)?;
    }
    Ok(())
}

pub fn write_tensor_file(path: &Path, tensors: &[DenseTensor]) -> Result<()> {
    let mut buf = Vec::new();
    if let [single] = tensors {
        write_tensor(&mut buf, single)?;
    } else {
        write_tensor_stack(&mut buf, tensors)?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn parse_tensor_file(path: &Path) -> Result<Vec<DenseTensor>> {
    let bytes = std::fs::read(path)?;
    parse_tensor_bytes(&bytes)
}

pub fn parse_tensor_bytes(bytes: &[u8]) -> Result<Vec<DenseTensor>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let tensors = if bytes.starts_with(MAGIC) {
        vec![cur.tensor()?]
    } else {
        let n = cur.u32("sample count")? as usize;
        let mut out = Vec::with_capacity(n.min(1 << 16));
        for i in 0..n {
            let t = cur.tensor()?;
            if let Some(first) = out.first() {
                let first: &DenseTensor = first;
                if first.dims() != t.dims() {
                    return Err(Error::Parse {
                        offset: cur.pos,
                        message: format!(
                            "sample {} has dims {:?}, sample 1 has {:?}",
                            i + 1,
                            t.dims(),
                            first.dims()
                        ),
                    });
                }
            }
            out.push(t);
        }
        out
    };
    if cur.pos != bytes.len() {
        return Err(Error::Parse {
            offset: cur.pos,
            message: format!("{} trailing bytes", bytes.len() - cur.pos),
        });
    }
    Ok(tensors)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, len: usize, what: &str) -> Result<&[u8]> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < len {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("truncated {what}: expected {len} bytes, found {remaining}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self) -> Result<DenseTensor> {
        let start = self.pos;
        if self.take(4, "magic")? != MAGIC {
            return Err(Error::Parse {
                offset: start,
                message: "bad magic, expected \"TNSR\"".into(),
            });
        }
        let order = self.u32("order")? as usize;
        if order == 0 {
            return Err(Error::Parse {
                offset: start + 4,
                message: "tensor order must be at least 1".into(),
            });
        }
        let mut dims = Vec::with_capacity(order.min(64));
        for _ in 0..order {
            let at = self.pos;
            let p = self.u32("dims")? as usize;
            if p == 0 {
                return Err(Error::Parse {
                    offset: at,
                    message: "zero-length mode".into(),
                });
            }
            dims.push(p);
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &p| acc.checked_mul(p))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Parse {
                offset: start,
                message: format!("dims {dims:?} overflow"),
            })?;
        let raw = self.take(len, "tensor payload")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        DenseTensor::new(dims, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stack_round_trip_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ts: Vec<DenseTensor> = (0..5)
            .map(|_| {
                DenseTensor::new(vec![3, 2, 2], (0..12).map(|_| rng.gen::<f64>() - 0.5).collect()).unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_tensor_stack(&mut buf, &ts).unwrap();
        let back = parse_tensor_bytes(&buf).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in ts.iter().zip(&back) {
            assert_eq!(a.dims(), b.dims());
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn single_tensor_layout() {
        let t = DenseTensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"TNSR");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..20], &1.0f64.to_le_bytes());
        assert_eq!(buf.len(), 28);
        assert_eq!(parse_tensor_bytes(&buf).unwrap(), vec![t]);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = Vec::new();
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(b"TNSX");
        let err = parse_tensor_bytes(&buf).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 4, .. }), "{err}");
    }

    #[test]
    fn rejects_short_payload() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        buf.truncate(buf.len() - 8);
        let err = parse_tensor_bytes(&buf).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 32 bytes, found 24"), "{msg}");
    }

    #[test]
    fn rejects_long_payload_and_mixed_dims() {
        let t = DenseTensor::new(vec![2], vec![1.0; 2]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        buf.extend_from_slice(&0f64.to_le_bytes());
        assert!(parse_tensor_bytes(&buf).unwrap_err().to_string().contains("trailing"));

        let u = DenseTensor::new(vec![3], vec![1.0; 3]).unwrap();
        let mut buf = Vec::new();
        write_tensor_stack(&mut buf, &[t, u]).unwrap();
        assert!(parse_tensor_bytes(&buf).is_err());
    }
}
