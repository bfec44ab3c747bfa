//! Versioned checkpoint container.
//!
//! Layout: magic string, format version, entry count; then per entry the
//! name (length-prefixed UTF-8), the shape (rank + dims), and the raw
//! little-endian f64 payload. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use super::DiffError;

pub const CKPT_MAGIC: &[u8; 12] = b"SCASREC-CKPT";
pub const CKPT_VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, entries: &[(String, Tensor)]) -> Result<(), DiffError> {
    let file = File::create(path)
        .map_err(|e| DiffError::Checkpoint(format!("create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| DiffError::Checkpoint(format!("write: {e}"));

    w.write_all(CKPT_MAGIC).map_err(io)?;
    w.write_all(&CKPT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(entries.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, tensor) in entries {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(bytes).map_err(io)?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())
            .map_err(io)?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>, DiffError> {
    let file = File::open(path)
        .map_err(|e| DiffError::Checkpoint(format!("open {}: {e}", path.display())))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 12];
    read_exact(&mut r, &mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(DiffError::Checkpoint("bad magic string".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CKPT_VERSION {
        return Err(DiffError::Checkpoint(format!(
            "unsupported format version {version} (expected {CKPT_VERSION})"
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| DiffError::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            read_exact(&mut r, &mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        entries.push((name, Tensor::new(shape, data)?));
    }
    Ok(entries)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), DiffError> {
    r.read_exact(buf)
        .map_err(|e| DiffError::Checkpoint(format!("truncated checkpoint: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DiffError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let entries = vec![
            ("b.weight".to_string(), Tensor::row(vec![1.0 / 3.0, -0.0, f64::MIN_POSITIVE])),
            ("a.bias".to_string(), Tensor::scalar(0.1 + 0.2)),
            (
                "m".to_string(),
                Tensor::new(vec![2, 3], vec![1e-300, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap(),
            ),
        ];
        write_checkpoint(&path, &entries).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.len(), entries.len());
        for ((n0, t0), (n1, t1)) in entries.iter().zip(&back) {
            assert_eq!(n0, n1);
            assert_eq!(t0.shape(), t1.shape());
            for (a, b) in t0.data().iter().zip(t1.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // and the serialized bytes themselves are stable
        let path2 = dir.path().join("b.ckpt");
        write_checkpoint(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOT-A-CKPT-AT-ALL").unwrap();
        assert!(matches!(
            read_checkpoint(&path),
            Err(DiffError::Checkpoint(_))
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ckpt");
        let entries = vec![("w".to_string(), Tensor::row(vec![1.0, 2.0, 3.0]))];
        write_checkpoint(&path, &entries).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            read_checkpoint(&path),
            Err(DiffError::Checkpoint(_))
        ));
    }
}
