//! Binary checkpoints of named f64 matrices plus a JSON config.
//!
//! Layout, little-endian: `MCLP`, u32 version, then length-prefixed (u32)
//! kind string and config JSON, u32 tensor count, and per tensor a
//! length-prefixed name, u64 rows, u64 cols and rows×cols f64 values in
//! row-major order.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MCLP";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint holds a {got} model, expected {expected}")]
    Kind { expected: String, got: String },
    #[error("checkpoint config: {0}")]
    Config(String),
    #[error("tensor {name}: {problem}")]
    Tensor { name: String, problem: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub tensors: Vec<(String, Array2<f64>)>,
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> Result<String, CheckpointError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CheckpointError::Config(e.to_string()))
}

pub fn write_checkpoint(
    mut w: impl Write,
    kind: &str,
    config: &serde_json::Value,
    tensors: &[(&str, &Array2<f64>)],
) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    write_str(&mut w, kind)?;
    write_str(&mut w, &config.to_string())?;
    w.write_u32::<LittleEndian>(tensors.len() as u32)?;
    for (name, t) in tensors {
        write_str(&mut w, name)?;
        w.write_u64::<LittleEndian>(t.nrows() as u64)?;
        w.write_u64::<LittleEndian>(t.ncols() as u64)?;
        for &v in t.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0; 4];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let kind = read_str(&mut r)?;
    let config = serde_json::from_str(&read_str(&mut r)?).map_err(|e| CheckpointError::Config(e.to_string()))?;
    let count = r.read_u32::<LittleEndian>()?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name = read_str(&mut r)?;
        let rows = r.read_u64::<LittleEndian>()? as usize;
        let cols = r.read_u64::<LittleEndian>()? as usize;
        let mut data = vec![0.0; rows * cols];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        let t = Array2::from_shape_vec((rows, cols), data).expect("length matches shape");
        tensors.push((name, t));
    }
    Ok(Checkpoint { kind, config, tensors })
}

impl Checkpoint {
    pub fn expect_kind(&self, expected: &str) -> Result<(), CheckpointError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(CheckpointError::Kind { expected: expected.into(), got: self.kind.clone() })
        }
    }

    /// Copies every named tensor into the matching destination, which must
    /// have the same shape.
    pub fn restore(&self, names: &[&str], dest: Vec<&mut Array2<f64>>) -> Result<(), CheckpointError> {
        for (name, d) in names.iter().zip(dest) {
            let (_, t) = self
                .tensors
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| CheckpointError::Tensor { name: name.to_string(), problem: "missing".into() })?;
            if t.dim() != d.dim() {
                return Err(CheckpointError::Tensor {
                    name: name.to_string(),
                    problem: format!("shape {:?}, expected {:?}", t.dim(), d.dim()),
                });
            }
            d.assign(t);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip() {
        let a = array![[1.0, -2.5], [f64::MIN_POSITIVE, 3.0]];
        let b = array![[0.125]];
        let cfg = serde_json::json!({"d": 2});
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "toy", &cfg, &[("a", &a), ("b", &b)]).unwrap();
        let ck = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(ck.kind, "toy");
        assert_eq!(ck.config, cfg);
        assert_eq!(ck.tensors, vec![("a".to_string(), a.clone()), ("b".to_string(), b)]);
        let mut dest = Array2::zeros((2, 2));
        ck.restore(&["a"], vec![&mut dest]).unwrap();
        assert_eq!(dest, a);
        let mut wrong = Array2::zeros((1, 2));
        assert!(ck.restore(&["a"], vec![&mut wrong]).is_err());
        assert!(ck.expect_kind("other").is_err());
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(read_checkpoint(&b"NOPE"[..]), Err(CheckpointError::BadMagic)));
        assert!(matches!(read_checkpoint(&b"MC"[..]), Err(CheckpointError::BadMagic)));
    }
}
