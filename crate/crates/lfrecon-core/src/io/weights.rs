//! Model weights file: an 8-byte magic, a little-endian u64 header length,
//! a JSON header (opaque `meta` for the owner, precision, tensor
//! declarations), then one contiguous little-endian float blob holding
//! every tensor in declaration order. Floats round-trip bitwise.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, WeightsError};
use crate::io::jsonfmt;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"LFRWGT01";

/// Name and shape of one stored tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDecl {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorDecl {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Tensor payloads, one `Vec` per declared tensor, uniform precision.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorStore {
    F32(Vec<Vec<f32>>),
    F64(Vec<Vec<f64>>),
}

impl TensorStore {
    pub fn precision(&self) -> &'static str {
        match self {
            TensorStore::F32(_) => "f32",
            TensorStore::F64(_) => "f64",
        }
    }

    pub fn n_tensors(&self) -> usize {
        match self {
            TensorStore::F32(t) => t.len(),
            TensorStore::F64(t) => t.len(),
        }
    }

    fn tensor_len(&self, i: usize) -> usize {
        match self {
            TensorStore::F32(t) => t[i].len(),
            TensorStore::F64(t) => t[i].len(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    precision: String,
    tensors: Vec<TensorDecl>,
}

/// A parsed (or to-be-written) weights file.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    /// Owner-defined metadata (architecture config, label statistics, ...).
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorDecl>,
    pub store: TensorStore,
}

impl WeightsFile {
    fn validate(&self) -> Result<()> {
        if self.tensors.len() != self.store.n_tensors() {
            return Err(Error::ShapeMismatch(format!(
                "{} tensor declarations but {} payloads",
                self.tensors.len(),
                self.store.n_tensors()
            )));
        }
        for (i, decl) in self.tensors.iter().enumerate() {
            if decl.numel() != self.store.tensor_len(i) {
                return Err(Error::ShapeMismatch(format!(
                    "tensor '{}' declares shape {:?} ({} elements) but holds {}",
                    decl.name,
                    decl.shape,
                    decl.numel(),
                    self.store.tensor_len(i)
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let path = path.as_ref();
        let header = Header {
            meta: self.meta.clone(),
            precision: self.store.precision().to_string(),
            tensors: self.tensors.clone(),
        };
        let header_json = jsonfmt::to_string(&header)?;
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        let io_err = |e| Error::io(path, e);
        f.write_all(WEIGHTS_MAGIC).map_err(io_err)?;
        f.write_all(&(header_json.len() as u64).to_le_bytes()).map_err(io_err)?;
        f.write_all(header_json.as_bytes()).map_err(io_err)?;
        match &self.store {
            TensorStore::F32(tensors) => {
                for t in tensors {
                    for v in t {
                        f.write_all(&v.to_le_bytes()).map_err(io_err)?;
                    }
                }
            }
            TensorStore::F64(tensors) => {
                for t in tensors {
                    for v in t {
                        f.write_all(&v.to_le_bytes()).map_err(io_err)?;
                    }
                }
            }
        }
        f.flush().map_err(io_err)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 {
            return Err(WeightsError::Truncated(format!(
                "file is {} bytes, smaller than the fixed 16-byte preamble",
                bytes.len()
            ))
            .into());
        }
        if &bytes[..8] != WEIGHTS_MAGIC {
            return Err(WeightsError::BadMagic.into());
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let blob_start = 16usize.checked_add(header_len).filter(|&s| s <= bytes.len());
        let blob_start = blob_start.ok_or_else(|| {
            WeightsError::Truncated(format!(
                "declared header length {} overruns the {}-byte file",
                header_len,
                bytes.len()
            ))
        })?;
        let header: Header = serde_json::from_slice(&bytes[16..blob_start])
            .map_err(|e| WeightsError::MalformedHeader(e.to_string()))?;
        let elem_size = match header.precision.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => {
                return Err(WeightsError::MalformedHeader(format!(
                    "unknown precision '{other}' (expected f32 or f64)"
                ))
                .into())
            }
        };
        let declared: usize = header.tensors.iter().map(TensorDecl::numel).sum::<usize>() * elem_size;
        let actual = bytes.len() - blob_start;
        if declared != actual {
            return Err(WeightsError::BlobSizeMismatch { declared, actual }.into());
        }

        let mut offset = blob_start;
        let store = if elem_size == 4 {
            let mut tensors = Vec::with_capacity(header.tensors.len());
            for decl in &header.tensors {
                let n = decl.numel();
                let t: Vec<f32> = bytes[offset..offset + n * 4]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                offset += n * 4;
                tensors.push(t);
            }
            TensorStore::F32(tensors)
        } else {
            let mut tensors = Vec::with_capacity(header.tensors.len());
            for decl in &header.tensors {
                let n = decl.numel();
                let t: Vec<f64> = bytes[offset..offset + n * 8]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                offset += n * 8;
                tensors.push(t);
            }
            TensorStore::F64(tensors)
        };
        Ok(WeightsFile {
            meta: header.meta,
            tensors: header.tensors,
            store,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample_file() -> WeightsFile {
        WeightsFile {
            meta: json!({"arch": "test", "label_mean": 0.125, "label_std": 2.0}),
            tensors: vec![
                TensorDecl { name: "a.weight".into(), shape: vec![2, 3] },
                TensorDecl { name: "b.bias".into(), shape: vec![4] },
            ],
            store: TensorStore::F32(vec![
                vec![1.0, -2.5, f32::from_bits(0x7fc0_dead), 0.1, f32::MIN_POSITIVE, -0.0],
                vec![3.25, f32::NEG_INFINITY, 1e-40, 9.75],
            ]),
        }
    }

    #[test]
    fn round_trip_bitwise_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.lfw");
        let file = sample_file();
        file.write(&path).unwrap();
        let back = WeightsFile::read(&path).unwrap();
        assert_eq!(back.meta, file.meta);
        assert_eq!(back.tensors, file.tensors);
        let (TensorStore::F32(a), TensorStore::F32(b)) = (&file.store, &back.store) else {
            panic!("precision changed");
        };
        for (ta, tb) in a.iter().zip(b) {
            for (x, y) in ta.iter().zip(tb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn round_trip_bitwise_f64() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w64.lfw");
        let file = WeightsFile {
            meta: json!(null),
            tensors: vec![TensorDecl { name: "t".into(), shape: vec![3] }],
            store: TensorStore::F64(vec![vec![std::f64::consts::PI, -0.0, f64::from_bits(0x7ff8_0000_0000_beef)]]),
        };
        file.write(&path).unwrap();
        let back = WeightsFile::read(&path).unwrap();
        let TensorStore::F64(t) = &back.store else { panic!() };
        assert_eq!(t[0][0].to_bits(), std::f64::consts::PI.to_bits());
        assert_eq!(t[0][1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(t[0][2].to_bits(), 0x7ff8_0000_0000_beef);
    }

    #[test]
    fn error_paths_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.lfw");
        sample_file().write(&path).unwrap();
        let good = std::fs::read(&path).unwrap();

        // Corrupt magic.
        let mut bad = good.clone();
        bad[0] ^= 0xff;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            WeightsFile::read(&path),
            Err(Error::Weights(WeightsError::BadMagic))
        ));

        // Header length overrunning the file.
        let mut bad = good.clone();
        bad[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            WeightsFile::read(&path),
            Err(Error::Weights(WeightsError::Truncated(_)))
        ));

        // Garbage header JSON.
        let mut bad = good.clone();
        bad[16] = b'@';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            WeightsFile::read(&path),
            Err(Error::Weights(WeightsError::MalformedHeader(_)))
        ));

        // Short blob.
        let mut bad = good.clone();
        bad.truncate(good.len() - 4);
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            WeightsFile::read(&path),
            Err(Error::Weights(WeightsError::BlobSizeMismatch { .. }))
        ));

        // Sub-preamble file.
        std::fs::write(&path, b"LFRW").unwrap();
        assert!(matches!(
            WeightsFile::read(&path),
            Err(Error::Weights(WeightsError::Truncated(_)))
        ));
    }

    #[test]
    fn mismatched_declaration_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let file = WeightsFile {
            meta: json!(null),
            tensors: vec![TensorDecl { name: "t".into(), shape: vec![5] }],
            store: TensorStore::F32(vec![vec![1.0; 4]]),
        };
        assert!(file.write(dir.path().join("bad.lfw")).is_err());
    }
}
