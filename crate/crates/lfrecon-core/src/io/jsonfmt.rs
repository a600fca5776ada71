//! JSON serialization with full-precision floats.
//!
//! Metadata files must reproduce camera parameters bit-exactly, so floats
//! are written in scientific notation with 17 significant digits (every
//! f64 round-trips). Reading uses plain serde_json.

use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.8e}")
    }
}

/// Serializes with ≥17 significant digits on every float.
pub fn to_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_file<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let s = to_string(value)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_file<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::{Deserialize, Serialize};

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Blob {
        a: f64,
        b: f64,
        c: Vec<f64>,
        n: u32,
        s: String,
    }

    #[test]
    fn floats_round_trip_exactly() {
        let blob = Blob {
            a: std::f64::consts::PI,
            b: 1.0 / 3.0,
            c: vec![57.6, 72.91666666666667, 6.02214076e23, -1.1e-300],
            n: 42,
            s: "rig".into(),
        };
        let s = to_string(&blob).unwrap();
        let back: Blob = serde_json::from_str(&s).unwrap();
        assert_eq!(blob, back);
        // Bit-exact, not just approximately equal.
        assert_eq!(blob.a.to_bits(), back.a.to_bits());
        assert_eq!(blob.c[2].to_bits(), back.c[2].to_bits());
    }

    #[test]
    fn floats_carry_at_least_nine_significant_digits() {
        let s = to_string(&vec![72.91666666666667f64]).unwrap();
        assert!(s.contains("7.2916666666666671e1"), "got {s}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        let blob = Blob {
            a: -0.1,
            b: f64::MIN_POSITIVE,
            c: vec![],
            n: 7,
            s: "x".into(),
        };
        write_file(&path, &blob).unwrap();
        let back: Blob = read_file(&path).unwrap();
        assert_eq!(blob, back);
    }
}
