//! PFM (portable float map) reader/writer, grayscale `Pf` variant.
//!
//! Header: `Pf\n<width> <height>\n<scale>\n` followed by 32-bit float
//! scanlines in *bottom-up* order. A negative scale marks little-endian
//! payloads (the only endianness we support). The in-memory layout used by
//! this crate is top-down row-major; conversion happens on the fly.
//! Round trips are bitwise: NaN payloads and denormals survive.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, PfmError, Result};

/// Writes a top-down row-major float image.
pub fn write_pfm(path: impl AsRef<Path>, width: usize, height: usize, data: &[f32]) -> Result<()> {
    let path = path.as_ref();
    if data.len() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "PFM data length {} != {width}x{height}",
            data.len()
        )));
    }
    let mut buf = Vec::with_capacity(64 + data.len() * 4);
    write!(&mut buf, "Pf\n{width} {height}\n-1.0\n").expect("vec write");
    for y in (0..height).rev() {
        for x in 0..width {
            buf.extend_from_slice(&data[y * width + x].to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a PFM file, returning (width, height, top-down row-major data).
pub fn read_pfm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(&bytes)
}

pub fn parse_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    // Magic: exactly "Pf" followed by one whitespace byte.
    if bytes.len() < 3 {
        return Err(PfmError::MalformedHeader("file shorter than magic".into()).into());
    }
    match &bytes[0..2] {
        b"Pf" => {}
        b"PF" => return Err(PfmError::ColorUnsupported.into()),
        other => {
            return Err(PfmError::MalformedHeader(format!(
                "bad magic bytes {:?}",
                String::from_utf8_lossy(other)
            ))
            .into())
        }
    }

    // Three whitespace-separated tokens: width, height, scale. The header
    // ends after exactly one whitespace byte following the scale token.
    let mut pos = 2usize;
    let mut tokens: Vec<String> = Vec::with_capacity(3);
    while tokens.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(PfmError::MalformedHeader("truncated header tokens".into()).into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PfmError::MalformedHeader("missing delimiter after scale".into()).into());
    }
    pos += 1;

    let width: usize = tokens[0]
        .parse()
        .map_err(|_| PfmError::MalformedHeader(format!("bad width '{}'", tokens[0])))?;
    let height: usize = tokens[1]
        .parse()
        .map_err(|_| PfmError::MalformedHeader(format!("bad height '{}'", tokens[1])))?;
    let scale: f64 = tokens[2]
        .parse()
        .map_err(|_| PfmError::MalformedHeader(format!("bad scale '{}'", tokens[2])))?;
    if width == 0 || height == 0 {
        return Err(PfmError::MalformedHeader("zero dimension".into()).into());
    }
    if scale >= 0.0 {
        return Err(PfmError::BigEndianUnsupported.into());
    }

    let expected = width * height * 4;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(PfmError::Truncated {
            expected,
            found: payload.len(),
        }
        .into());
    }

    // Bottom-up file order → top-down memory order.
    let mut data = vec![0.0f32; width * height];
    for (row_idx, row) in payload[..expected].chunks_exact(width * 4).enumerate() {
        let y = height - 1 - row_idx;
        for (x, px) in row.chunks_exact(4).enumerate() {
            data[y * width + x] = f32::from_le_bytes([px[0], px[1], px[2], px[3]]);
        }
    }
    Ok((width, height, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn tmp() -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.pfm");
        (dir, path)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (_d, path) = tmp();
        // Include NaN with a payload, an infinity, denormals and negatives.
        let mut data: Vec<f32> = (0..31 * 17)
            .map(|i| ((i as f32) * 0.371).sin() * 1e3)
            .collect();
        data[0] = f32::from_bits(0x7fc0_dead);
        data[1] = f32::NEG_INFINITY;
        data[2] = f32::from_bits(1); // smallest denormal
        data[3] = -0.0;
        write_pfm(&path, 31, 17, &data).unwrap();
        let (w, h, back) = read_pfm(&path).unwrap();
        assert_eq!((w, h), (31, 17));
        assert_eq!(data.len(), back.len());
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn scanlines_are_bottom_up() {
        let (_d, path) = tmp();
        // 1x2 image: top pixel 1.0, bottom pixel 2.0.
        write_pfm(&path, 1, 2, &[1.0, 2.0]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_len = b"Pf\n1 2\n-1.0\n".len();
        // First stored scanline must be the bottom row (2.0).
        let first = f32::from_le_bytes(bytes[header_len..header_len + 4].try_into().unwrap());
        assert_eq!(first, 2.0);
    }

    #[test]
    fn corrupt_magic_is_malformed_header() {
        let err = parse_pfm(b"Qx\n2 2\n-1.0\n\0\0\0\0").unwrap_err();
        assert!(matches!(err, Error::Pfm(PfmError::MalformedHeader(_))), "{err:?}");
    }

    #[test]
    fn color_pfm_rejected_distinctly() {
        let err = parse_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0\0\0\0\0\0\0\0\0").unwrap_err();
        assert!(matches!(err, Error::Pfm(PfmError::ColorUnsupported)), "{err:?}");
    }

    #[test]
    fn positive_scale_is_big_endian_error() {
        let err = parse_pfm(b"Pf\n1 1\n1.0\n\0\0\0\0").unwrap_err();
        assert!(matches!(err, Error::Pfm(PfmError::BigEndianUnsupported)), "{err:?}");
    }

    #[test]
    fn short_payload_is_truncated_error() {
        let err = parse_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap_err();
        match err {
            Error::Pfm(PfmError::Truncated { expected, found }) => {
                assert_eq!(expected, 16);
                assert_eq!(found, 4);
            }
            other => panic!("wrong error: {other:?}"),
        }
    }

    #[test]
    fn header_token_garbage_is_malformed() {
        let err = parse_pfm(b"Pf\n2 two\n-1.0\n\0\0\0\0").unwrap_err();
        assert!(matches!(err, Error::Pfm(PfmError::MalformedHeader(_))), "{err:?}");
    }
}
