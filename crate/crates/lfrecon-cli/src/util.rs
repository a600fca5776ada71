//! Small shared helpers: depth-map ↔ PFM conversion, mask loading, value
//! parsing for paired flags.

use std::path::Path;

use lfrecon_core::error::{Error, Result};
use lfrecon_core::io::pfm::{read_pfm, write_pfm};
use lfrecon_core::lightfield::DepthMap;

/// Writes a depth map as PFM; invalid pixels become NaN.
pub fn write_depthmap_pfm(path: &Path, dm: &DepthMap) -> Result<()> {
    let data: Vec<f32> = (0..dm.height)
        .flat_map(|y| (0..dm.width).map(move |x| dm.get(x, y) as f32))
        .collect();
    write_pfm(path, dm.width, dm.height, &data)
}

/// Reads a PFM as a depth map; non-finite values become invalid pixels.
pub fn read_depthmap_pfm(path: &Path) -> Result<DepthMap> {
    let (w, h, data) = read_pfm(path)?;
    DepthMap::from_values(w, h, data.into_iter().map(|v| v as f64).collect())
}

/// Loads a foreground mask PNG: true where the pixel is ≥ 128.
pub fn read_mask_png(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((w, h, img.into_raw().into_iter().map(|v| v >= 128).collect()))
}

/// Invalidates every depth-map pixel outside the mask.
pub fn apply_mask(dm: &mut DepthMap, mask_path: &Path) -> Result<()> {
    let (w, h, fg) = read_mask_png(mask_path)?;
    if (w, h) != (dm.width, dm.height) {
        return Err(Error::ShapeMismatch(format!(
            "mask {w}x{h} does not match depth map {}x{}",
            dm.width, dm.height
        )));
    }
    for y in 0..h {
        for x in 0..w {
            if !fg[y * w + x] {
                dm.set_invalid(x, y);
            }
        }
    }
    Ok(())
}

/// Parses "X,Y" into a pair of positive integers (clap value parser).
pub fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected X,Y — got {s:?}"));
    }
    let a = parts[0].trim().parse::<usize>().map_err(|e| e.to_string())?;
    let b = parts[1].trim().parse::<usize>().map_err(|e| e.to_string())?;
    if a == 0 || b == 0 {
        return Err("both values must be positive".into());
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_preserves_invalid_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dm.pfm");
        let mut dm = DepthMap::from_fn(4, 3, |x, y| 100.0 + (x + 4 * y) as f64);
        dm.set_invalid(2, 1);
        write_depthmap_pfm(&path, &dm).unwrap();
        let back = read_depthmap_pfm(&path).unwrap();
        assert_eq!((back.width, back.height), (4, 3));
        assert!(!back.is_valid(2, 1));
        for y in 0..3 {
            for x in 0..4 {
                if (x, y) != (2, 1) {
                    assert_eq!(back.get(x, y), dm.get(x, y) as f32 as f64);
                }
            }
        }
    }

    #[test]
    fn pair_parser_accepts_and_rejects() {
        assert_eq!(parse_pair("64,48").unwrap(), (64, 48));
        assert_eq!(parse_pair(" 3 , 5 ").unwrap(), (3, 5));
        assert!(parse_pair("64").is_err());
        assert!(parse_pair("0,5").is_err());
        assert!(parse_pair("a,b").is_err());
    }
}
