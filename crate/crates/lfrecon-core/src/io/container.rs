//! Light field container: a directory of 8-bit PNG sub-views named
//! `view_{vv}_{uu}.png` (zero-padded, v row-major) plus a `meta.json`
//! describing angular/spatial resolution and the camera rig.
//!
//! Radiance is quantized to 8 bits per channel on write
//! (`round(clamp(v)·255)`); reading maps back to `k/255`. A light field
//! whose samples already lie on that lattice round-trips bitwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::jsonfmt;
use crate::lightfield::{CameraRig, Image, LightField};

/// Contents of a container's `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerMeta {
    /// (U, V): views per row, view rows.
    pub angular_res: (usize, usize),
    /// (X, Y): pixels per row, pixel rows.
    pub spatial_res: (usize, usize),
    pub focal_px: f64,
    pub baseline: f64,
    pub focus_depth: f64,
    pub principal_point: (f64, f64),
    pub epi_scale_f: f64,
}

impl ContainerMeta {
    pub fn new(lf: &LightField, rig: &CameraRig) -> Self {
        ContainerMeta {
            angular_res: lf.angular_res(),
            spatial_res: lf.spatial_res(),
            focal_px: rig.focal_px,
            baseline: rig.baseline,
            focus_depth: rig.focus_depth,
            principal_point: rig.principal_point,
            epi_scale_f: rig.epi_scale_f,
        }
    }

    pub fn rig(&self) -> CameraRig {
        CameraRig {
            focal_px: self.focal_px,
            baseline: self.baseline,
            focus_depth: self.focus_depth,
            principal_point: self.principal_point,
            epi_scale_f: self.epi_scale_f,
        }
    }
}

/// `round(clamp(v)·255)` — the container's radiance quantizer.
#[inline]
pub fn quantize_unit(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Inverse map of [`quantize_unit`] onto the 8-bit lattice.
#[inline]
pub fn dequantize_unit(k: u8) -> f32 {
    k as f32 / 255.0
}

/// Path of one sub-view image inside `dir`.
pub fn view_path(dir: &Path, v: usize, u: usize) -> PathBuf {
    dir.join(format!("view_{v:02}_{u:02}.png"))
}

/// Writes `meta.json` plus one PNG per sub-view into `dir` (created if
/// missing).
pub fn write_container(dir: impl AsRef<Path>, lf: &LightField, rig: &CameraRig) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = ContainerMeta::new(lf, rig);
    jsonfmt::write_file(dir.join("meta.json"), &meta)?;

    let (width, height) = lf.spatial_res();
    let (n_u, n_v) = lf.angular_res();
    for v in 0..n_v {
        for u in 0..n_u {
            let samples = lf.view_samples(v, u)?;
            let bytes: Vec<u8> = samples.iter().map(|&s| quantize_unit(s)).collect();
            let img = image::RgbImage::from_raw(width as u32, height as u32, bytes)
                .expect("buffer length matches view dimensions");
            let path = view_path(dir, v, u);
            img.save(&path).map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(&path, io),
                other => Error::Image(other),
            })?;
        }
    }
    Ok(())
}

/// Reads a container directory back into a light field and rig.
pub fn read_container(dir: impl AsRef<Path>) -> Result<(LightField, CameraRig)> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    if !meta_path.is_file() {
        return Err(Error::MissingArtifact(meta_path));
    }
    let meta: ContainerMeta = jsonfmt::read_file(&meta_path)?;
    let (n_u, n_v) = meta.angular_res;
    let (width, height) = meta.spatial_res;
    if n_u == 0 || n_v == 0 || width == 0 || height == 0 {
        return Err(Error::MalformedFile {
            format: "container",
            detail: format!(
                "meta.json declares empty dimensions: angular {n_u}x{n_v}, spatial {width}x{height}"
            ),
        });
    }

    let mut views: Vec<Image> = Vec::with_capacity(n_v * n_u);
    for v in 0..n_v {
        for u in 0..n_u {
            let path = view_path(dir, v, u);
            if !path.is_file() {
                return Err(Error::MissingArtifact(path));
            }
            let img = image::open(&path)?.into_rgb8();
            if (img.width() as usize, img.height() as usize) != (width, height) {
                return Err(Error::MalformedFile {
                    format: "container",
                    detail: format!(
                        "{} is {}x{}, meta.json declares {}x{}",
                        path.display(),
                        img.width(),
                        img.height(),
                        width,
                        height
                    ),
                });
            }
            let data: Vec<f32> = img.into_raw().iter().map(|&k| dequantize_unit(k)).collect();
            views.push(Image::from_data(width, height, data)?);
        }
    }
    let lf = LightField::from_views(n_v, n_u, width, height, |v, u| {
        views[v * n_u + u].clone()
    })?;
    Ok((lf, meta.rig()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::Rng;

    /// Light field whose samples sit exactly on the 8-bit lattice.
    fn lattice_lf(n_v: usize, n_u: usize, w: usize, h: usize, seed: u64) -> LightField {
        let mut rng = derive_rng(seed, "container-test");
        let n = n_v * n_u * h * w * 3;
        let samples: Vec<f32> = (0..n).map(|_| dequantize_unit(rng.gen())).collect();
        LightField::from_samples(n_v, n_u, w, h, samples).unwrap()
    }

    #[test]
    fn quantizer_inverts_on_lattice() {
        for k in 0..=255u8 {
            assert_eq!(quantize_unit(dequantize_unit(k)), k);
        }
        assert_eq!(quantize_unit(-0.2), 0);
        assert_eq!(quantize_unit(1.7), 255);
    }

    #[test]
    fn round_trip_bitwise_on_lattice_samples() {
        let dir = tempfile::tempdir().unwrap();
        let lf = lattice_lf(3, 3, 8, 6, 42);
        let rig = CameraRig::default_for_res(8, 6);
        write_container(dir.path(), &lf, &rig).unwrap();
        let (back, back_rig) = read_container(dir.path()).unwrap();
        assert_eq!(lf.samples(), back.samples());
        assert_eq!(rig, back_rig);
        // View files follow the v-row-major naming.
        assert!(dir.path().join("view_02_01.png").is_file());
        assert!(dir.path().join("meta.json").is_file());
    }

    #[test]
    fn missing_view_reported_as_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let lf = lattice_lf(3, 3, 8, 6, 7);
        let rig = CameraRig::default_for_res(8, 6);
        write_container(dir.path(), &lf, &rig).unwrap();
        std::fs::remove_file(dir.path().join("view_01_02.png")).unwrap();
        assert!(matches!(
            read_container(dir.path()),
            Err(Error::MissingArtifact(p)) if p.ends_with("view_01_02.png")
        ));
    }

    #[test]
    fn missing_meta_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_container(dir.path()),
            Err(Error::MissingArtifact(p)) if p.ends_with("meta.json")
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let lf = lattice_lf(3, 3, 8, 6, 9);
        let rig = CameraRig::default_for_res(8, 6);
        write_container(dir.path(), &lf, &rig).unwrap();
        // Overwrite one view with a wrong-size image.
        let bad = image::RgbImage::new(4, 4);
        bad.save(dir.path().join("view_00_00.png")).unwrap();
        assert!(matches!(
            read_container(dir.path()),
            Err(Error::MalformedFile { format: "container", .. })
        ));
    }
}
