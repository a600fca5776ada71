//! Sidecar metadata that makes a PFM depth-map pair self-describing:
//! which rig produced it, and (when known) where its ground truth lives.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lfrecon_core::error::Result;
use lfrecon_core::io::jsonfmt;
use lfrecon_core::lightfield::CameraRig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub rig: CameraRig,
    /// (X, Y) resolution of both maps.
    pub spatial_res: (usize, usize),
    /// "oracle" or "network".
    pub estimator: String,
    /// Light field container the maps were estimated from, relative to this
    /// file's directory.
    pub source: Option<PathBuf>,
    /// Ground-truth depth PFM, relative to this file's directory.
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    /// Foreground mask PNG (255 = foreground), relative to this file's
    /// directory.
    #[serde(default)]
    pub mask: Option<PathBuf>,
    /// Two landmark points on the surface, camera frame, mm.
    #[serde(default)]
    pub landmarks: Option<[[f64; 3]; 2]>,
    /// Landmark separation, mm.
    #[serde(default)]
    pub interocular: Option<f64>,
    /// (min, max) ground-truth depth over the foreground, mm.
    #[serde(default)]
    pub depth_range: Option<(f64, f64)>,
}

impl PairMeta {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        jsonfmt::write_file(path, self)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        jsonfmt::read_file(path)
    }

    /// Resolves one of the stored relative paths against the meta file's
    /// own location.
    pub fn resolve(meta_path: &Path, rel: &Path) -> PathBuf {
        meta_path.parent().unwrap_or_else(|| Path::new(".")).join(rel)
    }
}

/// `<prefix>_h.pfm`, `<prefix>_v.pfm`, `<prefix>_meta.json` for a given
/// output prefix.
pub fn pair_paths(prefix: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let base = prefix.as_os_str().to_string_lossy().to_string();
    (
        PathBuf::from(format!("{base}_h.pfm")),
        PathBuf::from(format!("{base}_v.pfm")),
        PathBuf::from(format!("{base}_meta.json")),
    )
}
