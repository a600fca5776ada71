//! File formats: PFM depth maps, PLY meshes/pointclouds, light field
//! containers, model weights, dataset/run manifests, and the shared
//! full-precision JSON writer they all use.

pub mod container;
pub mod jsonfmt;
pub mod manifest;
pub mod pfm;
pub mod ply;
pub mod weights;

pub use container::{read_container, write_container, ContainerMeta};
pub use manifest::{config_hash, DatasetEntry, DatasetManifest, RunManifest, StageRecord};
pub use pfm::{read_pfm, write_pfm};
pub use ply::{read_ply_vertices, write_pointcloud_ply, write_surface_ply};
pub use weights::{TensorDecl, TensorStore, WeightsFile};
