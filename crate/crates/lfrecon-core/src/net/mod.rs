//! From-scratch dense-block EPI regressor.
//!
//! [`real`] abstracts the scalar type (f32 for speed, f64 for
//! finite-difference verification), [`tensor`]/[`layers`] provide the
//! building blocks with exact hand-derived backward passes, [`model`]
//! assembles the dense-block architecture, and [`train`] implements the
//! SGD loop, label normalization, and depth-map inference.

pub mod layers;
pub mod model;
pub mod real;
pub mod tensor;
pub mod train;

pub use model::{FaceLfNet, NetConfig};
pub use real::Real;
pub use tensor::{Mat, Tensor4};
pub use train::{
    euclidean_loss, infer_depthmaps, train, TrainConfig, TrainReport, TrainingSet,
};
