//! Exemplar-driven stylization of a 3D face: landmark statistics and a
//! landmark translation network, landmark-guided Laplacian mesh deformation,
//! and texture optimization through a texture-differentiable renderer.

pub mod assets;
pub mod autodiff;
pub mod blob;
pub mod config;
pub mod deform;
pub mod error;
pub mod landmarks;
pub mod mesh;
pub mod pipeline;
pub mod render;
pub mod seed;
pub mod stats;
pub mod style;
pub mod translation;

pub use error::{Error, Result};
