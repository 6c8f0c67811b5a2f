//! Scene representation built from latent-coded deformable mesh primitives.
//!
//! A scene is voxelized from a point cloud; every occupied voxel gets an
//! enclosed triangle-mesh primitive whose vertices are decoded from a
//! unit-norm 8-dim latent code and whose vertices carry learnable radiance
//! feature vectors. Rendering intersects view rays with the primitives,
//! interpolates features barycentrically, evaluates a small MLP per
//! intersection, and composites front to back, blending hierarchy levels
//! from fine to coarse.
//!
//! The crate is `no_std` + `alloc`: everything here is deterministic,
//! single-threaded math. File formats and the CLI live in the companion
//! `meshfield-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod codec;
pub mod fmath;
pub mod mesh;
pub mod metrics;
pub mod nn;
pub mod radiance;
pub mod raster;
pub mod rng;
pub mod scene;
pub mod train;

pub use autodiff::{Adam, AdamConfig, Tape, Tensor, Var};
pub use rng::Rng;
