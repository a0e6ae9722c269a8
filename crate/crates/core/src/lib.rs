//! Terrain point-cloud hole filling.
//!
//! A cloud is split into a smooth tensor-product B-spline surface (the
//! low-frequency part) and a raster of signed offsets from that surface (the
//! high-frequency part). Holes in the raster are filled by a Poisson solve
//! guided by patch-matched gradients, and new points are synthesized by
//! sampling the filled raster back onto the surface.
//!
//! The stages live in their own modules:
//!
//! * [`pointcloud`]: container, file IO, k-d index, normals, OBB, voxel downsampling
//! * [`bspline`]: surface evaluation, least-squares fitting, point projection
//! * [`heightfield`]: signed projection, adaptive resolution, rasterization
//! * [`inpaint2d`]: gradient-domain patch match and Poisson reconstruction
//! * [`reconstruct`]: Halton sampling and point synthesis
//! * [`metrics`]: GPSNR, NSHD, NRMSE and error maps
//! * [`pipeline`]: end-to-end orchestration and run reports

pub mod bspline;
pub mod error;
pub mod heightfield;
pub mod inpaint2d;
pub mod metrics;
pub mod pipeline;
pub mod pointcloud;
pub mod reconstruct;

pub use error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
