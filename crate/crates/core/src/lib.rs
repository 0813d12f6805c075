//! Neural deferred rendering with order-independent transparency.
//!
//! The pipeline rasterizes a scene into an opaque G-buffer plus one
//! transparency buffer per transparent object, feeds them to a neural
//! renderer whose transparency blending is permutation invariant by
//! construction, and verifies everything against a Monte Carlo path tracer
//! and classical alpha-compositing references.

pub mod autodiff;
pub mod camera;
pub mod geom;
pub mod glassnet;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod oit;
pub mod pathtrace;
pub mod raster;
pub mod rng;
pub mod scene;

pub use camera::Camera;
pub use image::{CoverageMask, RadianceImage};
pub use scene::{Scene, SceneInstance};
