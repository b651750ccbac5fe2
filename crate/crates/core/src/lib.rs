//! Progressive homography alignment.
//!
//! A correlation-regression network estimates affine, perspective and full
//! homography parameters between two images. It is trained on synthetic
//! pairs in stages (affine block first, then the perspective and homography
//! heads against a frozen affine block) with transformed-grid losses, and is
//! scored with the PCK keypoint metric.
//!
//! The modules follow the data flow:
//!
//! * [`geometry`]: parameter vectors, point/grid transforms, random sampling
//! * [`imaging`]: images, bilinear inverse warping, overlays, PNG I/O
//! * [`datagen`]: synthetic training triplets and on-disk datasets
//! * [`features`] and [`regression`]: the network and its forward pipeline
//! * [`loss`], [`training`], [`checkpoint`]: objective, optimizer, persistence
//! * [`eval`]: PCK and report tables
//! * [`cli`]: the `homalign` command line

pub mod checkpoint;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod imaging;
pub mod loss;
pub mod nn;
pub mod regression;
pub mod texture;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{AffineParams, Grid, HomographyParams, PerspectiveParams, Point, TransformRanges};
pub use imaging::Image;
pub use loss::{GroundTruth, LossBreakdown, LossWeights};
pub use regression::{FrozenSet, ModelState, PipelineOutput};
pub use training::{Stage, TrainConfig, TrainReport};

/// The crate's deterministic random source.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    <Rng as rand::SeedableRng>::seed_from_u64(seed)
}
