//! Fundus lesion tooling.
//!
//! The crate covers the data side of a lesion instance-segmentation workflow
//! on retinal photographs:
//!
//! 1. [`preprocess`] normalizes a fundus photograph and its lesion mask with
//!    one shared geometric transform (crop, circularize, Gaussian blend, resize,
//!    mask dilation).
//! 2. [`instances`] splits a multi-lesion mask into per-instance annotations.
//! 3. [`augment`] applies seeded flips, 90° rotations, translations and scalings
//!    jointly to images and instance masks.
//! 4. [`dataset`] shuffles and splits images, reads and writes the annotation
//!    manifest, and renders synthetic fundus fixtures.
//! 5. [`evaluate`] computes IoU, greedy matching, per-image AP and mAP with the
//!    lesion-type prediction filter.
//! 6. [`modelconfig`] holds the detector training hyperparameters as a JSON
//!    document.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod instances;
pub mod modelconfig;
pub mod preprocess;
pub mod raster;
pub mod rle;
pub mod rng;

pub use error::{Error, Result};
pub use raster::{BBox, BinaryMask, Raster};
pub use rle::Rle;
