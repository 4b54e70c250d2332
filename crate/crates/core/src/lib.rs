//! Tracking the spatiotemporal evolution of landslide scars through NDVI
//! frame sequences.
//!
//! Multi-temporal NDVI rasters are turned into an ordered frame sequence
//! ([`sequence`]), a scar is initialised from prompt points on frame 0 and
//! propagated forward through mask memory ([`tracker`]), corrections are
//! applied by adding prompts at any intermediate frame, and the resulting
//! mask sequence feeds accuracy metrics ([`metrics`]) and evolution
//! analytics ([`analysis`]).

pub mod analysis;
pub mod error;
pub mod metrics;
pub mod raster;
pub mod sequence;
pub mod store;
pub mod synth;
pub mod tracker;

pub use error::{Error, Location, Result};
pub use raster::{BinaryMask, GeoGrid, GridTemplate, NdviFrame, SpectralFrame};
pub use sequence::VideoSequence;
pub use tracker::{Connectivity, Polarity, PromptPoint, TrackSession, TrackerParams};
