//! Seasonal temperature forecasting on lat-lon grids with circular
//! convolution UNet and UNet++ models.
//!
//! The crate covers the whole pipeline: gridded data and calendars
//! ([`grid`]), the CGT file format and a synthetic climate generator
//! ([`dataio`]), temporal input stacking ([`stacking`]), the neural
//! network kernels ([`nn`]), model assembly and checkpoints ([`model`]),
//! training and fine-tuning ([`training`]), and forecast verification
//! ([`evaluation`]).

pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod model;
pub mod nn;
pub mod stacking;
pub mod training;

pub use error::{Error, Result};
