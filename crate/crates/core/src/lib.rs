//! Regression to the mean in pre/post studies.
//!
//! The crate is organised around a linear change model with measurement
//! error:
//!
//! - [`model`]: exact population moments and slopes of the crude, Berry and
//!   Blomqvist estimators.
//! - [`simulate`]: seeded, replicate-parallel sampling from the model.
//! - [`estimators`]: the same slopes computed on a sample.
//! - [`inference`]: percentile bootstrap, repeatability interval for the
//!   `beta = 0` null, permutation test.
//! - [`experiments`]: simulation studies and the full dataset analysis.
//! - [`io`]: CSV and JSON formats.
//!
//! ```
//! use rtm_core::model::{crude_slope_population, PopulationParams};
//!
//! let p = PopulationParams::systolic(0.0);
//! let bc = crude_slope_population(&p);
//! assert!((bc - (p.repeatability() - 1.0)).abs() < 1e-12);
//! ```

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod model;
pub mod simulate;

pub use error::{Result, RtmError};
pub use estimators::{ErrorSpec, SlopeEstimate, SlopeMethod};
pub use model::PopulationParams;
pub use simulate::{derive_stream, ObservedSample, SeedSpec, Stream};
