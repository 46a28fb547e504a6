//! Estimation and mapping of fine particulate (PM2.5) concentration from
//! 1 km satellite aerosol optical depth and gridded meteorology.
//!
//! The crate follows the three stages of the workflow:
//!
//! * [`preprocess`]: humidity correction and outlier screening of station
//!   PM2.5, windowed AOD extraction with QA probabilities, Aqua/Terra
//!   merging, PBLH normalization and meteorological feature derivation.
//! * [`models`]: linear models and decision-tree ensembles, metrics,
//!   cross-validation, gain importance and feature ablation.
//! * [`deploy`]: grid-wide prediction (quasi-stations), fusion with ground
//!   stations by kriging, and daily/monthly/yearly maps.
//!
//! [`geostat`] provides variograms and kriging, [`io`] the on-disk formats
//! and a synthetic scene generator with a known ground truth.

pub mod datamodel;
pub mod deploy;
pub mod error;
pub mod geostat;
pub mod io;
pub mod linalg;
pub mod models;
mod par;
pub mod preprocess;

pub use error::{Error, Result};
