//! Financial-ledger screening pipeline: chart-of-accounts harmonization,
//! monthly balance aggregation, image encoding of 12-month histories, and a
//! small convolutional classifier over those images.

pub mod chart;
pub mod cnn;
pub mod error;
pub mod image;
pub mod ledger;

pub use error::{Error, Result};
