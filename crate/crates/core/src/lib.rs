//! Learning with retrospection: soft-label self-distillation for small
//! classifiers, built on a minimal reverse-mode autodiff tape.
//!
//! ```
//! use retrolearn::data::gaussian_blobs;
//! use retrolearn::trainer::{train, Method, TrainConfig};
//!
//! let (tr, te) = gaussian_blobs(20, 3, 2, 4.0, 7).unwrap();
//! let config = TrainConfig {
//!     method: Method::Lwr,
//!     hidden: vec![16],
//!     epochs: 4,
//!     interval: 2,
//!     tau: 5.0,
//!     ..TrainConfig::default()
//! };
//! let report = train(&config, &tr, &te).unwrap();
//! assert_eq!(report.commits, 2);
//! ```

// `!(x > 0.0)` is used on purpose so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod retrospection;
pub mod trainer;

pub use error::{Error, Result};
