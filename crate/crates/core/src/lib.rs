//! Query-aware proposal filtering.
//!
//! A detector emits many boxes ranked only by class confidence. This crate
//! learns a per-box relatedness score against a text query, multiplies it
//! with the detector confidence and uses the product as the NMS criterion,
//! so proposals the query talks about survive the filtering step.
//!
//! The crate is `no_std` (with `alloc`). File formats, the command-line
//! tool and thread-level parallelism live in the `qnms` companion crate.
//!
//! Module map:
//!
//! - [`geometry`]: boxes, area and IoU.
//! - [`data`]: detections, queries and word-embedding tables.
//! - [`params`] and [`scorer`]: the relatedness network, forward and backward.
//! - [`suppression`]: confidence pre-filter, score fusion, greedy NMS, top-N.
//! - [`pseudo_gt`]: foreground sets and per-box training targets.
//! - [`loss`], [`optim`] and [`training`]: losses, pair sampling, Adam, the training loop.
//! - [`evaluation`]: recall of critical objects, top-1 hit rate, Pr@X.
//! - [`synthetic`]: generated datasets used by tests, benches and demos.
#![no_std]

extern crate alloc;

pub mod data;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod linalg;
pub mod loss;
pub mod optim;
pub mod params;
pub mod pseudo_gt;
pub mod scorer;
pub mod suppression;
pub mod synthetic;
pub mod training;

mod rng;

pub use data::{Detection, EmbeddingTable, QueryRecord};
pub use error::{Error, Result};
pub use geometry::BBox;
pub use linalg::Matrix;
pub use params::ScorerParams;
