//! Explainable traffic-flow prediction engine.
//!
//! The pipeline runs in four layers:
//!
//! - [`trajdata`] parses GPS traces and rasterizes them into in/out flow tensors.
//! - [`partition`] clusters road intersections, builds Voronoi cluster regions
//!   and assigns every grid cell to a cluster.
//! - [`predict`] forecasts the next flow frames from a five-frame window.
//! - [`explain`] attributes forecasts to neighbor clusters and to individual
//!   trajectories with Shapley values.
//!
//! [`scenario`] ties the layers together into the documents served by the
//! HTTP service and written by the command line tool.

pub mod config;
pub mod error;
pub mod explain;
pub mod geo;
pub mod grid;
pub mod partition;
pub mod predict;
pub mod scenario;
pub mod seed;
pub mod synth;
pub mod trajdata;

pub use error::{Error, Result};
pub use grid::{Cell, GridSpec};
