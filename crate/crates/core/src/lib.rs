//! Trajectory imputation for acoustic-telemetry fish tracks.
//!
//! Acoustic receivers record presence, not position: a tagged fish is known
//! to be within a receiver's detection radius on its detection days and
//! unknown everywhere else. This crate fills those gaps by simulation:
//!
//! 1. [`ingest`] parses receiver and detection files, collapses detections
//!    to one per fish-day, and splits each fish's record into segments
//!    between consecutive detections.
//! 2. [`movement`] simulates a segment: endpoints drawn around their
//!    receivers, interior days filled by a directed random walk whose
//!    heading noise decays (short gaps) or stays randomized (long gaps).
//! 3. [`likelihood`] scores a simulated trajectory with the joint
//!    log-density of all its draws.
//! 4. [`bootstrap`] repeats simulate-and-score over parameters drawn from
//!    priors and keeps the most probable fraction of the ensemble.
//! 5. [`heatmap`] rasterizes retained ensembles and writes the CSV/PGM
//!    outputs.
//!
//! Everything downstream of ingestion works in a local planar frame in
//! meters ([`geo`]). Runs are reproducible: every bootstrap iteration draws
//! from its own counter-derived RNG stream ([`rng`]), so results are
//! bit-identical for a fixed seed at any worker count.

pub mod bootstrap;
pub mod config;
pub mod error;
pub mod geo;
pub mod heatmap;
pub mod ingest;
pub mod likelihood;
pub mod model;
pub mod movement;
pub mod rng;
pub mod validate;

pub use error::{Error, Result};
