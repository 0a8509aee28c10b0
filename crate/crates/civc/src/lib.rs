//! Desk-scale laboratory for class-incremental video classification.
//!
//! Classes arrive in sessions: a model first learns a handful of action
//! classes, then must absorb new ones without revisiting more than a small
//! replay memory of the old data. This crate packs the whole experimental
//! loop — data, model, losses, memory, training, reporting — into a form
//! that runs in seconds on a laptop CPU while keeping the moving parts of
//! the full-scale problem intact and individually testable.
//!
//! The pieces:
//!
//! * [`dataio`] — a procedurally generated video benchmark whose classes
//!   are (shape, motion) pairs, with each motion paired with its exact
//!   temporal reversal so appearance alone cannot separate them, plus the
//!   session splitter and segment-based clip sampler.
//! * [`model`] — a small hand-rolled convolutional network with temporal
//!   channel shift, its feature-map output, and a correlation-based motion
//!   estimator over feature cells. Forward and backward passes are written
//!   out explicitly; there is no autograd underneath.
//! * [`distill`] — the loss family for learning new classes while staying
//!   close to the frozen previous model: cross-entropy, soft classifier
//!   transfer on old logits, and feature transfer either fused over the
//!   whole map or decomposed into spatial/temporal components (by pooling
//!   or along motion trajectories).
//! * [`memory`] — the replay store: exemplar selection near class means
//!   and dual-granularity compression of stored videos down to adaptively
//!   selected keyframes.
//! * [`harness`] — session-by-session benchmark runner: trains the base
//!   model, walks the incremental sessions with the configured transfer
//!   terms, evaluates after each step, and serializes results.
//! * [`report`] — aggregation of finished runs into comparison tables and
//!   accuracy-curve charts.
//!
//! Everything is deterministic given the experiment seed: see [`seeds`].
//! Configuration lives in [`config`]; errors in [`error`].
//!
//! The `examples/` directory walks through each capability in isolation;
//! the `civc` binary drives full runs (`run`), preset sweeps (`ablation`),
//! and result aggregation (`report`).

pub mod cli;
pub mod config;
pub mod dataio;
pub mod distill;
pub mod error;
pub mod harness;
pub mod memory;
pub mod model;
pub mod report;
pub mod seeds;

pub use config::{ExperimentConfig, Preset, TransferMode};
pub use error::{Error, Result};
