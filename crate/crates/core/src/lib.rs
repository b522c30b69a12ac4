//! Two-stage bounding-box annotation.
//!
//! A small share of every video sequence is annotated by hand, a detector
//! fine-tuned on it proposes boxes for the rest, and a human only corrects
//! those proposals. The crate covers each piece of that workflow:
//!
//! - [`geometry`]: boxes and IoU.
//! - [`dataset`]: COCO and Pascal VOC input and output, sequence metadata.
//! - [`metrics`]: greedy matching, precision and recall, AP and mAP.
//! - [`workload`]: operation counts and annotation time for a split.
//! - [`split`]: per-sequence splits, quality curves, sweeps and the optimum.
//! - [`campaign`]: the event-sourced annotation state machine.
//! - [`api`] and [`cli`]: the HTTP service and command-line front end.
//! - [`synthetic`]: seeded datasets and proposals for experiments.

pub mod api;
pub mod campaign;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod events;
pub mod geometry;
pub mod metrics;
pub mod split;
pub mod synthetic;
pub mod workload;
