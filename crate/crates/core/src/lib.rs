//! Control engine and simulator for a bike-powered kinetic installation.
//!
//! Pedal pulses from one or more stationary bikes drive three fan-agitated
//! leaves. The pipeline, stepped at a fixed tick, is:
//!
//! ```text
//! pedal pulses -> sync -> scheduler -> grammar -> plant commands
//!                                                   |
//!                              power settle <-------+--> leaf dynamics
//! ```
//!
//! [`harness`] assembles the pipeline into an [`harness::Engine`], runs
//! scenario files deterministically and serves the live socket protocol.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::large_enum_variant)]

pub mod grammar;
pub mod harness;
pub mod plant;
pub mod power;
pub mod scheduler;
pub mod sync;
