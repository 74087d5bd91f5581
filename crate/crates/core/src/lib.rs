//! Preamble-gated engagement decisions for a mobile service robot.
//!
//! The crate is split along the two stages of the pipeline:
//!
//! * Stage I ([`pose`], [`features`], [`gbdt`], [`gate`]) turns tracked 2D
//!   poses and distances into sparse trigger events. A gaze-shift classifier
//!   runs on 2-second windows of head-geometry velocities; proxemic entries
//!   into the personal zone fire when no gaze trigger covers them.
//! * Stage II ([`vlm`]) runs K independent vision-language analyses of each
//!   triggered clip, aggregates them by self-consistency or self-critique,
//!   and picks one of `Approach`, `Leave` or `Probe`.
//!
//! [`sim`] generates synthetic episodes and scripted model responses, and
//! [`replay`] scores complete runs against ground truth.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and the
//! HTTP backend live in the `engage` crate.

#![no_std]
#![forbid(unsafe_code)]
// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod features;
pub mod gate;
pub mod gbdt;
pub mod pose;
pub mod replay;
pub mod sim;
pub mod stats;
pub mod vlm;

pub use features::{FeatureVector, Signal, SignalWindow, Stat};
pub use gate::{GateConfig, TriggerEvent, TriggerKind};
pub use gbdt::{GbdtModel, LabeledSet, TrainConfig};
pub use pose::{Episode, Keypoint, PoseFrame, TrackId};
pub use vlm::{Action, Decision, Intent, Provenance};
