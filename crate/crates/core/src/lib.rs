//! Trace-driven simulator of an edge-assisted real-time video analytics
//! pipeline.
//!
//! A device decides per frame whether to reuse the last result, run a local
//! tracker, or offload the frame (whole, or as ROI blocks) to an edge
//! server. A double DQN learns that decision; four contextual ε-greedy
//! bandits pick the detection model and resolution for each offloaded block.
//!
//! - [`trace`]: synthetic scene and bandwidth traces, CSV persistence
//! - [`env`]: latency, accuracy, success and reward of a slot
//! - [`nn`], [`ddqn`]: Q-network and the double-DQN agent
//! - [`cmab`]: contextual bandits for block configurations
//! - [`orchestrator`]: joint training, baselines, evaluation, comparison
//! - [`config`], [`checkpoint`]: run configuration and agent persistence

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cmab;
pub mod config;
pub mod ddqn;
pub mod env;
mod error;
pub mod fmt;
pub mod nn;
pub mod orchestrator;
pub mod par;
pub mod rng;
pub mod trace;

pub use error::{Error, Result};
pub use par::ExecMode;
