//! Reduced-complexity simulation of a multilayer perceptron distributed over
//! a wireless sensor network.
//!
//! Each hidden and output neuron lives on its own mote. Activations and error
//! signals travel between motes over links that drop and delay packets
//! according to empirical per-hop models, so training sees stale or missing
//! values.

pub mod channel;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod neural;
pub mod rng;
pub mod stat_models;
pub mod topology;
pub mod trace;
pub mod validation;
