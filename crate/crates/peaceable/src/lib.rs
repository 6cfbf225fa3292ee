//! Peaceable self-stabilizing Byzantine pulse synchronization.

pub mod accept;
pub mod accept_harness;
pub mod adversary;
pub mod bunny;
pub mod checker;
pub mod config;
pub mod engine;
pub mod hoppelpopp;
pub mod matrix;
pub mod network;
pub mod node;
pub mod params;
pub mod phase_king;
pub mod sim;
pub mod time;
pub mod trace;
pub mod trails;
