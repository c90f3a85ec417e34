//! Robust data-driven predictive control of mixed traffic.
//!
//! Connected vehicles in a platoon of human drivers are controlled either by
//! one centralized controller or by one controller per subsystem (a connected
//! vehicle plus the human-driven vehicles behind it). Each controller predicts
//! from recorded trajectories instead of a model and treats the velocity of
//! the vehicle ahead as a bounded disturbance.

pub mod app;
pub mod config;
pub mod control;
pub mod data;
pub mod disturbance;
pub mod error;
pub mod linalg;
pub mod robust;
pub mod sim;
pub mod traffic;

pub use error::{Error, Result};
