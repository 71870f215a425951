//! Optimal liquidation of a multi-asset portfolio across a lit exchange with
//! linear temporary impact and a dark pool whose orders fill at Poisson times.
//!
//! The value function is `x^T C(t) x`, where `C` solves a matrix Riccati-type
//! equation backward from the horizon. [`solver`] computes `C` for a finite
//! terminal penalty and its limit under the liquidation constraint,
//! [`strategy`] turns it into feedback controls, [`sim`] simulates the
//! controlled jump process and [`checks`] holds numerical oracles for the
//! structural properties of the solution.

pub mod linalg;
pub mod market;
pub mod solver;
pub mod strategy;
pub mod sim;
pub mod checks;
pub mod config;
pub mod cli;
