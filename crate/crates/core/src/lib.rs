//! Analytic fixed-point model and Monte Carlo simulator for semi-persistent
//! scheduling of periodic vehicular safety broadcasts.
//!
//! - [`analytic`]: closed-form collision probability, delay and
//!   hidden-terminal packet error ratio.
//! - [`simcore`]: seeded period-stepped simulation of the same protocol on
//!   fully connected and linear-road topologies.
//! - [`harness`]: config files, sweeps, replication statistics, CSV output
//!   and model-vs-simulation comparison.

pub mod analytic;
pub mod harness;
pub mod simcore;
