//! Simulation and estimation toolkit for exposure and confounder measurement
//! error under probabilistic exchangeability.
//!
//! The modules build on each other bottom-up:
//!
//! * [`model`] and [`dataset`]: scenario and data types
//! * [`rng`] and [`datagen`]: deterministic data generation
//! * [`regress`]: OLS, WLS and logistic IRLS
//! * [`exchprob`]: exchangeability-probability tables
//! * [`bias`]: bias factors and coefficient decompositions
//! * [`calibrate`] and [`estimate`]: regression calibration and effect estimators
//! * [`sim`]: Monte Carlo studies and table reproduction

pub mod bias;
pub mod calibrate;
pub mod datagen;
pub mod dataset;
pub mod estimate;
pub mod exchprob;
pub mod fmt;
pub mod model;
pub mod regress;
pub mod rng;
pub mod sim;
