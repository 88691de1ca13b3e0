//! Evolution of generalist neural-network controllers over two-dimensional
//! morphology spaces.
//!
//! The crate is organised around the training loop in [`engine`]: every
//! generation a [`schedules::Schedule`] picks the morphology the population is
//! evaluated on, [`xnes`] updates the search distribution over controller
//! weights ([`neuro`]), and the best sample of the generation is scored on a
//! validation grid ([`morphospace`]). Improvements are archived as generalists.
//! The [`bandit`] schedule learns which morphologies help generalisation, and
//! [`evalstats`] scores finished runs on training and testing grids and
//! compares batches with a Mann-Whitney U test.
//!
//! All costs are minimised.

pub mod bandit;
pub mod config;
pub mod engine;
pub mod envs;
pub mod error;
pub mod evalstats;
pub mod expm;
pub mod morphospace;
pub mod neuro;
pub mod schedules;
pub mod seed;
pub mod xnes;

pub use error::{Error, Result};
