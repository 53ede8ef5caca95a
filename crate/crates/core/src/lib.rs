//! Fairness-aware dataset curation, Gaussian LLR out-of-distribution scoring
//! for augmentation filtering, and per-age fairness metrics for age
//! prediction.
//!
//! The modules follow the pipeline order: load a [`manifest`], balance it
//! with [`curation`], plan and filter augmentations with [`augmentation`] and
//! [`ood`], then score predictions with [`metrics`].

pub mod augmentation;
pub mod cli;
pub mod config;
pub mod curation;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod ood;
pub mod quantile;
pub mod report;
pub mod sampling;

pub use error::{Error, ErrorKind, Result};
