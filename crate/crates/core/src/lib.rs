//! Collective friendship prediction across composite social networks.
//!
//! The crate fits mixed-membership stochastic blockmodels jointly over
//! several overlapping network layers. Each user carries a latent feature
//! vector shared by all layers; each layer maps those features to Dirichlet
//! priors over its own communities and to a prior on its community
//! compatibility matrix. Single-layer and merged-layer blockmodels are
//! provided as baselines, together with the hold-out ranking protocol used
//! to compare them.

pub mod checkpoint;
pub mod cli;
pub mod comfp;
pub mod error;
pub mod eval;
pub mod latent;
pub mod matrix;
pub mod mmsb;
pub mod network;
pub mod numerics;
pub mod optim;
pub mod synth;

pub use error::{Error, Result};
