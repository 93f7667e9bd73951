//! Algorithmic core for area-level spatial outcome regression.
//!
//! The crate covers the full modelling pipeline over geographic region
//! graphs: graph construction ([`graph`]), multicollinearity-aware feature
//! selection ([`features`]), positional and locational node encodings
//! ([`encodings`]), message-passing networks with exact reverse-mode
//! gradients ([`nn`] on top of [`autodiff`]), leakage-aware buffered spatial
//! cross-validation ([`cv`]), spatial statistical baselines ([`baselines`]),
//! embedding explainability ([`explain`]), and a deterministic synthetic
//! data generator ([`synth`]).
//!
//! Everything in here is pure computation over in-memory data; file formats
//! and the command-line interface live in the companion `sgnn-cli` crate.
//! The crate is `no_std` (with `alloc`) so the numerical core carries no
//! platform dependencies beyond a float math library.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod baselines;
pub mod cv;
pub mod encodings;
pub mod error;
pub mod explain;
pub mod features;
pub mod graph;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{FoldPlan, Region, RegionGraph};
