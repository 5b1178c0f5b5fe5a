//! Structure-preserving operator inference for constrained second-order
//! mechanical systems `M ẍ + D ẋ + K x + Gᵀλ = B u`, `G x = 0` or `G ẋ = 0`.

pub mod analysis;
pub mod daesolve;
pub mod error;
pub mod fsutil;
pub mod models;
pub mod mtx;
pub mod numkernel;
pub mod opinf;
pub mod pipeline;
pub mod podspace;
pub mod romsolve;

pub use error::{Error, Result};
