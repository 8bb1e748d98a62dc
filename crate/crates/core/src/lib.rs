//! Tail-risk linkage networks from daily price panels.
//!
//! The crate follows the data through five stages:
//!
//! 1. [`market_data`]: load prices and caps, align calendars, form returns.
//! 2. [`tail`]: rolling historical VaR, expected shortfall and the pairwise
//!    conditional expected shortfall (CoES) matrix.
//! 3. [`network`]: cosine similarity of CoES rows, breakpoint classification
//!    and the signed adjacency matrix.
//! 4. [`risk`]: market-cap weighted systemic score, per-asset contributions
//!    and the negative-similarity ratio.
//! 5. [`drivers`]: regression of the risk series on exogenous covariates
//!    with Newey–West errors.
//!
//! [`synth`] generates one-factor markets for testing, and [`pipeline`]
//! runs the stages against on-disk artifacts.

pub mod drivers;
pub mod error;
pub mod graphml;
pub mod io;
pub mod market_data;
pub mod network;
pub mod pipeline;
pub mod risk;
pub mod synth;
pub mod tail;

pub use error::{Error, Result};
