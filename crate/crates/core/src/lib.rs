//! Compressed-CSI prediction for massive MIMO.
//!
//! The crate implements the full chain
//!
//! ```text
//! channel simulator ─▶ linear codec f_e ─▶ forecaster f_p ─▶ codec f_d ─▶ ZF precoding
//!      H_t                  s_t            e_t … e_{t+P-1}       Ĥ            sum rate
//! ```
//!
//! with a spectral-temporal graph forecaster ([`stemgnn`]) and Elman / LSTM
//! baselines ([`recurrent`]) behind one training and evaluation interface.
//! All models carry hand-written reverse passes ([`diff`]) checked against
//! central finite differences.
//!
//! Runnable walkthroughs live in `crates/core/examples/`; the `csipred`
//! binary drives staged experiments from a JSON config.

pub mod channel;
pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod config;
pub mod dataset;
pub mod diff;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod graph;
pub mod numerics;
pub mod recurrent;
pub mod report;
pub mod stemgnn;
pub mod tensor_io;

pub use error::{Error, Result};
