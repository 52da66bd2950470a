//! Forensic statistics for detecting wash trading in exchange trade tapes.
//!
//! The detectors work on per-exchange, per-pair groups of trades:
//! first-digit conformity ([`benford`]), clustering at round sizes
//! ([`clustering`]) and power-law tails ([`tail`]). The [`wash`] module
//! estimates wash volume against a benchmark fitted on regulated exchanges,
//! and [`verdict`] combines the test outcomes per exchange. [`synth`]
//! generates labelled synthetic tapes for validation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(
    test,
    allow(
        clippy::approx_constant,
        clippy::excessive_precision,
        clippy::needless_range_loop
    )
)]

pub mod battery;
pub mod benford;
pub mod clustering;
pub mod error;
pub mod fixed;
pub mod ingest;
pub mod report;
pub mod seed;
pub mod stats;
pub mod summary;
pub mod synth;
pub mod tail;
pub mod trade;
pub mod verdict;
pub mod wash;

pub use error::{Error, Result};
pub use fixed::{Amount, Fixed8, Price};
pub use trade::{PairRegistry, PairSpec, Trade};
