//! Conditional min-entropy estimation for PUF-based key storage.
//!
//! The crate covers the whole chain from raw ring-oscillator frequencies to
//! security figures for a code-offset fuzzy extractor:
//!
//! - [`dataset`]: frequency parsing, response derivation and Bit-Alias estimation.
//! - [`codes`]: repetition and BCH block codes, codewords and coset leaders.
//! - [`entropy`]: IID/IND min-entropy, (n-k) bounds and the exact average
//!   conditional min-entropy of a block.
//! - [`grouping`]: the grouping bound for codes too large for exact evaluation.
//! - [`keyrank`]: enrollment simulation and key rank of an optimal guesser.

pub mod codes;
pub mod dataset;
pub mod entropy;
mod error;
pub mod grouping;
pub mod keyrank;
pub mod numeric;

pub use error::{Error, Result};
