//! Drug-repurposing toolkit over an ontology-labelled compound corpus.
//!
//! Two prediction strategies share one corpus:
//!
//! - [`noir`]: build a reference set of enriched ontology labels for a target
//!   and retrieve new compounds carrying them;
//! - [`factor`]: factorize the compound x target activity matrix with NMF,
//!   optionally regularized by compound fingerprint similarity ([`simkit`]).
//!
//! [`evalbench`] holds the cross-validation protocol and a planted synthetic
//! corpus generator.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evalbench;
pub mod factor;
pub mod noir;
pub mod simkit;

pub use error::{Error, Result};
