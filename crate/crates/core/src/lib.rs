//! Spectral analysis of attribution-based explanations.
//!
//! Explaining every output of a network and normalizing each explanation
//! to unit sum gives a redistribution matrix `R`. Its singular values
//! measure how stable ([`spectral::SpectralSummary::stability`]) and how
//! sensitive ([`spectral::SpectralSummary::sensitivity`]) the explanations
//! are to the readout of the outputs.
//!
//! ```
//! use xai_spectral::explainers::{LrpConfig, Method};
//! use xai_spectral::model::Network;
//! use xai_spectral::numerics::Tensor;
//! use xai_spectral::redistribution::build_redistribution;
//! use xai_spectral::spectral::spectral_summary;
//!
//! let net = Network::mlp(4, &[8], 3, true, 0)?;
//! let x = Tensor::from_vec(vec![0.1, 0.7, 0.4, 0.9]);
//! let r = build_redistribution(&net, &x, &Method::Lrp(LrpConfig::gamma(0.25)))?;
//! let s = spectral_summary(&r)?;
//! assert!((s.ssm - s.sensitivity * s.stability).abs() < 1e-12);
//! # Ok::<(), xai_spectral::Error>(())
//! ```
//!
//! The book in `book/` covers the concepts; its listings run as doc-tests
//! of this crate.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod explainers;
pub mod model;
pub mod numerics;
pub mod redistribution;
pub mod spectral;
pub mod sweep;
pub mod theory;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/redistribution.md")]
    mod redistribution {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/expansion.md")]
    mod expansion {}
    #[doc = include_str!("../../../book/src/lrp.md")]
    mod lrp {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
