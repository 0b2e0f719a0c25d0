//! Gaussian-process priors for binary regression and a lab that checks
//! their posterior consistency by simulation.
//!
//! The model is `P(Y = 1 | X = x) = H(η(x))` with `η` a Gaussian process
//! whose covariance `τ⁻¹σ₀(λs, λt)` carries priors on `τ` and `λ`.
//!
//! ```
//! use gpbinary::experiments::{run_campaign, CampaignId, ExperimentConfig};
//!
//! let report = run_campaign(&ExperimentConfig::default_for(CampaignId::Sampler)).unwrap();
//! assert!(report.passed);
//! ```
//!
//! See the guide in `book/` for a tour of each module.

pub mod bernstein;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod kernels;
pub mod model;
pub mod posterior;
pub mod rkhs;
pub mod rng;
pub mod sieve;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    pub mod kernels {}
    #[doc = include_str!("../../../book/src/rkhs.md")]
    pub mod rkhs {}
    #[doc = include_str!("../../../book/src/model.md")]
    pub mod model {}
    #[doc = include_str!("../../../book/src/posterior.md")]
    pub mod posterior {}
    #[doc = include_str!("../../../book/src/sieve.md")]
    pub mod sieve {}
    #[doc = include_str!("../../../book/src/bernstein.md")]
    pub mod bernstein {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
