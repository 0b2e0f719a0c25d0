//! The binary observation model: links, true response surfaces, simulated
//! datasets, likelihoods, and distances between response functions.

mod dataset;
mod divergence;
mod link;

pub use dataset::{simulate, CovariateMeasure, Dataset, Design, DesignSpec, TrueResponse};
pub use divergence::{
    bernoulli_kl, fit_kl_moment_constant, joint_density_l1, kl_divergence, l1_distance, kl_moment_ratio, log_likelihood,
    MeasureKind, Quadrature,
};
pub use link::{clamp_probability, LinkFunction, PROB_CLAMP};
