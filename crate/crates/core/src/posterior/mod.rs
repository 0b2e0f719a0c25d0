//! Posterior sampling under the scaled Gaussian-process prior with
//! hyperpriors on `τ` and `λ`, plus summaries of the resulting draws.

mod chain;
mod prior;
mod summary;

pub use chain::{run_chain, BlockAcceptance, ChainConfig, ChainDiagnostics, ChainOutput, ScalarDiagnostic, XiSampler};
pub use prior::{LadderSpec, LambdaPrior, PriorModel, PriorSpec, RungBasis, TauPrior, TruncationGate};
pub use summary::{
    posterior_l1_mass, posterior_summary, write_draws_csv, write_draws_json, Band, DrawRecord, PosteriorDraw,
    PosteriorSummary,
};
