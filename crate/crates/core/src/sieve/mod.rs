//! Sieves of smooth functions, their entropy and prior mass, and the
//! exponentially consistent tests built on separated design points.

mod entropy;
mod membership;
mod separation;
mod tests;

pub use entropy::{covering_number, fit_entropy_exponent, greedy_net, EntropyFit, MultiscaleClass, NetStrategy, PairwiseSup};
pub use membership::{
    growth_feasibility, complement_from_radii, derivative_norms, sieve_complement_mass, sieve_member, sieve_radii, GrowthFeasibility, LambdaTail, SieveMembership, SieveSequences,
    SieveSpec, SIEVE_REL_TOL,
};
pub use separation::{count_separated, separation_problem, SeparationProblem, Separation};
pub use tests::{composite_test, hoeffding_test, CompositeResult, Direction, TestResult};
