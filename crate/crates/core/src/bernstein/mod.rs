//! Averaged Bernstein polynomials, the intervals where two of them separate,
//! and spacing analysis of one-dimensional designs.

mod intervals;
mod operator;
mod pipeline;
mod spacing;

pub use intervals::{b_p_intervals, total_length};
pub use operator::{bernstein, bernstein_error, fit_constant, BernsteinError, BernsteinOperator};
pub use pipeline::{calibrated_constant, separation_instance, DesignKind, SeparationCheck, SeparationInstance, SeparationSchedule, SmoothCurve};
pub use spacing::{spacing_audit, DesignSpacing, SpacingAudit};
