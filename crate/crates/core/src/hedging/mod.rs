//! Quadratic hedging of the production payoff with the EOU asset.

mod closed_forms;
mod model;
mod nested;

pub use closed_forms::{z0m, z_ratio, ClosedForms};
pub use model::{v0, variance_b, Evaluation, HedgeProblem, HedgingModel, VarianceBreakdown};
pub use nested::{
    conditional_moments, delta_from, delta_t, projected_payoff_from, xi_from, xi_t, ConditionalMoments,
    MarketState, NestedMc, NestedMcConfig, UnhedgeableFactor,
};

pub(crate) use nested::inner_integrals;
