//! Coefficient models, policies, particle ensembles, the Euler–Maruyama
//! simulator with empirical closure, and assumption/stability probes.

mod ensemble;
mod model;
mod policy;
mod polynomial;
mod probes;
mod simulate;

pub use ensemble::ParticleEnsemble;
pub use model::{ActionSpace, DeclaredConstants, MeanField, Model};
pub use policy::{FeedbackMap, OpenLoopTable, Policy};
pub use polynomial::{
    CostTerms, DriftTerms, MeanReversionParams, PolynomialModel, PolynomialSpec, VolatilityTerms,
};
pub use probes::{
    law_invariance_test, moment_bound, moment_check, stability_constant, stability_probe,
    strengthened_moment_bound, validate_coefficients, AssumptionReport, LawInvarianceReport,
    MomentCheck, PermutationScheme, QuantileMap, StabilityReport,
};
pub(crate) use simulate::{run, Interaction};
pub use simulate::{
    cost, label_std_error, simulate, split_cost, CostEstimate, Diagnostics, SimParams,
    SimulationResult, BLOW_UP,
};

/// Action-law collection: per-label empirical measures on `A ⊂ ℝ^q`.
pub type ActionLawCollection = crate::measure_space::MeasureCollection;
