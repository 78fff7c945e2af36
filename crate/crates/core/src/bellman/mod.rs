//! Hamiltonian and Bellman residuals for smooth value candidates, the
//! dynamic programming check over finite control sets, and the LQ graphon
//! benchmark with its Riccati oracle.

mod coupling;
mod dpp;
mod lq;
mod residual;

pub use coupling::LiftedCoupling;
pub use dpp::{dpp_check, ContinuationNoise, DppReport};
pub use lq::{build_lq_benchmark, LqBenchmark, LqParams};
pub use residual::{
    bellman_residual, hamiltonian, terminal_residual, verify_policy, ActionSearch, BellmanResidual,
    CandidateValue, VerificationReport,
};
