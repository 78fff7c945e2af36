//! Smooth measure functionals with closed-form linear functional
//! derivatives, Gateaux and growth probes, and the chain-rule residual along
//! simulated flows.

mod checks;
mod functional;
mod ito;

pub use checks::{gateaux_check, growth_probe, log_log_slope, GateauxReport, GrowthProbe};
pub use functional::{Component, Functional, Outer, Prepared, Term, TestFunction, TimeFactor};
pub use ito::{ito_residual, ItoResidual, Quadrature};
