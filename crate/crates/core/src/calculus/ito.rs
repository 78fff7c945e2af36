use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functional::TestFunction;
use crate::dynamics::{Model, SimulationResult};
use crate::error::{Error, Result};

/// Time quadrature for the drift side of the chain rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    #[default]
    Trapezoid,
    LeftEndpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItoResidual {
    /// `v(T, μ_T) − v(t₀, μ_{t₀})`.
    pub lhs: f64,
    /// Time integral of the generator applied to `v`.
    pub rhs: f64,
    pub residual: f64,
    /// Generator values at the grid times.
    pub integrand: Vec<f64>,
    pub quadrature: Quadrature,
}

/// Compare the increment of `v(t, μ_t)` along a simulated flow with the time
/// integral of
/// `∂ₜv + ∫_U E[∂ₓδv/δm · b + ½ ∂ₓ²δv/δm : σσᵀ] λ(du)`,
/// expectations being averages over the simulated particles. Drift and
/// volatility are evaluated at the actions recorded in the run.
pub fn ito_residual(
    tf: &TestFunction,
    model: &dyn Model,
    result: &SimulationResult,
    quadrature: Quadrature,
) -> Result<ItoResidual> {
    let params = &result.params;
    let flow = &result.flow;
    if params.record_every != 1 || flow.len() != params.steps + 1 {
        return Err(Error::MissingTrajectories(format!(
            "need all {} grid snapshots, run recorded {}",
            params.steps + 1,
            flow.len()
        )));
    }
    if !flow.is_path_coupled() || result.action_flow.len() != flow.len() {
        return Err(Error::MissingTrajectories(
            "state and action trajectories must be path-coupled and complete".into(),
        ));
    }
    let d = model.state_dim();
    let l = model.noise_dim();
    let q = model.action_space().dim();
    let mut integrand = Vec::with_capacity(flow.len());
    let mut values = Vec::with_capacity(flow.len());
    for (n, (mu, nu)) in flow.snapshots().iter().zip(&result.action_flow).enumerate() {
        let t = flow.times()[n];
        let p = tf.prepare(t, mu)?;
        let env = model.mean_field(mu, Some(nu));
        let weights = mu.grid().weights();
        let per_label: Vec<f64> = (0..mu.len())
            .into_par_iter()
            .map_init(
                || (vec![0.0; d], vec![0.0; d * l], vec![0.0; d], vec![0.0; d * d]),
                |(b, s, g, h), k| {
                    let states = mu.measure(k);
                    let actions = nu.measure(k);
                    let mut acc = 0.0;
                    for i in 0..states.len() {
                        let x = states.atom(i);
                        let a = &actions.atoms()[i * q..(i + 1) * q];
                        model.drift(k, x, a, &env, b);
                        model.volatility(k, x, a, &env, s);
                        g.iter_mut().for_each(|v| *v = 0.0);
                        h.iter_mut().for_each(|v| *v = 0.0);
                        p.add_gradient(k, x, 1.0, g);
                        p.add_hessian(k, x, 1.0, h);
                        let mut term: f64 = g.iter().zip(b.iter()).map(|(gi, bi)| gi * bi).sum();
                        for r in 0..d {
                            for c in 0..d {
                                let cov: f64 = (0..l).map(|j| s[r * l + j] * s[c * l + j]).sum();
                                term += 0.5 * h[r * d + c] * cov;
                            }
                        }
                        acc += states.weight(i) * term;
                    }
                    acc
                },
            )
            .collect();
        let space: f64 = per_label.iter().zip(weights).map(|(v, w)| v * w).sum();
        integrand.push(p.time_derivative + space);
        values.push(p.value);
    }
    let dt = params.dt;
    let rhs: f64 = match quadrature {
        Quadrature::Trapezoid => integrand.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum(),
        Quadrature::LeftEndpoint => integrand[..params.steps].iter().map(|v| v * dt).sum(),
    };
    let lhs = values[values.len() - 1] - values[0];
    Ok(ItoResidual {
        lhs,
        rhs,
        residual: lhs - rhs,
        integrand,
        quadrature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{Component, Functional};
    use crate::dynamics::{
        simulate, ActionSpace, DriftTerms, ParticleEnsemble, Policy, PolynomialModel,
        PolynomialSpec, SimParams, VolatilityTerms,
    };
    use crate::measure_space::{Graphon, LabelGrid};

    fn model(grid: &LabelGrid, drift: f64, vol: f64) -> PolynomialModel {
        let spec = PolynomialSpec {
            drift: DriftTerms {
                constant: drift,
                ..Default::default()
            },
            volatility: VolatilityTerms {
                constant: vol,
                ..Default::default()
            },
            ..Default::default()
        };
        PolynomialModel::new(
            spec,
            grid,
            Graphon::constant(grid, 1.0).unwrap(),
            ActionSpace::cube(1, -1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn mean_functional_with_constant_drift() {
        let grid = LabelGrid::uniform(3, 2.0).unwrap();
        let m = model(&grid, 0.7, 0.0);
        let init = ParticleEnsemble::from_quantile_map(|_, u, z| vec![u + z], &grid, 20, 1).unwrap();
        let p = SimParams::new(0.0, 1.5, 30, 2).unwrap();
        let res = simulate(&m, &Policy::constant(vec![0.0]), &init, &p).unwrap();
        let tf = TestFunction::single(
            1,
            Functional::Linear {
                component: Component::coordinate(1, 0),
            },
        );
        let r = ito_residual(&tf, &m, &res, Quadrature::Trapezoid).unwrap();
        assert!((r.lhs - 0.7 * 1.5 * 2.0).abs() < 1e-12);
        assert!(r.residual.abs() < 1e-12);
    }

    #[test]
    fn second_moment_under_brownian_motion() {
        let grid = LabelGrid::uniform(2, 1.0).unwrap();
        let m = model(&grid, 0.0, 1.0);
        let init = ParticleEnsemble::from_quantile_map(|_, _, _| vec![0.0], &grid, 4000, 1).unwrap();
        let p = SimParams::new(0.0, 1.0, 50, 2).unwrap();
        let res = simulate(&m, &Policy::constant(vec![0.0]), &init, &p).unwrap();
        let tf = TestFunction::single(
            1,
            Functional::Linear {
                component: Component::square_norm(),
            },
        );
        let r = ito_residual(&tf, &m, &res, Quadrature::LeftEndpoint).unwrap();
        assert!(r.integrand.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((r.rhs - 1.0).abs() < 1e-12);
        assert!((r.lhs - 1.0).abs() < 0.05, "{}", r.lhs);
    }

    #[test]
    fn sparse_recording_is_rejected() {
        let grid = LabelGrid::uniform(1, 1.0).unwrap();
        let m = model(&grid, 0.0, 1.0);
        let init = ParticleEnsemble::from_quantile_map(|_, _, z| vec![z], &grid, 5, 1).unwrap();
        let p = SimParams::new(0.0, 1.0, 10, 2).unwrap().with_record_every(5);
        let res = simulate(&m, &Policy::constant(vec![0.0]), &init, &p).unwrap();
        let tf = TestFunction::single(
            1,
            Functional::Linear {
                component: Component::square_norm(),
            },
        );
        assert!(matches!(
            ito_residual(&tf, &m, &res, Quadrature::Trapezoid),
            Err(Error::MissingTrajectories(_))
        ));
    }
}
