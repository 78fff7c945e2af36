//! Numerical probes of the standing assumptions, the moment and stability
//! estimates, and law invariance of the cost.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ensemble::ParticleEnsemble;
use super::model::{DeclaredConstants, Model};
use super::policy::Policy;
use super::simulate::{cost, simulate, CostEstimate, SimParams, SimulationResult};
use crate::error::{invalid, Error, Result};
use crate::measure_space::{
    collection_distance, path_distance, EmpiricalMeasure, LabelGrid, MeasureCollection,
};
use crate::rng::{Domain, StreamRng};

const PROBE_ATOMS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub probes: usize,
    pub declared: DeclaredConstants,
    /// `max |b(x) − b(x')| / |x − x'|` at fixed laws.
    pub drift_lipschitz_state: f64,
    /// `max |b(x,μ) − b(x',μ')| / (|x − x'| + d(μ,μ'))`.
    pub drift_lipschitz: f64,
    pub volatility_lipschitz_state: f64,
    pub volatility_lipschitz: f64,
    /// `max (|b| + |σ|) / (1 + |x| + d(a,0) + d(μ,δ₀) + d(ν,δ₀))`.
    pub growth_ratio: f64,
    /// `max (|b| + |σ|) / (1 + |x| + d(μ,δ₀))`.
    pub strengthened_growth_ratio: f64,
    pub holder_running: f64,
    pub holder_terminal: f64,
    pub violations: Vec<String>,
}

/// Random-probe report on Lipschitz, growth and Hölder ratios.
pub fn validate_coefficients(
    model: &dyn Model,
    grid: &LabelGrid,
    probe_budget: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    if probe_budget == 0 {
        return Err(invalid("probe_budget must be at least 1"));
    }
    let declared = model.constants();
    declared.validate()?;
    let d = model.state_dim();
    let l = model.noise_dim();
    let q = model.action_space().dim();
    let space = model.action_space();
    let mut rng = StreamRng::new(seed, Domain::Probe, 0);
    let [g1, g2, g3, g4] = declared.holder_exponents;

    let mut r = AssumptionReport {
        probes: probe_budget,
        declared: declared.clone(),
        drift_lipschitz_state: 0.0,
        drift_lipschitz: 0.0,
        volatility_lipschitz_state: 0.0,
        volatility_lipschitz: 0.0,
        growth_ratio: 0.0,
        strengthened_growth_ratio: 0.0,
        holder_running: 0.0,
        holder_terminal: 0.0,
        violations: Vec::new(),
    };

    let mut b1 = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    let mut b3 = vec![0.0; d];
    let mut s1 = vec![0.0; d * l];
    let mut s2 = vec![0.0; d * l];
    let mut s3 = vec![0.0; d * l];
    for _ in 0..probe_budget {
        let k = rng.below(grid.len());
        let scale = rng.uniform_in(0.1, 3.0);
        let x: Vec<f64> = (0..d).map(|_| scale * rng.normal()).collect();
        let x2: Vec<f64> = if rng.next_f64() < 0.5 {
            x.iter().map(|v| v + 1e-3 * scale * rng.normal()).collect()
        } else {
            (0..d).map(|_| scale * rng.normal()).collect()
        };
        let a = random_action(&mut rng, space, scale);
        let mu = random_collection(&mut rng, grid, d, scale)?;
        let mu2 = if rng.next_f64() < 0.5 {
            perturb(&mut rng, &mu, 0.05 * scale)?
        } else {
            random_collection(&mut rng, grid, d, scale)?
        };
        let nu_atoms: Vec<EmpiricalMeasure> = (0..grid.len())
            .map(|_| {
                let atoms = (0..PROBE_ATOMS).flat_map(|_| random_action(&mut rng, space, scale)).collect();
                EmpiricalMeasure::uniform(q, atoms)
            })
            .collect::<Result<_>>()?;
        let nu = MeasureCollection::new(grid.clone(), nu_atoms)?;

        let env1 = model.mean_field(&mu, Some(&nu));
        let env2 = model.mean_field(&mu2, Some(&nu));
        model.drift(k, &x, &a, &env1, &mut b1);
        model.drift(k, &x2, &a, &env2, &mut b2);
        model.drift(k, &x2, &a, &env1, &mut b3);
        model.volatility(k, &x, &a, &env1, &mut s1);
        model.volatility(k, &x2, &a, &env2, &mut s2);
        model.volatility(k, &x2, &a, &env1, &mut s3);

        let dx = dist(&x, &x2);
        let dmu = collection_distance(&mu, &mu2)?;
        if dx > 0.0 {
            r.drift_lipschitz_state = r.drift_lipschitz_state.max(dist(&b1, &b3) / dx);
            r.volatility_lipschitz_state = r.volatility_lipschitz_state.max(dist(&s1, &s3) / dx);
        }
        if dx + dmu > 0.0 {
            r.drift_lipschitz = r.drift_lipschitz.max(dist(&b1, &b2) / (dx + dmu));
            r.volatility_lipschitz = r.volatility_lipschitz.max(dist(&s1, &s2) / (dx + dmu));
        }

        let size = norm(&b1) + norm(&s1);
        let xn = norm(&x);
        let mun = mu.norm();
        let nun = origin_norm(&nu, space.origin());
        let an = space.distance_to_origin(&a);
        r.growth_ratio = r.growth_ratio.max(size / (1.0 + xn + an + mun + nun));
        r.strengthened_growth_ratio = r.strengthened_growth_ratio.max(size / (1.0 + xn + mun));

        let x2n = norm(&x2);
        let mu2n = mu2.norm();
        let denom = |gx: f64, gm: f64| {
            dx.powf(gx) * (1.0 + xn + x2n).powf(2.0 - gx)
                + dmu.powf(gm) * (1.0 + mun + mu2n).powf(2.0 - gm)
        };
        let df = (model.running_cost(k, &x, &a, &env1) - model.running_cost(k, &x2, &a, &env2)).abs();
        let dg = (model.terminal_cost(k, &x, &env1) - model.terminal_cost(k, &x2, &env2)).abs();
        let den_f = denom(g1, g2);
        let den_g = denom(g3, g4);
        if den_f > 0.0 {
            r.holder_running = r.holder_running.max(df / den_f);
        }
        if den_g > 0.0 {
            r.holder_terminal = r.holder_terminal.max(dg / den_g);
        }
    }

    let exceeds = |v: f64, bound: f64| v > bound * (1.0 + 1e-9) + 1e-12;
    let lip = r.drift_lipschitz.max(r.volatility_lipschitz);
    if exceeds(lip, declared.lipschitz) {
        r.violations.push(format!("Lipschitz ratio {lip} exceeds declared L = {}", declared.lipschitz));
    }
    if exceeds(r.growth_ratio, declared.growth) {
        r.violations.push(format!("growth ratio {} exceeds declared M = {}", r.growth_ratio, declared.growth));
    }
    if declared.strengthened_growth && exceeds(r.strengthened_growth_ratio, declared.growth) {
        r.violations.push(format!(
            "strengthened growth ratio {} exceeds declared M = {}",
            r.strengthened_growth_ratio, declared.growth
        ));
    }
    if let Some(k) = declared.holder {
        let h = r.holder_running.max(r.holder_terminal);
        if exceeds(h, k) {
            r.violations.push(format!("Hölder ratio {h} exceeds declared K = {k}"));
        }
    }
    Ok(r)
}

fn random_action(rng: &mut StreamRng, space: &super::model::ActionSpace, scale: f64) -> Vec<f64> {
    (0..space.dim())
        .map(|j| {
            let (lo, hi) = (space.lower()[j], space.upper()[j]);
            if lo.is_finite() && hi.is_finite() {
                rng.uniform_in(lo, hi)
            } else {
                (space.origin()[j] + scale * rng.normal()).clamp(lo, hi)
            }
        })
        .collect()
}

fn random_collection(
    rng: &mut StreamRng,
    grid: &LabelGrid,
    d: usize,
    scale: f64,
) -> Result<MeasureCollection> {
    let per = (0..grid.len())
        .map(|_| {
            let center: Vec<f64> = (0..d).map(|_| scale * rng.normal()).collect();
            let spread = rng.uniform_in(0.05, 1.0) * scale;
            let atoms = (0..PROBE_ATOMS)
                .flat_map(|_| center.iter().map(|c| c + spread * rng.normal()).collect::<Vec<_>>())
                .collect();
            EmpiricalMeasure::uniform(d, atoms)
        })
        .collect::<Result<_>>()?;
    MeasureCollection::new(grid.clone(), per)
}

fn perturb(rng: &mut StreamRng, mu: &MeasureCollection, eps: f64) -> Result<MeasureCollection> {
    let per = mu
        .per_label()
        .iter()
        .map(|m| m.map_atoms(|x| x.iter().map(|v| v + eps * rng.normal()).collect()))
        .collect::<Result<_>>()?;
    MeasureCollection::new(mu.grid().clone(), per)
}

fn origin_norm(nu: &MeasureCollection, origin: &[f64]) -> f64 {
    nu.per_label()
        .iter()
        .zip(nu.grid().weights())
        .map(|(m, w)| w * m.integrate(|a| a.iter().zip(origin).map(|(x, o)| (x - o) * (x - o)).sum()))
        .sum::<f64>()
        .sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Gronwall constant of the initial-condition stability estimate:
/// `3·exp(12L²(h+4)(1+λ(U))h)` for horizon `h`.
pub fn stability_constant(lipschitz: f64, horizon: f64, total_mass: f64) -> f64 {
    3.0 * (12.0 * lipschitz.powi(2) * (horizon + 4.0) * (1.0 + total_mass) * horizon).exp()
}

/// Second-moment bound
/// `[3Φ₀ + 15M²(h+4)(λ(U)h + (1+λ(U))A)]·exp(15M²(h+4)(1+λ(U))h)`
/// with `Φ₀ = ∫E|ξ|²λ` and `A = ∫∫E d(α,0)² ds λ`.
pub fn moment_bound(growth: f64, horizon: f64, total_mass: f64, initial: f64, actions: f64) -> f64 {
    let c = 15.0 * growth.powi(2) * (horizon + 4.0);
    (3.0 * initial + c * (total_mass * horizon + (1.0 + total_mass) * actions))
        * (c * (1.0 + total_mass) * horizon).exp()
}

/// Action-free bound under strengthened growth:
/// `[3Φ₀ + 9M²(h+4)λ(U)h]·exp(9M²(h+4)(1+λ(U))h)`.
pub fn strengthened_moment_bound(growth: f64, horizon: f64, total_mass: f64, initial: f64) -> f64 {
    let c = 9.0 * growth.powi(2) * (horizon + 4.0);
    (3.0 * initial + c * total_mass * horizon) * (c * (1.0 + total_mass) * horizon).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub sup_second_moment: f64,
    pub bound: f64,
    pub strengthened_bound: Option<f64>,
    pub holds: bool,
}

/// Compare a run's `∫E sup|X|²λ` with the analytic moment bounds.
pub fn moment_check(model: &dyn Model, result: &SimulationResult) -> MomentCheck {
    let c = model.constants();
    let h = result.params.horizon();
    let mass = result.terminal.grid().total_mass();
    let dgn = &result.diagnostics;
    let bound = moment_bound(c.growth, h, mass, dgn.initial_second_moment, dgn.action_square_integral);
    let strengthened = c
        .strengthened_growth
        .then(|| strengthened_moment_bound(c.growth, h, mass, dgn.initial_second_moment));
    let holds = dgn.sup_second_moment <= bound
        && strengthened.map_or(true, |s| dgn.sup_second_moment <= s);
    MomentCheck {
        sup_second_moment: dgn.sup_second_moment,
        bound,
        strengthened_bound: strengthened,
        holds,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `∫ E sup_s |X_s − X̄_s|² λ(du)`.
    pub lhs: f64,
    /// `∫ E |ξ − ξ̄|² λ(du)`.
    pub rhs: f64,
    /// `lhs / rhs`; absent when `rhs = 0`.
    pub c_hat: Option<f64>,
    pub bound: f64,
    pub moments: [MomentCheck; 2],
}

/// Both sides of the stability estimate under a synchronous coupling.
pub fn stability_probe(
    model: &dyn Model,
    policy: &Policy,
    init_a: &ParticleEnsemble,
    init_b: &ParticleEnsemble,
    params: &SimParams,
) -> Result<StabilityReport> {
    if !init_a.shares_streams_with(init_b) {
        return Err(Error::StreamMismatch);
    }
    let p = params.clone().with_record_every(1);
    let ra = simulate(model, policy, init_a, &p)?;
    let rb = simulate(model, policy, init_b, &p)?;
    let lhs = path_distance(&ra.flow, &rb.flow)?.powi(2);
    let rhs = collection_distance_coupled(init_a, init_b);
    let c = model.constants();
    Ok(StabilityReport {
        lhs,
        rhs,
        c_hat: (rhs > 0.0).then(|| lhs / rhs),
        bound: stability_constant(c.lipschitz, p.horizon(), init_a.grid().total_mass()),
        moments: [moment_check(model, &ra), moment_check(model, &rb)],
    })
}

/// `∫ E|ξ − ξ̄|² λ` under the index coupling.
fn collection_distance_coupled(a: &ParticleEnsemble, b: &ParticleEnsemble) -> f64 {
    let n = a.per_label();
    let d = a.dim();
    a.grid()
        .weights()
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let (xa, xb) = (a.label_states(k), b.label_states(k));
            w * (0..n).map(|i| dist(&xa[i * d..(i + 1) * d], &xb[i * d..(i + 1) * d]).powi(2)).sum::<f64>()
                / n as f64
        })
        .sum()
}

/// Quantile map `j(label_index, label, z)`.
pub type QuantileMap = Arc<dyn Fn(usize, f64, f64) -> Vec<f64> + Send + Sync>;

/// Law-preserving transformations of an initial ensemble. Replication `r`
/// uses seed `seed + r`.
#[derive(Clone)]
pub enum PermutationScheme {
    Identity,
    /// Permute states within labels; marks and noise stay attached to slots.
    ShuffleStates { seed: u64 },
    /// Permute whole particles within labels.
    ShuffleParticles { seed: u64 },
    /// Fresh marks `Z` and `ξ = j(u, Z)`; noise streams unchanged.
    Redraw { quantile_map: QuantileMap, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawInvarianceReport {
    pub baseline: CostEstimate,
    pub trials: Vec<CostEstimate>,
    /// `|J_r − J_0| / (se_0² + se_r²)^{1/2}`.
    pub discrepancies: Vec<f64>,
    pub max_discrepancy: f64,
    pub max_abs_difference: f64,
}

pub fn law_invariance_test(
    model: &dyn Model,
    policy: &Policy,
    init: &ParticleEnsemble,
    scheme: &PermutationScheme,
    params: &SimParams,
    replications: usize,
) -> Result<LawInvarianceReport> {
    if replications == 0 {
        return Err(invalid("replications must be at least 1"));
    }
    let baseline = cost(&simulate(model, policy, init, params)?);
    let mut trials = Vec::with_capacity(replications);
    for r in 0..replications as u64 {
        let alt = match scheme {
            PermutationScheme::Identity => init.clone(),
            PermutationScheme::ShuffleStates { seed } => init.shuffle_states(seed + r),
            PermutationScheme::ShuffleParticles { seed } => init.shuffle_particles(seed + r),
            PermutationScheme::Redraw { quantile_map, seed } => {
                let fresh = ParticleEnsemble::from_quantile_map(
                    |k, u, z| quantile_map(k, u, z),
                    init.grid(),
                    init.per_label(),
                    seed + r,
                )?;
                ParticleEnsemble::from_parts(
                    init.grid().clone(),
                    init.dim(),
                    init.per_label(),
                    fresh.states().to_vec(),
                    fresh.marks().to_vec(),
                    init.streams().to_vec(),
                )?
            }
        };
        trials.push(cost(&simulate(model, policy, &alt, params)?));
    }
    let discrepancies: Vec<f64> = trials
        .iter()
        .map(|t| {
            let diff = (t.value - baseline.value).abs();
            let pooled = (baseline.std_error.powi(2) + t.std_error.powi(2)).sqrt();
            if diff == 0.0 {
                0.0
            } else {
                diff / pooled
            }
        })
        .collect();
    Ok(LawInvarianceReport {
        baseline,
        max_discrepancy: discrepancies.iter().copied().fold(0.0, f64::max),
        max_abs_difference: trials
            .iter()
            .map(|t| (t.value - baseline.value).abs())
            .fold(0.0, f64::max),
        trials,
        discrepancies,
    })
}
