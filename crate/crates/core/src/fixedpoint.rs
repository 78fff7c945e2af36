//! Frozen-flow map `Ψ`, Picard iteration to the McKean–Vlasov fixed point,
//! and contraction diagnostics.

use serde::{Deserialize, Serialize};

use crate::dynamics::{run, Interaction, Model, ParticleEnsemble, Policy, SimParams, SimulationResult};
use crate::error::{invalid, Error, Result};
use crate::measure_space::{path_distance, MeasureFlow};

/// Picard diagnostics. `distance_history[k]` is the path-coupled
/// `d(ν^{(k+1)}, ν^{(k)})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardState {
    pub iterate_index: usize,
    pub distance_history: Vec<f64>,
    /// `distance_history[k+1] / distance_history[k]`.
    pub contraction_ratios: Vec<f64>,
    pub converged: bool,
    /// First `k` with `distance_history[k] < tol`.
    pub converged_at_iteration: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-3,
        }
    }
}

/// Simulation with every step recorded, so outputs can be fed back as
/// frozen flows.
fn full_grid(params: &SimParams) -> SimParams {
    params.clone().with_record_every(1)
}

/// Run the decoupled system with state-law arguments read from the frozen
/// flow `nu`. The action law is the ensemble's own. Noise is keyed on
/// `params.seed`, so repeated calls are synchronously coupled.
pub fn psi_run(
    model: &dyn Model,
    policy: &Policy,
    init: &ParticleEnsemble,
    nu: &MeasureFlow,
    params: &SimParams,
) -> Result<SimulationResult> {
    run(model, policy, init, &full_grid(params), Interaction::Frozen(nu))
}

/// `Ψ(ν)`: the path-coupled law flow of the frozen-flow system.
pub fn apply_psi(
    model: &dyn Model,
    policy: &Policy,
    init: &ParticleEnsemble,
    nu: &MeasureFlow,
    params: &SimParams,
) -> Result<MeasureFlow> {
    Ok(psi_run(model, policy, init, nu, params)?.flow)
}

/// `ν⁰`: the initial law held constant on the simulation grid.
pub fn initial_guess(init: &ParticleEnsemble, params: &SimParams) -> Result<MeasureFlow> {
    MeasureFlow::time_constant(&init.collection(), params.full_grid_times())
}

/// Iterate `ν^{(k+1)} = Ψ(ν^{(k)})` from the time-constant initial law.
/// Returns the last iterate and the diagnostics; non-convergence within
/// `max_iters` is reported through `converged = false`.
pub fn picard_solve(
    model: &dyn Model,
    policy: &Policy,
    init: &ParticleEnsemble,
    params: &SimParams,
    opts: &PicardOptions,
) -> Result<(SimulationResult, PicardState)> {
    if opts.max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("tol must be positive"));
    }
    let mut nu = initial_guess(init, params)?;
    let mut state = PicardState {
        iterate_index: 0,
        distance_history: Vec::new(),
        contraction_ratios: Vec::new(),
        converged: false,
        converged_at_iteration: None,
    };
    let mut increases = 0;
    loop {
        let next = psi_run(model, policy, init, &nu, params)?;
        let dist = path_distance(&next.flow, &nu)?;
        if let Some(prev) = state.distance_history.last() {
            if *prev > 0.0 {
                state.contraction_ratios.push(dist / prev);
            }
            increases = if dist > *prev { increases + 1 } else { 0 };
        }
        state.distance_history.push(dist);
        state.iterate_index += 1;
        let initial = state.distance_history[0];
        if increases >= 3 && dist > 10.0 * initial {
            return Err(Error::Divergence {
                iterate: state.iterate_index,
                distance: dist,
                initial,
            });
        }
        if dist < opts.tol {
            state.converged = true;
            state.converged_at_iteration = Some(state.iterate_index - 1);
        }
        if state.converged || state.iterate_index >= opts.max_iters {
            return Ok((next, state));
        }
        nu = next.flow;
    }
}

/// Time-split Picard: solve on `segments` consecutive sub-intervals, each
/// started from the previous segment's terminal ensemble, and concatenate.
pub fn picard_solve_split(
    model: &dyn Model,
    policy: &Policy,
    init: &ParticleEnsemble,
    params: &SimParams,
    opts: &PicardOptions,
    segments: usize,
) -> Result<(MeasureFlow, Vec<PicardState>)> {
    if segments == 0 || segments > params.steps {
        return Err(invalid(format!("segments must lie in 1..={}", params.steps)));
    }
    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    let mut states = Vec::with_capacity(segments);
    let mut start = init.clone();
    let mut done = 0;
    for s in 0..segments {
        let end = (s + 1) * params.steps / segments;
        let seg = SimParams {
            t0: params.time(done),
            steps: end - done,
            noise_offset: params.noise_offset + (done * params.substeps) as u64,
            ..params.clone()
        };
        let (res, st) = picard_solve(model, policy, &start, &seg, opts)?;
        let skip = usize::from(s > 0);
        times.extend_from_slice(&res.flow.times()[skip..]);
        snapshots.extend_from_slice(&res.flow.snapshots()[skip..]);
        states.push(st);
        start = res.terminal;
        done = end;
    }
    Ok((MeasureFlow::new(times, snapshots, true)?, states))
}

/// `d(Ψ(ν₁), Ψ(ν₂)) / d(ν₁, ν₂)` under synchronous noise.
pub fn contraction_estimate(
    model: &dyn Model,
    policy: &Policy,
    init: &ParticleEnsemble,
    nu1: &MeasureFlow,
    nu2: &MeasureFlow,
    params: &SimParams,
) -> Result<f64> {
    let den = path_distance(nu1, nu2)?;
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let a = apply_psi(model, policy, init, nu1, params)?;
    let b = apply_psi(model, policy, init, nu2, params)?;
    Ok(path_distance(&a, &b)? / den)
}

/// `C` with `d(Ψν, Ψμ)² ≤ C·h·d(ν, μ)²` for horizon `h`:
/// `8L²(h+4)λ(U)·exp(8L²(h+4)h)`.
pub fn contraction_constant(lipschitz: f64, horizon: f64, total_mass: f64) -> f64 {
    let c = 8.0 * lipschitz.powi(2) * (horizon + 4.0);
    c * total_mass * (c * horizon).exp()
}
