use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{collection_from_flat, ParticleEnsemble};
use super::model::Model;
use super::policy::Policy;
use crate::error::{invalid, Error, Result};
use crate::measure_space::{MeasureCollection, MeasureFlow};
use crate::rng::{self, Domain};

/// States beyond this magnitude abort the run.
pub const BLOW_UP: f64 = 1e9;

/// Uniform Euler–Maruyama grid `t₀ + n·dt`, `n = 0..=steps`.
///
/// Each step's Brownian increment is the sum of `substeps` fine increments
/// keyed on fine-step counters starting at `noise_offset`, so a run with
/// `(steps, substeps = 2)` sees exactly the noise of a run with
/// `(2·steps, substeps = 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    pub substeps: usize,
    pub noise_offset: u64,
    pub record_every: usize,
}

impl SimParams {
    pub fn new(t0: f64, t_end: f64, steps: usize, seed: u64) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(invalid(format!("need t0 < T, got t0 = {t0}, T = {t_end}")));
        }
        Ok(Self {
            t0,
            dt: (t_end - t0) / steps as f64,
            steps,
            seed,
            substeps: 1,
            noise_offset: 0,
            record_every: 1,
        })
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Continuation after `m` steps: same step size and the noise the full
    /// run would have used on its remaining steps.
    pub fn tail(&self, m: usize) -> Result<Self> {
        if m == 0 || m >= self.steps {
            return Err(invalid(format!("split step {m} must lie strictly inside 0..{}", self.steps)));
        }
        Ok(Self {
            t0: self.time(m),
            steps: self.steps - m,
            noise_offset: self.noise_offset + (m * self.substeps) as u64,
            ..self.clone()
        })
    }

    /// The first `m` steps of this grid.
    pub fn head(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.steps {
            return Err(invalid(format!("head length {m} outside 1..={}", self.steps)));
        }
        Ok(Self {
            steps: m,
            ..self.clone()
        })
    }

    /// Step indices whose states are recorded in the flow.
    pub fn recorded_steps(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..=self.steps).step_by(self.record_every).collect();
        if *v.last().unwrap() != self.steps {
            v.push(self.steps);
        }
        v
    }

    /// Same grid with every step recorded.
    pub fn full_grid_times(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.time(n)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub max_abs_state: f64,
    /// `∫ E|ξ|² λ(du)`.
    pub initial_second_moment: f64,
    /// `∫ E sup_s |X_s|² λ(du)` over grid times.
    pub sup_second_moment: f64,
    /// `∫∫ E d(α_s, 0)² ds λ(du)` (left-endpoint rule).
    pub action_square_integral: f64,
}

#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub params: SimParams,
    /// Path-coupled state flow at the recorded steps.
    pub flow: MeasureFlow,
    /// Action-law collections at the recorded steps. The entry at the final
    /// time evaluates the policy on the terminal states.
    pub action_flow: Vec<MeasureCollection>,
    /// `Σ_k λ_k mean_i f·dt` per step.
    pub step_costs: Vec<f64>,
    /// `Σ_k λ_k mean_i g`.
    pub terminal_cost: f64,
    /// Per-particle total cost samples, label-major.
    pub particle_costs: Vec<f64>,
    /// Per-particle terminal cost samples, label-major.
    pub particle_terminal_costs: Vec<f64>,
    pub terminal: ParticleEnsemble,
    pub diagnostics: Diagnostics,
}

impl SimulationResult {
    pub fn recorded_steps(&self) -> Vec<usize> {
        self.params.recorded_steps()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// How the state law entering the coefficients is produced.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Interaction<'a> {
    /// The current empirical collection of the ensemble itself.
    Empirical,
    /// Snapshot `n` of a frozen flow on the full simulation grid.
    Frozen(&'a MeasureFlow),
}

/// Simulate the interacting particle system with empirical closure.
pub fn simulate(
    model: &dyn Model,
    policy: &Policy,
    init: &ParticleEnsemble,
    params: &SimParams,
) -> Result<SimulationResult> {
    run(model, policy, init, params, Interaction::Empirical)
}

fn check_frozen(flow: &MeasureFlow, init: &ParticleEnsemble, params: &SimParams) -> Result<()> {
    if flow.len() != params.steps + 1 {
        return Err(Error::TimeGridMismatch(format!(
            "frozen flow has {} times, simulation grid has {}",
            flow.len(),
            params.steps + 1
        )));
    }
    for (n, t) in flow.times().iter().enumerate() {
        let s = params.time(n);
        if (t - s).abs() > 1e-9 * (1.0 + s.abs()) {
            return Err(Error::TimeGridMismatch(format!(
                "frozen flow time {t} differs from grid time {s} at index {n}"
            )));
        }
    }
    if flow.initial().grid() != init.grid() {
        return Err(Error::GridMismatch);
    }
    if flow.initial().dim() != init.dim() {
        return Err(Error::DimensionMismatch {
            expected: init.dim(),
            got: flow.initial().dim(),
        });
    }
    Ok(())
}

struct Scratch {
    drift: Vec<f64>,
    vol: Vec<f64>,
    dw: Vec<f64>,
    z: Vec<f64>,
}

pub(crate) fn run(
    model: &dyn Model,
    policy: &Policy,
    init: &ParticleEnsemble,
    params: &SimParams,
    interaction: Interaction,
) -> Result<SimulationResult> {
    let d = model.state_dim();
    let l = model.noise_dim();
    let q = model.action_space().dim();
    if init.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: init.dim(),
        });
    }
    if params.steps == 0 || !(params.dt > 0.0) || params.substeps == 0 {
        return Err(invalid("simulation needs steps ≥ 1, dt > 0, substeps ≥ 1"));
    }
    if let Some(g) = model.graphon() {
        if g.size() != init.grid().len() {
            return Err(Error::GridMismatch);
        }
    }
    if let Interaction::Frozen(flow) = interaction {
        check_frozen(flow, init, params)?;
    }
    let grid = init.grid().clone();
    let n_per = init.per_label();
    let total = init.total();
    let marks = init.marks();
    let streams = init.streams();
    let weights = grid.weights().to_vec();
    let dt = params.dt;
    let fine_scale = (dt / params.substeps as f64).sqrt();
    let space = model.action_space();

    let mut x = init.states().to_vec();
    let mut next = vec![0.0; x.len()];
    let mut actions = vec![0.0; total * q];
    let mut sup_sq: Vec<f64> = x.chunks_exact(d).map(norm_sq).collect();
    let mut particle_costs = vec![0.0; total];
    let mut step_run = vec![0.0; total];
    let mut step_costs = Vec::with_capacity(params.steps);
    let mut action_sq = 0.0;
    let mut max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let recorded = params.recorded_steps();
    let mut rec_iter = recorded.iter().peekable();
    let mut snapshots = Vec::with_capacity(recorded.len());
    let mut action_flow = Vec::with_capacity(recorded.len());

    let label_mean = |vals: &[f64]| -> f64 {
        vals.chunks_exact(n_per)
            .zip(&weights)
            .map(|(c, w)| w * c.iter().sum::<f64>() / n_per as f64)
            .sum()
    };

    for n in 0..=params.steps {
        let t = params.time(n);
        let empirical = collection_from_flat(&grid, d, n_per, &x);
        let state_law = match interaction {
            Interaction::Empirical => &empirical,
            Interaction::Frozen(flow) => flow.snapshot(n),
        };
        let env0 = model.mean_field(state_law, None);
        actions
            .par_chunks_mut(q)
            .enumerate()
            .for_each(|(p, a)| policy.action(p / n_per, t, &x[p * d..(p + 1) * d], marks[p], &env0, a));
        if let Some(p) = (0..total).find(|p| !space.contains(&actions[p * q..(p + 1) * q])) {
            return Err(Error::ActionOutside {
                label: p / n_per,
                step: n,
                action: actions[p * q..(p + 1) * q].to_vec(),
            });
        }
        let nu = collection_from_flat(&grid, q, n_per, &actions);
        if rec_iter.peek() == Some(&&n) {
            rec_iter.next();
            snapshots.push(empirical.clone());
            action_flow.push(nu.clone());
        }
        if n == params.steps {
            break;
        }
        let env = model.mean_field(state_law, Some(&nu));

        let fine_base = params.noise_offset + (n * params.substeps) as u64;
        next.par_chunks_mut(d)
            .zip(step_run.par_iter_mut())
            .enumerate()
            .for_each_init(
                || Scratch {
                    drift: vec![0.0; d],
                    vol: vec![0.0; d * l],
                    dw: vec![0.0; l],
                    z: vec![0.0; l],
                },
                |s, (p, (xn, fr))| {
                    let label = p / n_per;
                    let xp = &x[p * d..(p + 1) * d];
                    let ap = &actions[p * q..(p + 1) * q];
                    model.drift(label, xp, ap, &env, &mut s.drift);
                    model.volatility(label, xp, ap, &env, &mut s.vol);
                    *fr = model.running_cost(label, xp, ap, &env) * dt;
                    s.dw.iter_mut().for_each(|w| *w = 0.0);
                    for j in 0..params.substeps as u64 {
                        rng::normals(params.seed, Domain::Brownian, streams[p], fine_base + j, &mut s.z);
                        for (w, z) in s.dw.iter_mut().zip(&s.z) {
                            *w += fine_scale * z;
                        }
                    }
                    for i in 0..d {
                        let mut v = xp[i] + s.drift[i] * dt;
                        for (j, w) in s.dw.iter().enumerate() {
                            v += s.vol[i * l + j] * w;
                        }
                        xn[i] = v;
                    }
                },
            );

        for (p, xn) in next.chunks_exact(d).enumerate() {
            let m = xn.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
            if m > BLOW_UP {
                return Err(Error::BlowUp {
                    step: n + 1,
                    magnitude: m,
                });
            }
            max_abs = max_abs.max(m);
            sup_sq[p] = sup_sq[p].max(norm_sq(xn));
        }
        for (c, f) in particle_costs.iter_mut().zip(&step_run) {
            *c += f;
        }
        step_costs.push(label_mean(&step_run));
        let a_sq: Vec<f64> = actions
            .chunks_exact(q)
            .map(|a| space.distance_to_origin(a).powi(2))
            .collect();
        action_sq += label_mean(&a_sq) * dt;
        std::mem::swap(&mut x, &mut next);
    }

    let terminal_law = match interaction {
        Interaction::Empirical => snapshots.last().unwrap(),
        Interaction::Frozen(flow) => flow.terminal(),
    };
    let env_t = model.mean_field(terminal_law, None);
    let g: Vec<f64> = x
        .par_chunks(d)
        .enumerate()
        .map(|(p, xp)| model.terminal_cost(p / n_per, xp, &env_t))
        .collect();
    for (c, gv) in particle_costs.iter_mut().zip(&g) {
        *c += gv;
    }
    let terminal_cost = label_mean(&g);

    let flow = MeasureFlow::new(
        recorded.iter().map(|n| params.time(*n)).collect(),
        snapshots,
        true,
    )?;
    let diagnostics = Diagnostics {
        steps: params.steps,
        max_abs_state: max_abs,
        initial_second_moment: init.second_moment(),
        sup_second_moment: label_mean(&sup_sq),
        action_square_integral: action_sq,
    };
    Ok(SimulationResult {
        params: params.clone(),
        flow,
        action_flow,
        step_costs,
        terminal_cost,
        particle_costs,
        particle_terminal_costs: g,
        terminal: init.with_states(x)?,
        diagnostics,
    })
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `J = Σ_steps λ-mean f·dt + λ-mean g` with the Monte Carlo standard error
/// `(Σ_k λ_k² Var_k / N)^{1/2}` from per-particle cost samples.
pub fn cost(result: &SimulationResult) -> CostEstimate {
    let value = result.step_costs.iter().sum::<f64>() + result.terminal_cost;
    CostEstimate {
        value,
        std_error: label_std_error(
            &result.particle_costs,
            result.terminal.grid().weights(),
            result.terminal.per_label(),
        ),
    }
}

/// Cost split at step `m`: `(Σ_{n<m} step costs, Σ_{n≥m} step costs + terminal)`.
pub fn split_cost(result: &SimulationResult, m: usize) -> (f64, f64) {
    let head: f64 = result.step_costs[..m].iter().sum();
    let tail: f64 = result.step_costs[m..].iter().sum::<f64>() + result.terminal_cost;
    (head, tail)
}

/// Standard error of `Σ_k λ_k mean(samples_k)`.
pub fn label_std_error(samples: &[f64], weights: &[f64], per_label: usize) -> f64 {
    if per_label < 2 {
        return 0.0;
    }
    let mut var = 0.0;
    for (c, w) in samples.chunks_exact(per_label).zip(weights) {
        let n = per_label as f64;
        let m = c.iter().sum::<f64>() / n;
        let v = c.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (n - 1.0);
        var += w * w * v / n;
    }
    var.sqrt()
}
