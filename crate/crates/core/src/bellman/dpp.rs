use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{cost, label_std_error, simulate, Model, ParticleEnsemble, Policy, SimParams, SimulationResult};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Noise used by the continuation runs started at the intermediate time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationNoise {
    /// The noise the full-horizon runs use after the split.
    #[default]
    Common,
    /// A fresh seed derived from the run seed.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DppReport {
    /// `min_{i,j} J(α_i on [t,θ), α_j on [θ,T])` over full-horizon runs.
    pub lhs: f64,
    /// `min_i [running cost of α_i on [t,θ) + min_j J_θ(α_j)]` with
    /// continuations started from the time-`θ` ensemble.
    pub rhs: f64,
    pub gap: f64,
    /// `(se_lhs² + se_rhs²)^{1/2}` at the selected branches.
    pub std_error: f64,
    pub lhs_choice: (usize, usize),
    pub rhs_choice: (usize, usize),
    pub combinations: usize,
    pub theta: f64,
}

struct Branch {
    value: f64,
    samples: Vec<f64>,
}

fn sum_costs(parts: &[&[f64]], terminal: f64) -> f64 {
    parts.iter().flat_map(|p| p.iter()).sum::<f64>() + terminal
}

/// Compare the optimal cost over a finite set of two-stage controls with
/// its nested (dynamic programming) decomposition at step `split`.
pub fn dpp_check(
    model: &dyn Model,
    init: &ParticleEnsemble,
    controls: &[Policy],
    params: &SimParams,
    split: usize,
    noise: ContinuationNoise,
    budget: usize,
) -> Result<DppReport> {
    let n = controls.len();
    if n == 0 {
        return Err(Error::EmptyActionGrid);
    }
    let combinations = n * n;
    if combinations > budget {
        return Err(Error::BudgetExceeded {
            combinations: combinations as f64,
            budget,
        });
    }
    let tail_params = {
        let tail = params.tail(split)?;
        match noise {
            ContinuationNoise::Common => tail,
            ContinuationNoise::Independent => {
                let seed = rng::hash_key(params.seed, Domain::Auxiliary, 0, split as u64, 0);
                tail.with_seed(seed)
            }
        }
    };
    let theta = params.time(split);
    let weights = init.grid().weights().to_vec();
    let per_label = init.per_label();

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let full: Vec<Branch> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let policy = Policy::piecewise(vec![theta], vec![controls[i].clone(), controls[j].clone()])?;
            let r = simulate(model, &policy, init, params)?;
            Ok(Branch {
                value: cost(&r).value,
                samples: r.particle_costs,
            })
        })
        .collect::<Result<_>>()?;

    let heads: Vec<SimulationResult> = controls
        .par_iter()
        .map(|c| simulate(model, c, init, &params.head(split)?))
        .collect::<Result<_>>()?;
    let nested: Vec<Branch> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let head = &heads[i];
            let tail = simulate(model, &controls[j], &head.terminal, &tail_params)?;
            let samples = head
                .particle_costs
                .iter()
                .zip(&head.particle_terminal_costs)
                .zip(&tail.particle_costs)
                .map(|((c, g), t)| (c - g) + t)
                .collect();
            Ok(Branch {
                value: sum_costs(&[&head.step_costs, &tail.step_costs], tail.terminal_cost),
                samples,
            })
        })
        .collect::<Result<_>>()?;

    let mut lhs_at = 0;
    for (c, b) in full.iter().enumerate() {
        if b.value < full[lhs_at].value {
            lhs_at = c;
        }
    }
    // Inner minimization over continuations, then outer over first stages.
    let mut rhs_at = 0;
    for i in 0..n {
        let mut best = i * n;
        for c in i * n..(i + 1) * n {
            if nested[c].value < nested[best].value {
                best = c;
            }
        }
        if i == 0 || nested[best].value < nested[rhs_at].value {
            rhs_at = best;
        }
    }
    let (lhs, rhs) = (full[lhs_at].value, nested[rhs_at].value);
    let se_l = label_std_error(&full[lhs_at].samples, &weights, per_label);
    let se_r = label_std_error(&nested[rhs_at].samples, &weights, per_label);
    Ok(DppReport {
        lhs,
        rhs,
        gap: lhs - rhs,
        std_error: (se_l * se_l + se_r * se_r).sqrt(),
        lhs_choice: pairs[lhs_at],
        rhs_choice: pairs[rhs_at],
        combinations,
        theta,
    })
}
