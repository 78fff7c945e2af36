//! Schema text, defaults and a runnable example config for every task.

use super::config::{
    ExperimentConfig, GraphonSpec, GridSpec, InitialSpec, LabelValues, LqModelParams, ModelSpec, PolicySpec,
    SimulationSpec, TaskSpec,
};
use super::CliError;
use crate::bellman::{ActionSearch, ContinuationNoise};
use crate::calculus::{Component, Functional, Quadrature, Term, TestFunction, TimeFactor};
use crate::dynamics::{CostTerms, DriftTerms, MeanReversionParams, PolynomialSpec, VolatilityTerms};

pub const TASKS: [&str; 7] = [
    "simulate",
    "picard",
    "ito-verify",
    "bellman-residual",
    "dpp-check",
    "lq-benchmark",
    "assumptions",
];

const COMMON: &str = r#"Config: one JSON object; unknown keys are rejected.

  grid        {"kind":"uniform","size":K,"mass":1.0}         labels k/K, equal weights
              {"kind":"explicit","labels":[..],"weights":[..]}
  graphon     {"kind":"constant","value":g} | {"kind":"identity"}
              {"kind":"product","offset":a,"scale":b}        G(u,v) = a + b u v
              {"kind":"matrix","values":[K*K row-major]}
  model       {"family":"polynomial","params":{dim=1, drift{constant,state,action,
                 neighborhood_mean,neighborhood_action_mean}, volatility{constant,state,
                 neighborhood_mean}, running{constant,linear,state_quadratic,
                 action_quadratic,tracking,tracking_slope}, terminal{..same..}}}
                 every coefficient defaults to 0
              {"family":"mean_reversion","params":{kappa, sigma0=0, sigma1=0,
                 tracking=0, action_cost=1}}
              {"family":"graphon_lq","params":{tracking: number or [K], sigma0=0}}
  action_space {"lower":lo,"upper":hi}                       optional; default unbounded
  initial     {"kind":"normal","mean"=0,"label_slope"=0,"std"=1}
              {"kind":"constant","value":x} | {"kind":"uniform","lower":a,"upper":b}
  policy      {"kind":"zero"} (default) | {"kind":"constant","action":[q]}
              {"kind":"per_label","actions":[K*q]}
              {"kind":"linear_feedback","gain":k,"offset"=0}   a = offset - k x
  simulation  {"t0"=0, "t_end", "steps">0, "particles">0 (per label), "seed",
               "substeps"=1, "record_every"=1}
              seed: u64 driving initial draws and noise; env GRAPHON_MFC_SEED overrides it
  output      optional directory; `--out` overrides it; default runs/<task>-<hash>
  task        {"kind":"<task>", ...task fields...}
"#;

fn task_text(task: &str) -> &'static str {
    match task {
        "simulate" => {
            "Task simulate (no fields).\n  Writes flow.csv, initial.csv, terminal.csv, summary.json.\n"
        }
        "picard" => {
            "Task picard: Picard iteration of the frozen-flow map.\n  max_iters = 50\n  tol default 1e-3 (path-coupled collection distance)\n  segments = 1 (solve on consecutive sub-horizons when > 1)\n  Writes flow.csv, picard.json. Exit code 4 when not converged.\n"
        }
        "ito-verify" => {
            "Task ito-verify: chain-rule residual along a simulated flow.\n  test_function: {dim, terms:[{time, functional}], offset}\n  quadrature = \"trapezoid\" | \"left_endpoint\"\n  Writes ito.json, ito.csv.\n"
        }
        "bellman-residual" => {
            "Task bellman-residual: residual of a candidate value at flow snapshots.\n  candidate: test function\n  times: [t in [t0, t_end)], snapped to the step grid\n  search: {lower:[q], upper:[q], points, zoom_levels = 0, budget = 100000}\n  Writes bellman.json.\n"
        }
        "dpp-check" => {
            "Task dpp-check: two-stage enumeration over a finite control set.\n  controls: [policy]\n  split_step: step index of the intermediate time, in 1..steps\n  noise = \"common\" | \"independent\"\n  budget = 100 (maximum number of control pairs)\n  Writes dpp.json.\n"
        }
        "lq-benchmark" => {
            "Task lq-benchmark: Riccati oracle, verification and a perturbed-feedback check.\n  Requires model.family = graphon_lq and simulation.t0 = 0.\n  search = {lower:[-10], upper:[10], points: 41, zoom_levels: 6}\n  checkpoints = 5\n  oracle_steps = 4000\n  csv_every = 10\n  perturbation = 0.5 (constant added to the optimal feedback)\n  Writes oracle.csv, lq.json.\n"
        }
        "assumptions" => {
            "Task assumptions: random probes of declared Lipschitz, growth and Hölder constants.\n  probe_budget = 200\n  probe_seed = 0\n  Writes assumptions.json.\n"
        }
        _ => "",
    }
}

/// Schema, defaults and a runnable example for `task`.
pub fn describe(task: &str) -> Result<String, CliError> {
    let example = example_config(task)?;
    let json = serde_json::to_string_pretty(&example).map_err(crate::Error::from)?;
    Ok(format!("{COMMON}\n{}\nExample:\n{json}\n", task_text(task)))
}

fn base(task: TaskSpec, model: ModelSpec, simulation: SimulationSpec) -> ExperimentConfig {
    ExperimentConfig {
        grid: GridSpec::Uniform { size: 4, mass: 1.0 },
        graphon: GraphonSpec::Product {
            offset: 0.2,
            scale: 0.5,
        },
        model,
        action_space: None,
        initial: InitialSpec::Normal {
            mean: 0.0,
            label_slope: 1.0,
            std: 0.5,
        },
        policy: PolicySpec::Zero,
        simulation,
        task,
        output: None,
    }
}

fn sim(t_end: f64, steps: usize, particles: usize, seed: u64) -> SimulationSpec {
    SimulationSpec {
        t0: 0.0,
        t_end,
        steps,
        particles,
        seed,
        substeps: 1,
        record_every: 1,
    }
}

fn mean_reversion() -> ModelSpec {
    ModelSpec::MeanReversion(MeanReversionParams {
        kappa: 0.5,
        sigma0: 0.3,
        sigma1: 0.5,
        tracking: 1.0,
        action_cost: 1.0,
    })
}

fn stochastic_polynomial() -> ModelSpec {
    ModelSpec::Polynomial(PolynomialSpec {
        drift: DriftTerms {
            state: -0.3,
            action: 1.0,
            neighborhood_mean: 0.3,
            ..Default::default()
        },
        volatility: VolatilityTerms {
            constant: 0.4,
            ..Default::default()
        },
        running: CostTerms {
            action_quadratic: 1.0,
            tracking: 1.0,
            ..Default::default()
        },
        terminal: CostTerms {
            state_quadratic: 1.0,
            ..Default::default()
        },
        ..Default::default()
    })
}

fn square_mean() -> TestFunction {
    TestFunction::single(
        1,
        Functional::Linear {
            component: Component::square_norm(),
        },
    )
}

/// A small runnable config for `task`.
pub fn example_config(task: &str) -> Result<ExperimentConfig, CliError> {
    let cfg = match task {
        "simulate" => base(
            TaskSpec::Simulate,
            ModelSpec::Polynomial(PolynomialSpec {
                drift: DriftTerms {
                    constant: 1.0,
                    ..Default::default()
                },
                ..Default::default()
            }),
            sim(1.0, 20, 50, 7),
        ),
        "picard" => base(
            TaskSpec::Picard {
                max_iters: 50,
                tol: 1e-3,
                segments: 1,
            },
            mean_reversion(),
            sim(0.5, 50, 200, 11),
        ),
        "ito-verify" => base(
            TaskSpec::ItoVerify {
                test_function: square_mean(),
                quadrature: Quadrature::Trapezoid,
            },
            ModelSpec::Polynomial(PolynomialSpec {
                volatility: VolatilityTerms {
                    constant: 1.0,
                    ..Default::default()
                },
                ..Default::default()
            }),
            sim(0.5, 500, 500, 3),
        ),
        "bellman-residual" => {
            let candidate = TestFunction::new(
                1,
                vec![Term {
                    time: TimeFactor::Polynomial {
                        coefficients: vec![1.0, -0.5],
                    },
                    functional: Functional::Linear {
                        component: Component::square_norm(),
                    },
                }],
            );
            base(
                TaskSpec::BellmanResidual {
                    candidate,
                    times: vec![0.0, 0.25, 0.5],
                    search: ActionSearch::cube(1, -3.0, 3.0, 25, 4),
                },
                stochastic_polynomial(),
                sim(1.0, 20, 100, 5),
            )
        }
        "dpp-check" => base(
            TaskSpec::DppCheck {
                controls: vec![
                    PolicySpec::Constant { action: vec![-0.5] },
                    PolicySpec::Constant { action: vec![0.0] },
                    PolicySpec::Constant { action: vec![0.5] },
                ],
                split_step: 10,
                noise: ContinuationNoise::Common,
                budget: 100,
            },
            stochastic_polynomial(),
            sim(1.0, 20, 200, 9),
        ),
        "lq-benchmark" => {
            let mut cfg = base(
                TaskSpec::LqBenchmark {
                    search: super::config::default_lq_search(),
                    checkpoints: 5,
                    oracle_steps: 4000,
                    csv_every: 10,
                    perturbation: 0.5,
                },
                ModelSpec::GraphonLq(LqModelParams {
                    tracking: LabelValues::PerLabel(vec![1.0, 1.5, 2.0]),
                    sigma0: 0.3,
                }),
                sim(1.0, 100, 500, 13),
            );
            cfg.grid = GridSpec::Uniform { size: 3, mass: 1.0 };
            cfg
        }
        "assumptions" => base(
            TaskSpec::Assumptions {
                probe_budget: 200,
                probe_seed: 1,
            },
            mean_reversion(),
            sim(1.0, 20, 100, 17),
        ),
        other => {
            return Err(CliError::UnknownTask {
                task: other.to_string(),
            })
        }
    };
    Ok(cfg)
}
