//! Task execution. Each task writes its artifacts through [`RunDir`] and
//! returns a short summary for the manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, LqModelParams, ModelSpec, TaskSpec};
use crate::bellman::{
    bellman_residual, build_lq_benchmark, dpp_check, terminal_residual, verify_policy, CandidateValue, LqParams,
};
use crate::calculus::ito_residual;
use crate::dynamics::{cost, moment_check, simulate, validate_coefficients, Policy};
use crate::error::Result;
use crate::fixedpoint::{picard_solve, picard_solve_split, PicardOptions};
use crate::measure_space::io::{fmt_f64, write_collection_csv, write_flow_csv};

/// Output directory of one run; remembers every file written.
pub(crate) struct RunDir {
    root: PathBuf,
    outputs: Vec<String>,
}

impl RunDir {
    pub(crate) fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        }
    }

    pub(crate) fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.root.join(name))?))
    }

    pub(crate) fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub(crate) fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(bytes)?;
        w.flush()?;
        Ok(())
    }

    pub(crate) fn into_outputs(self) -> Vec<String> {
        self.outputs
    }
}

pub(crate) struct TaskOutcome {
    pub converged: bool,
    pub summary: Value,
}

impl TaskOutcome {
    fn done(summary: Value) -> Self {
        Self {
            converged: true,
            summary,
        }
    }
}

pub(crate) fn execute(cfg: &ExperimentConfig, seed: u64, dir: &mut RunDir) -> Result<TaskOutcome> {
    let grid = cfg.label_grid()?;
    let model = cfg.build_model()?;
    let init = cfg.initial_ensemble(seed)?;
    let params = cfg.sim_params(seed)?;
    let policy = cfg.policy.build(&model, grid.len())?;

    match &cfg.task {
        TaskSpec::Simulate => {
            let r = simulate(&model, &policy, &init, &params)?;
            let j = cost(&r);
            let moments = moment_check(&model, &r);
            write_flow_csv(dir.create("flow.csv")?, &r.flow)?;
            write_collection_csv(dir.create("initial.csv")?, &init.collection())?;
            write_collection_csv(dir.create("terminal.csv")?, &r.terminal.collection())?;
            dir.write_json(
                "summary.json",
                &json!({
                    "cost": j,
                    "terminal_cost": r.terminal_cost,
                    "diagnostics": r.diagnostics,
                    "moment_check": moments,
                }),
            )?;
            Ok(TaskOutcome::done(json!({ "cost": j })))
        }
        TaskSpec::Picard {
            max_iters,
            tol,
            segments,
        } => {
            let opts = PicardOptions {
                max_iters: *max_iters,
                tol: *tol,
            };
            let (flow, states) = if *segments == 1 {
                let (r, st) = picard_solve(&model, &policy, &init, &params, &opts)?;
                (r.flow, vec![st])
            } else {
                picard_solve_split(&model, &policy, &init, &params, &opts, *segments)?
            };
            let converged = states.iter().all(|s| s.converged);
            write_flow_csv(dir.create("flow.csv")?, &flow)?;
            dir.write_json("picard.json", &json!({ "converged": converged, "segments": states }))?;
            let at: Vec<Option<usize>> = states.iter().map(|s| s.converged_at_iteration).collect();
            let summary = if at.len() == 1 {
                json!({ "converged": converged, "converged_at_iteration": at[0], "iterations": states[0].iterate_index })
            } else {
                json!({ "converged": converged, "converged_at_iteration": at })
            };
            Ok(TaskOutcome { converged, summary })
        }
        TaskSpec::ItoVerify {
            test_function,
            quadrature,
        } => {
            let r = simulate(&model, &policy, &init, &params.clone().with_record_every(1))?;
            let ito = ito_residual(test_function, &model, &r, *quadrature)?;
            let mut w = csv::Writer::from_writer(dir.create("ito.csv")?);
            w.write_record(["time", "integrand"])?;
            for (t, g) in r.flow.times().iter().zip(&ito.integrand) {
                w.write_record([fmt_f64(*t), fmt_f64(*g)])?;
            }
            w.flush()?;
            let report = json!({
                "lhs": ito.lhs,
                "rhs": ito.rhs,
                "residual": ito.residual,
                "quadrature": ito.quadrature,
            });
            dir.write_json("ito.json", &report)?;
            Ok(TaskOutcome::done(report))
        }
        TaskSpec::BellmanResidual {
            candidate,
            times,
            search,
        } => {
            let phi = CandidateValue::new(candidate.clone(), "configured candidate");
            let p = params.clone().with_record_every(1);
            let r = simulate(&model, &policy, &init, &p)?;
            let mut points = Vec::with_capacity(times.len());
            let mut worst: f64 = 0.0;
            for &requested in times {
                let n = (((requested - p.t0) / p.dt).round() as usize).min(p.steps - 1);
                let t = r.flow.times()[n];
                let b = bellman_residual(&model, &phi, t, r.flow.snapshot(n), search)?;
                worst = worst.max(b.residual.abs());
                points.push(json!({
                    "requested_time": requested,
                    "time": t,
                    "residual": b.residual,
                    "time_derivative": b.time_derivative,
                    "infimum": b.infimum,
                }));
            }
            let terminal = terminal_residual(&model, &phi, p.t_end(), r.flow.terminal())?;
            dir.write_json(
                "bellman.json",
                &json!({
                    "points": points,
                    "terminal_residual": terminal,
                    "grid_resolution": search.resolution(),
                }),
            )?;
            Ok(TaskOutcome::done(json!({
                "max_abs_residual": worst,
                "terminal_residual": terminal,
            })))
        }
        TaskSpec::DppCheck {
            controls,
            split_step,
            noise,
            budget,
        } => {
            let controls: Vec<Policy> = controls
                .iter()
                .map(|c| c.build(&model, grid.len()))
                .collect::<Result<_>>()?;
            let report = dpp_check(&model, &init, &controls, &params, *split_step, *noise, *budget)?;
            dir.write_json("dpp.json", &report)?;
            Ok(TaskOutcome::done(json!({
                "gap": report.gap,
                "std_error": report.std_error,
            })))
        }
        TaskSpec::LqBenchmark {
            search,
            checkpoints,
            oracle_steps,
            csv_every,
            perturbation,
        } => {
            let ModelSpec::GraphonLq(LqModelParams { tracking, sigma0 }) = &cfg.model else {
                unreachable!("validated: lq-benchmark requires graphon_lq");
            };
            let lq = LqParams {
                tracking: tracking.expand(grid.len())?,
                sigma0: *sigma0,
                horizon: params.t_end(),
                oracle_steps: *oracle_steps,
            };
            let bench = build_lq_benchmark(&grid, &cfg.label_graphon(&grid)?, &lq)?;
            let phi = bench.candidate();
            let report = verify_policy(&model, &phi, &bench.feedback(0.0), &init, &params, search, *checkpoints)?;
            let perturbed = cost(&simulate(&model, &bench.feedback(*perturbation), &init, &params)?);
            let excess = perturbed.value - report.cost.value;
            let pooled = (perturbed.std_error.powi(2) + report.cost.std_error.powi(2)).sqrt();
            bench.write_oracle_csv(dir.create("oracle.csv")?, *csv_every)?;
            let summary = json!({
                "riccati_residual": bench.riccati_residual(),
                "candidate_value": report.candidate_value,
                "cost": report.cost,
                "gap": report.gap,
                "max_bellman_residual": report.bellman_residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs())),
                "terminal_residual": report.terminal_residual,
            });
            dir.write_json(
                "lq.json",
                &json!({
                    "riccati_residual": bench.riccati_residual(),
                    "verification": report,
                    "perturbation": perturbation,
                    "perturbed_cost": perturbed,
                    "perturbed_excess": excess,
                    "perturbed_excess_in_std_errors": if pooled > 0.0 { excess / pooled } else { f64::INFINITY },
                }),
            )?;
            Ok(TaskOutcome::done(summary))
        }
        TaskSpec::Assumptions {
            probe_budget,
            probe_seed,
        } => {
            let report = validate_coefficients(&model, &grid, *probe_budget, *probe_seed)?;
            let r = simulate(&model, &policy, &init, &params)?;
            let moments = moment_check(&model, &r);
            dir.write_json(
                "assumptions.json",
                &json!({ "coefficients": report, "moment_check": moments }),
            )?;
            Ok(TaskOutcome::done(json!({
                "violations": report.violations.len(),
                "moment_bound_holds": moments.holds,
            })))
        }
    }
}
