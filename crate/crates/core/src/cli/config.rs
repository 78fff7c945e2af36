//! Experiment configuration: a strict JSON schema with documented defaults.

use serde::{Deserialize, Serialize};

use crate::bellman::{ActionSearch, ContinuationNoise};
use crate::calculus::{Quadrature, TestFunction};
use crate::dynamics::{
    ActionSpace, MeanField, MeanReversionParams, Model, ParticleEnsemble, Policy, PolynomialModel, PolynomialSpec,
    SimParams,
};
use crate::error::{invalid, Error, Result};
use crate::measure_space::{standard_normal_quantile, Graphon, LabelGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub graphon: GraphonSpec,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_space: Option<ActionBox>,
    pub initial: InitialSpec,
    #[serde(default)]
    pub policy: PolicySpec,
    pub simulation: SimulationSpec,
    pub task: TaskSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Labels `k/K`, `k = 1..=K`, with equal weights summing to `mass`.
    Uniform {
        size: usize,
        #[serde(default = "unit")]
        mass: f64,
    },
    Explicit { labels: Vec<f64>, weights: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphonSpec {
    Constant { value: f64 },
    Identity,
    /// `G(u, v) = offset + scale · u · v`.
    Product { offset: f64, scale: f64 },
    /// Row-major `K×K` kernel on the grid.
    Matrix { values: Vec<f64> },
}

/// Per-label weight: one value for every label, or one per label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValues {
    Shared(f64),
    PerLabel(Vec<f64>),
}

impl LabelValues {
    pub fn expand(&self, labels: usize) -> Result<Vec<f64>> {
        match self {
            Self::Shared(c) => Ok(vec![*c; labels]),
            Self::PerLabel(v) if v.len() == labels => Ok(v.clone()),
            Self::PerLabel(v) => Err(Error::DimensionMismatch {
                expected: labels,
                got: v.len(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqModelParams {
    pub tracking: LabelValues,
    #[serde(default)]
    pub sigma0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Polynomial(PolynomialSpec),
    MeanReversion(MeanReversionParams),
    GraphonLq(LqModelParams),
}

/// The same interval for every action coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBox {
    pub lower: f64,
    pub upper: f64,
}

/// Initial law `ξ^u = j(u, Z)`. Every state coordinate receives the same draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `mean + label_slope · u + std · Φ⁻¹(Z)`.
    Normal {
        #[serde(default)]
        mean: f64,
        #[serde(default)]
        label_slope: f64,
        #[serde(default = "unit")]
        std: f64,
    },
    Constant { value: f64 },
    /// `lower + (upper − lower) · Z`.
    Uniform { lower: f64, upper: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    #[default]
    Zero,
    Constant { action: Vec<f64> },
    /// Label-major, `K · q` entries.
    PerLabel { actions: Vec<f64> },
    /// `a = offset − gain · x` coordinatewise.
    LinearFeedback {
        gain: f64,
        #[serde(default)]
        offset: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
    /// Particles per label.
    pub particles: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub substeps: usize,
    #[serde(default = "one")]
    pub record_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSpec {
    Simulate,
    Picard {
        #[serde(default = "default_max_iters")]
        max_iters: usize,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "one")]
        segments: usize,
    },
    ItoVerify {
        test_function: TestFunction,
        #[serde(default)]
        quadrature: Quadrature,
    },
    BellmanResidual {
        candidate: TestFunction,
        times: Vec<f64>,
        search: ActionSearch,
    },
    DppCheck {
        controls: Vec<PolicySpec>,
        split_step: usize,
        #[serde(default)]
        noise: ContinuationNoise,
        #[serde(default = "default_dpp_budget")]
        budget: usize,
    },
    LqBenchmark {
        #[serde(default = "default_lq_search")]
        search: ActionSearch,
        #[serde(default = "default_checkpoints")]
        checkpoints: usize,
        #[serde(default = "default_oracle_steps")]
        oracle_steps: usize,
        #[serde(default = "default_csv_every")]
        csv_every: usize,
        /// Constant added to the oracle feedback for the suboptimality check.
        #[serde(default = "default_perturbation")]
        perturbation: f64,
    },
    Assumptions {
        #[serde(default = "default_probe_budget")]
        probe_budget: usize,
        #[serde(default)]
        probe_seed: u64,
    },
}

fn unit() -> f64 {
    1.0
}
fn one() -> usize {
    1
}
fn default_max_iters() -> usize {
    50
}
fn default_tol() -> f64 {
    1e-3
}
fn default_dpp_budget() -> usize {
    100
}
pub(crate) fn default_lq_search() -> ActionSearch {
    ActionSearch::cube(1, -10.0, 10.0, 41, 6)
}
fn default_checkpoints() -> usize {
    5
}
fn default_oracle_steps() -> usize {
    4000
}
fn default_csv_every() -> usize {
    10
}
fn default_perturbation() -> f64 {
    0.5
}
fn default_probe_budget() -> usize {
    200
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Picard { .. } => "picard",
            Self::ItoVerify { .. } => "ito-verify",
            Self::BellmanResidual { .. } => "bellman-residual",
            Self::DppCheck { .. } => "dpp-check",
            Self::LqBenchmark { .. } => "lq-benchmark",
            Self::Assumptions { .. } => "assumptions",
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks that the schema alone cannot express.
    pub fn validate(&self) -> Result<()> {
        let s = &self.simulation;
        if s.steps == 0 || s.particles == 0 {
            return Err(invalid("simulation.steps and simulation.particles must be positive"));
        }
        if s.substeps == 0 || s.record_every == 0 {
            return Err(invalid("simulation.substeps and simulation.record_every must be positive"));
        }
        if !(s.t0.is_finite() && s.t_end.is_finite() && s.t0 < s.t_end) {
            return Err(invalid(format!("need t0 < t_end, got {} and {}", s.t0, s.t_end)));
        }
        let grid = self.label_grid()?;
        self.label_graphon(&grid)?;
        if let Some(b) = &self.action_space {
            if !(b.lower < b.upper) {
                return Err(invalid("action_space.lower must be below action_space.upper"));
            }
        }
        match (&self.task, &self.model) {
            (TaskSpec::Picard { max_iters, tol, segments }, _) => {
                if *max_iters == 0 || !(*tol > 0.0) {
                    return Err(invalid("picard needs max_iters >= 1 and tol > 0"));
                }
                if *segments == 0 || *segments > s.steps {
                    return Err(invalid(format!("picard segments must lie in 1..={}", s.steps)));
                }
            }
            (TaskSpec::ItoVerify { test_function, .. }, _) => test_function.validate(grid.len())?,
            (TaskSpec::BellmanResidual { candidate, times, .. }, _) => {
                candidate.validate(grid.len())?;
                if times.is_empty() || times.iter().any(|t| !(*t >= s.t0 && *t < s.t_end)) {
                    return Err(invalid("bellman-residual times must be nonempty and lie in [t0, t_end)"));
                }
            }
            (TaskSpec::DppCheck { controls, split_step, .. }, _) => {
                if controls.is_empty() {
                    return Err(Error::EmptyActionGrid);
                }
                if *split_step == 0 || *split_step >= s.steps {
                    return Err(invalid(format!("dpp-check split_step must lie in 1..{}", s.steps)));
                }
            }
            (TaskSpec::LqBenchmark { csv_every, .. }, ModelSpec::GraphonLq(_)) => {
                if s.t0 != 0.0 {
                    return Err(invalid("lq-benchmark runs on [0, t_end]; set simulation.t0 = 0"));
                }
                if *csv_every == 0 {
                    return Err(invalid("csv_every must be positive"));
                }
            }
            (TaskSpec::LqBenchmark { .. }, _) => {
                return Err(invalid("lq-benchmark needs model.family = graphon_lq"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn label_grid(&self) -> Result<LabelGrid> {
        match &self.grid {
            GridSpec::Uniform { size, mass } => LabelGrid::uniform(*size, *mass),
            GridSpec::Explicit { labels, weights } => LabelGrid::new(labels.clone(), weights.clone()),
        }
    }

    pub fn label_graphon(&self, grid: &LabelGrid) -> Result<Graphon> {
        match &self.graphon {
            GraphonSpec::Constant { value } => Graphon::constant(grid, *value),
            GraphonSpec::Identity => Graphon::identity(grid),
            GraphonSpec::Product { offset, scale } => Graphon::from_fn(grid, |u, v| offset + scale * u * v),
            GraphonSpec::Matrix { values } => Graphon::from_matrix(grid, values.clone()),
        }
    }

    pub fn state_dim(&self) -> usize {
        match &self.model {
            ModelSpec::Polynomial(p) => p.dim,
            _ => 1,
        }
    }

    pub fn actions(&self) -> Result<ActionSpace> {
        let d = self.state_dim();
        match &self.action_space {
            Some(b) => ActionSpace::cube(d, b.lower, b.upper),
            None => Ok(ActionSpace::unbounded(d)),
        }
    }

    pub fn build_model(&self) -> Result<PolynomialModel> {
        let grid = self.label_grid()?;
        let graphon = self.label_graphon(&grid)?;
        let actions = self.actions()?;
        match &self.model {
            ModelSpec::Polynomial(p) => PolynomialModel::new(p.clone(), &grid, graphon, actions),
            ModelSpec::MeanReversion(p) => PolynomialModel::mean_reversion(&grid, graphon, p, actions),
            ModelSpec::GraphonLq(p) => {
                PolynomialModel::graphon_lq(&grid, graphon, &p.tracking.expand(grid.len())?, p.sigma0, actions)
            }
        }
    }

    pub fn sim_params(&self, seed: u64) -> Result<SimParams> {
        let s = &self.simulation;
        Ok(SimParams::new(s.t0, s.t_end, s.steps, seed)?
            .with_substeps(s.substeps)
            .with_record_every(s.record_every))
    }

    pub fn initial_ensemble(&self, seed: u64) -> Result<ParticleEnsemble> {
        let grid = self.label_grid()?;
        let d = self.state_dim();
        let init = self.initial.clone();
        let map = move |_: usize, u: f64, z: f64| {
            let x = match &init {
                InitialSpec::Normal { mean, label_slope, std } => {
                    mean + label_slope * u + std * standard_normal_quantile(z)
                }
                InitialSpec::Constant { value } => *value,
                InitialSpec::Uniform { lower, upper } => lower + (upper - lower) * z,
            };
            vec![x; d]
        };
        ParticleEnsemble::from_quantile_map(map, &grid, self.simulation.particles, seed)
    }
}

impl PolicySpec {
    pub fn build(&self, model: &dyn Model, labels: usize) -> Result<Policy> {
        let q = model.action_space().dim();
        match self {
            Self::Zero => Ok(Policy::constant(vec![0.0; q])),
            Self::Constant { action } => {
                if action.len() != q {
                    return Err(Error::DimensionMismatch {
                        expected: q,
                        got: action.len(),
                    });
                }
                Ok(Policy::constant(action.clone()))
            }
            Self::PerLabel { actions } => {
                if actions.len() != labels * q {
                    return Err(Error::DimensionMismatch {
                        expected: labels * q,
                        got: actions.len(),
                    });
                }
                Ok(Policy::per_label_constant(q, actions.clone()))
            }
            Self::LinearFeedback { gain, offset } => {
                let (gain, offset) = (*gain, *offset);
                Ok(Policy::feedback(move |_: usize, _: f64, x: &[f64], _: &MeanField, out: &mut [f64]| {
                    for (a, xi) in out.iter_mut().zip(x) {
                        *a = offset - gain * xi;
                    }
                }))
            }
        }
    }
}
