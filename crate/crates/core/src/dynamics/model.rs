use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::measure_space::{Graphon, LabelGrid, MeasureCollection};

/// Box `A = Π [lower_j, upper_j] ⊂ ℝ^q` with a designated origin. Infinite
/// bounds are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    origin: Vec<f64>,
}

const ACTION_SLACK: f64 = 1e-12;

impl ActionSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || origin.len() != lower.len() {
            return Err(invalid("action box bounds and origin must share a positive dimension"));
        }
        for j in 0..lower.len() {
            if lower[j].is_nan() || upper[j].is_nan() || !(lower[j] <= upper[j]) {
                return Err(invalid(format!("empty action interval on axis {j}")));
            }
            if !(lower[j] <= origin[j] && origin[j] <= upper[j]) {
                return Err(invalid("action origin lies outside the box"));
            }
        }
        Ok(Self {
            lower,
            upper,
            origin,
        })
    }

    /// `[lo, hi]^q` with origin `0` (clamped into the box).
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], vec![0.0f64.clamp(lo, hi); dim])
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            origin: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim()
            && a.iter().enumerate().all(|(j, v)| {
                v.is_finite()
                    && *v >= self.lower[j] - ACTION_SLACK
                    && *v <= self.upper[j] + ACTION_SLACK
            })
    }

    /// `d(a, 0_A)`.
    pub fn distance_to_origin(&self, a: &[f64]) -> f64 {
        a.iter()
            .zip(&self.origin)
            .map(|(x, o)| (x - o) * (x - o))
            .sum::<f64>()
            .sqrt()
    }
}

/// Constants a model declares for the standing assumptions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    /// `L`: Lipschitz constant of `b, σ` in `(x, μ)`.
    pub lipschitz: f64,
    /// `M`: linear growth constant of `|b| + |σ|`.
    pub growth: f64,
    /// `K`: Hölder constant of `f, g`; `None` when no global constant exists.
    pub holder: Option<f64>,
    pub holder_exponents: [f64; 4],
    /// `|b| + |σ| ≤ M(1 + |x| + d(μ, δ₀))`, free of the action terms.
    pub strengthened_growth: bool,
    /// Coefficients ignore the action law `ν`.
    pub action_law_independent: bool,
}

impl DeclaredConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz >= 0.0 && self.growth >= 0.0) {
            return Err(invalid("declared L and M must be nonnegative"));
        }
        if let Some(k) = self.holder {
            if !(k >= 0.0) {
                return Err(invalid("declared K must be nonnegative"));
            }
        }
        if self.holder_exponents.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
            return Err(invalid("Hölder exponents must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// The measure arguments of the coefficients at one time: the state-law
/// collection `μ`, optionally the action-law collection `ν`, and cached
/// per-label means (plus graphon-neighborhood means when a kernel is given).
#[derive(Debug)]
pub struct MeanField<'a> {
    states: &'a MeasureCollection,
    actions: Option<&'a MeasureCollection>,
    state_means: Vec<f64>,
    action_means: Option<Vec<f64>>,
    neighborhood_states: Option<Vec<f64>>,
    neighborhood_actions: Option<Vec<f64>>,
}

impl<'a> MeanField<'a> {
    pub fn new(
        states: &'a MeasureCollection,
        actions: Option<&'a MeasureCollection>,
        graphon: Option<&Graphon>,
    ) -> Self {
        let state_means = states.label_means();
        let action_means = actions.map(|a| a.label_means());
        let grid = states.grid();
        let neighborhood = |means: &[f64], dim: usize, g: &Graphon| {
            let mut out = vec![0.0; grid.len() * dim];
            for (k, chunk) in out.chunks_exact_mut(dim).enumerate() {
                g.neighborhood_mean(grid, k, means, dim, chunk);
            }
            out
        };
        let neighborhood_states = graphon.map(|g| neighborhood(&state_means, states.dim(), g));
        let neighborhood_actions = match (graphon, &action_means, actions) {
            (Some(g), Some(m), Some(a)) => Some(neighborhood(m, a.dim(), g)),
            _ => None,
        };
        Self {
            states,
            actions,
            state_means,
            action_means,
            neighborhood_states,
            neighborhood_actions,
        }
    }

    pub fn grid(&self) -> &LabelGrid {
        self.states.grid()
    }

    pub fn states(&self) -> &MeasureCollection {
        self.states
    }

    pub fn actions(&self) -> Option<&MeasureCollection> {
        self.actions
    }

    pub fn state_mean(&self, k: usize) -> &[f64] {
        let d = self.states.dim();
        &self.state_means[k * d..(k + 1) * d]
    }

    /// Flat `K×d` per-label state means.
    pub fn state_means(&self) -> &[f64] {
        &self.state_means
    }

    pub fn action_mean(&self, k: usize) -> Option<&[f64]> {
        let q = self.actions?.dim();
        self.action_means.as_deref().map(|m| &m[k * q..(k + 1) * q])
    }

    /// Mean of the graphon neighborhood of `μ` seen from label `k`.
    pub fn neighborhood_state_mean(&self, k: usize) -> Option<&[f64]> {
        let d = self.states.dim();
        self.neighborhood_states
            .as_deref()
            .map(|m| &m[k * d..(k + 1) * d])
    }

    pub fn neighborhood_action_mean(&self, k: usize) -> Option<&[f64]> {
        let q = self.actions?.dim();
        self.neighborhood_actions
            .as_deref()
            .map(|m| &m[k * q..(k + 1) * q])
    }
}

/// A coefficient set `(b, σ, f, g, A)` on a label grid.
///
/// `label` is an index into the grid the model was built for. Volatility is
/// written row-major into a `d×ℓ` buffer.
pub trait Model: Send + Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn action_space(&self) -> &ActionSpace;
    /// Kernel used to precompute neighborhood means in [`MeanField`].
    fn graphon(&self) -> Option<&Graphon> {
        None
    }
    fn drift(&self, label: usize, x: &[f64], a: &[f64], env: &MeanField, out: &mut [f64]);
    fn volatility(&self, label: usize, x: &[f64], a: &[f64], env: &MeanField, out: &mut [f64]);
    fn running_cost(&self, label: usize, x: &[f64], a: &[f64], env: &MeanField) -> f64;
    fn terminal_cost(&self, label: usize, x: &[f64], env: &MeanField) -> f64;
    fn constants(&self) -> DeclaredConstants;

    /// Build the environment this model expects for the given laws.
    fn mean_field<'a>(
        &self,
        states: &'a MeasureCollection,
        actions: Option<&'a MeasureCollection>,
    ) -> MeanField<'a> {
        MeanField::new(states, actions, self.graphon())
    }
}
