//! Isotropic polynomial coefficient family with graphon mean-field terms.
//!
//! With `m` the graphon-neighborhood state mean and `ā` the neighborhood
//! action mean, coordinatewise:
//!
//! ```text
//! b = β₀ + βₓ x + βₐ a + βₘ m + β_ν ā
//! σ = diag(s₀ + sₓ x + sₘ m)
//! f = c₀ + c₁ Σx + ½q|x|² + ½r|a|² + ½c(u)|x − m|²
//! g = c₀ + c₁ Σx + ½q|x|² + ½c(u)|x − m|²
//! ```
//!
//! State, noise and action dimensions coincide.

use serde::{Deserialize, Serialize};

use super::model::{ActionSpace, DeclaredConstants, MeanField, Model};
use crate::error::{invalid, Result};
use crate::measure_space::{Graphon, LabelGrid};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftTerms {
    pub constant: f64,
    pub state: f64,
    pub action: f64,
    pub neighborhood_mean: f64,
    pub neighborhood_action_mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolatilityTerms {
    pub constant: f64,
    pub state: f64,
    pub neighborhood_mean: f64,
}

/// Tracking weight is `c(u) = tracking + tracking_slope · u`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostTerms {
    pub constant: f64,
    pub linear: f64,
    pub state_quadratic: f64,
    pub action_quadratic: f64,
    pub tracking: f64,
    pub tracking_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSpec {
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub drift: DriftTerms,
    #[serde(default)]
    pub volatility: VolatilityTerms,
    #[serde(default)]
    pub running: CostTerms,
    #[serde(default)]
    pub terminal: CostTerms,
}

fn one() -> usize {
    1
}

impl Default for PolynomialSpec {
    fn default() -> Self {
        Self {
            dim: 1,
            drift: DriftTerms::default(),
            volatility: VolatilityTerms::default(),
            running: CostTerms::default(),
            terminal: CostTerms::default(),
        }
    }
}

/// Parameters of the graphon mean-reversion family
/// `b = κ(m − x) + a`, `σ = σ₀ + σ₁ m`, `f = ½r|a|² + ½c|x − m|²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanReversionParams {
    pub kappa: f64,
    #[serde(default)]
    pub sigma0: f64,
    #[serde(default)]
    pub sigma1: f64,
    #[serde(default)]
    pub tracking: f64,
    #[serde(default = "unit")]
    pub action_cost: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug)]
pub struct PolynomialModel {
    spec: PolynomialSpec,
    grid: LabelGrid,
    graphon: Graphon,
    running_tracking: Vec<f64>,
    terminal_tracking: Vec<f64>,
    action_space: ActionSpace,
}

impl PolynomialModel {
    pub fn new(
        spec: PolynomialSpec,
        grid: &LabelGrid,
        graphon: Graphon,
        action_space: ActionSpace,
    ) -> Result<Self> {
        if spec.dim == 0 {
            return Err(invalid("state dimension must be positive"));
        }
        if action_space.dim() != spec.dim {
            return Err(invalid(format!(
                "action dimension {} differs from state dimension {}",
                action_space.dim(),
                spec.dim
            )));
        }
        if graphon.size() != grid.len() {
            return Err(invalid("graphon size differs from the label grid"));
        }
        if spec.terminal.action_quadratic != 0.0 {
            return Err(invalid("terminal cost cannot depend on the action"));
        }
        let all = [
            spec.drift.constant,
            spec.drift.state,
            spec.drift.action,
            spec.drift.neighborhood_mean,
            spec.drift.neighborhood_action_mean,
            spec.volatility.constant,
            spec.volatility.state,
            spec.volatility.neighborhood_mean,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("coefficients must be finite"));
        }
        let profile = |c: &CostTerms| -> Result<Vec<f64>> {
            let p: Vec<f64> = grid
                .labels()
                .iter()
                .map(|u| c.tracking + c.tracking_slope * u)
                .collect();
            if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("tracking weight c(u) must be nonnegative"));
            }
            Ok(p)
        };
        let running_tracking = profile(&spec.running)?;
        let terminal_tracking = profile(&spec.terminal)?;
        if graphon.min_degree() <= 0.0 {
            let label = graphon
                .row_degree()
                .iter()
                .position(|d| *d <= 0.0)
                .unwrap_or(0);
            return Err(crate::error::Error::ZeroDegree { label });
        }
        Ok(Self {
            spec,
            grid: grid.clone(),
            graphon,
            running_tracking,
            terminal_tracking,
            action_space,
        })
    }

    /// `b = a`, `σ = σ₀`, `f = ½|a|² + ½c(u)|x − m|²`, `g = 0`.
    pub fn graphon_lq(
        grid: &LabelGrid,
        graphon: Graphon,
        tracking: &[f64],
        sigma0: f64,
        action_space: ActionSpace,
    ) -> Result<Self> {
        let spec = PolynomialSpec {
            dim: action_space.dim(),
            drift: DriftTerms {
                action: 1.0,
                ..Default::default()
            },
            volatility: VolatilityTerms {
                constant: sigma0,
                ..Default::default()
            },
            running: CostTerms {
                action_quadratic: 1.0,
                ..Default::default()
            },
            terminal: CostTerms::default(),
        };
        let mut m = Self::new(spec, grid, graphon, action_space)?;
        m.set_running_tracking(tracking.to_vec())?;
        Ok(m)
    }

    pub fn mean_reversion(
        grid: &LabelGrid,
        graphon: Graphon,
        p: &MeanReversionParams,
        action_space: ActionSpace,
    ) -> Result<Self> {
        let spec = PolynomialSpec {
            dim: action_space.dim(),
            drift: DriftTerms {
                state: -p.kappa,
                action: 1.0,
                neighborhood_mean: p.kappa,
                ..Default::default()
            },
            volatility: VolatilityTerms {
                constant: p.sigma0,
                neighborhood_mean: p.sigma1,
                ..Default::default()
            },
            running: CostTerms {
                action_quadratic: p.action_cost,
                tracking: p.tracking,
                ..Default::default()
            },
            terminal: CostTerms::default(),
        };
        Self::new(spec, grid, graphon, action_space)
    }

    /// Replace the running tracking weights `c(u_k)` label by label.
    pub fn set_running_tracking(&mut self, per_label: Vec<f64>) -> Result<()> {
        if per_label.len() != self.grid.len() {
            return Err(invalid("one tracking weight per label expected"));
        }
        if per_label.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("tracking weight c(u) must be nonnegative"));
        }
        self.running_tracking = per_label;
        Ok(())
    }

    pub fn spec(&self) -> &PolynomialSpec {
        &self.spec
    }

    pub fn grid(&self) -> &LabelGrid {
        &self.grid
    }

    pub fn running_tracking(&self) -> &[f64] {
        &self.running_tracking
    }

    /// Model with the constant running cost shifted by `kappa`.
    pub fn with_running_shift(&self, kappa: f64) -> Self {
        let mut m = self.clone();
        m.spec.running.constant += kappa;
        m
    }

    fn neighborhood<'e>(&self, label: usize, env: &'e MeanField) -> &'e [f64] {
        env.neighborhood_state_mean(label)
            .expect("mean field was built without this model's graphon")
    }

    fn quadratic_cost(c: &CostTerms, tracking: f64, x: &[f64], m: &[f64]) -> f64 {
        let mut s = c.constant;
        for (xj, mj) in x.iter().zip(m) {
            s += c.linear * xj + 0.5 * c.state_quadratic * xj * xj;
            s += 0.5 * tracking * (xj - mj) * (xj - mj);
        }
        s
    }

    fn holder_constant(c: &CostTerms, dim: usize) -> f64 {
        (c.linear.abs() * (dim as f64).sqrt()).max(0.5 * c.state_quadratic.abs())
    }
}

impl Model for PolynomialModel {
    fn state_dim(&self) -> usize {
        self.spec.dim
    }

    fn noise_dim(&self) -> usize {
        self.spec.dim
    }

    fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }

    fn graphon(&self) -> Option<&Graphon> {
        Some(&self.graphon)
    }

    fn drift(&self, label: usize, x: &[f64], a: &[f64], env: &MeanField, out: &mut [f64]) {
        let d = &self.spec.drift;
        let m = self.neighborhood(label, env);
        let abar = if d.neighborhood_action_mean != 0.0 {
            Some(
                env.neighborhood_action_mean(label)
                    .expect("model depends on the action law but none was supplied"),
            )
        } else {
            None
        };
        for j in 0..self.spec.dim {
            let mut v = d.constant + d.state * x[j] + d.action * a[j] + d.neighborhood_mean * m[j];
            if let Some(ab) = abar {
                v += d.neighborhood_action_mean * ab[j];
            }
            out[j] = v;
        }
    }

    fn volatility(&self, label: usize, x: &[f64], _a: &[f64], env: &MeanField, out: &mut [f64]) {
        let s = &self.spec.volatility;
        let m = self.neighborhood(label, env);
        let d = self.spec.dim;
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..d {
            out[j * d + j] = s.constant + s.state * x[j] + s.neighborhood_mean * m[j];
        }
    }

    fn running_cost(&self, label: usize, x: &[f64], a: &[f64], env: &MeanField) -> f64 {
        let m = self.neighborhood(label, env);
        let c = &self.spec.running;
        let a2: f64 = a.iter().map(|v| v * v).sum();
        Self::quadratic_cost(c, self.running_tracking[label], x, m) + 0.5 * c.action_quadratic * a2
    }

    fn terminal_cost(&self, label: usize, x: &[f64], env: &MeanField) -> f64 {
        let m = self.neighborhood(label, env);
        Self::quadratic_cost(&self.spec.terminal, self.terminal_tracking[label], x, m)
    }

    fn constants(&self) -> DeclaredConstants {
        let d = &self.spec.drift;
        let s = &self.spec.volatility;
        let gamma = self.graphon.mean_lipschitz(&self.grid);
        let root_d = (self.spec.dim as f64).sqrt();
        let lipschitz = [
            d.state.abs(),
            d.neighborhood_mean.abs() * gamma,
            s.state.abs(),
            s.neighborhood_mean.abs() * gamma,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let growth = [
            (d.constant.abs() + s.constant.abs()) * root_d,
            d.state.abs() + s.state.abs(),
            d.action.abs(),
            (d.neighborhood_mean.abs() + s.neighborhood_mean.abs()) * gamma,
            d.neighborhood_action_mean.abs() * gamma,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let tracked = self
            .running_tracking
            .iter()
            .chain(&self.terminal_tracking)
            .any(|c| *c != 0.0);
        let holder = (!tracked).then(|| {
            Self::holder_constant(&self.spec.running, self.spec.dim)
                .max(Self::holder_constant(&self.spec.terminal, self.spec.dim))
        });
        DeclaredConstants {
            lipschitz,
            growth,
            holder,
            holder_exponents: [1.0; 4],
            strengthened_growth: d.action == 0.0 && d.neighborhood_action_mean == 0.0,
            action_law_independent: d.neighborhood_action_mean == 0.0,
        }
    }
}
