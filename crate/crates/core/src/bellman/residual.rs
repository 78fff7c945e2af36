use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coupling::LiftedCoupling;
use crate::calculus::{Prepared, TestFunction};
use crate::dynamics::{cost, simulate, CostEstimate, MeanField, Model, ParticleEnsemble, Policy, SimParams};
use crate::error::{invalid, Error, Result};
use crate::measure_space::MeasureCollection;

/// A smooth candidate for the value function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateValue {
    pub function: TestFunction,
    #[serde(default)]
    pub description: String,
}

impl CandidateValue {
    pub fn new(function: TestFunction, description: impl Into<String>) -> Self {
        Self {
            function,
            description: description.into(),
        }
    }
}

/// Finite action search: a uniform grid of `points` per coordinate on the
/// box `[lower, upper]`, refined `zoom_levels` times around the incumbent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSearch {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: usize,
    #[serde(default)]
    pub zoom_levels: usize,
    /// Cap on jointly enumerated assignments for action-law dependent models.
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    100_000
}

impl ActionSearch {
    pub fn cube(dim: usize, lo: f64, hi: f64, points: usize, zoom_levels: usize) -> Self {
        Self {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
            points,
            zoom_levels,
            budget: default_budget(),
        }
    }

    fn validate(&self, q: usize) -> Result<()> {
        if self.points == 0 || self.lower.is_empty() {
            return Err(Error::EmptyActionGrid);
        }
        if self.lower.len() != q || self.upper.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: self.lower.len(),
            });
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if !(l.is_finite() && u.is_finite()) {
                return Err(invalid("action search box must be finite"));
            }
            if l > u {
                return Err(Error::EmptyActionGrid);
            }
        }
        Ok(())
    }

    /// Grid spacing after all refinements (largest coordinate).
    pub fn resolution(&self) -> f64 {
        if self.points < 2 {
            return self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).fold(0.0, f64::max);
        }
        let mut s = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / (self.points - 1) as f64)
            .fold(0.0, f64::max);
        for _ in 0..self.zoom_levels {
            s = 2.0 * s / (self.points - 1) as f64;
        }
        s
    }

    /// All points of the base grid, flat.
    pub fn grid(&self) -> Vec<f64> {
        box_grid(&self.lower, &self.upper, self.points)
    }

    /// Minimize `f` over the grid with zoom refinement. Returns the best
    /// value and action; earlier points win ties.
    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> f64) -> (f64, Vec<f64>) {
        let q = self.lower.len();
        let (mut lo, mut hi) = (self.lower.clone(), self.upper.clone());
        let mut best = (f64::INFINITY, self.lower.clone());
        for level in 0..=self.zoom_levels {
            let pts = box_grid(&lo, &hi, self.points);
            for a in pts.chunks_exact(q) {
                let v = f(a);
                if v < best.0 {
                    best = (v, a.to_vec());
                }
            }
            if level == self.zoom_levels || self.points < 2 {
                break;
            }
            for j in 0..q {
                let s = (hi[j] - lo[j]) / (self.points - 1) as f64;
                lo[j] = (best.1[j] - s).max(self.lower[j]);
                hi[j] = (best.1[j] + s).min(self.upper[j]);
            }
        }
        best
    }
}

fn box_grid(lo: &[f64], hi: &[f64], points: usize) -> Vec<f64> {
    let q = lo.len();
    let axis = |j: usize, i: usize| {
        if points == 1 {
            0.5 * (lo[j] + hi[j])
        } else {
            lo[j] + (hi[j] - lo[j]) * i as f64 / (points - 1) as f64
        }
    };
    let total = points.pow(q as u32);
    let mut out = Vec::with_capacity(total * q);
    for mut c in 0..total {
        for j in 0..q {
            out.push(axis(j, c % points));
            c /= points;
        }
    }
    out
}

/// Per-atom pieces of the Hamiltonian integrand that do not depend on `a`.
struct AtomScratch {
    grad: Vec<f64>,
    hess: Vec<f64>,
    drift: Vec<f64>,
    vol: Vec<f64>,
}

impl AtomScratch {
    fn new(d: usize, l: usize) -> Self {
        Self {
            grad: vec![0.0; d],
            hess: vec![0.0; d * d],
            drift: vec![0.0; d],
            vol: vec![0.0; d * l],
        }
    }

    fn load(&mut self, p: &Prepared, k: usize, x: &[f64]) {
        self.grad.iter_mut().for_each(|v| *v = 0.0);
        self.hess.iter_mut().for_each(|v| *v = 0.0);
        p.add_gradient(k, x, 1.0, &mut self.grad);
        p.add_hessian(k, x, 1.0, &mut self.hess);
    }

    /// `∂ₓδφ·b + ½∂ₓ²δφ:σσᵀ + f` at `(x, a)`.
    fn integrand(&mut self, model: &dyn Model, k: usize, x: &[f64], a: &[f64], env: &MeanField) -> f64 {
        let d = self.grad.len();
        let l = self.vol.len() / d;
        model.drift(k, x, a, env, &mut self.drift);
        model.volatility(k, x, a, env, &mut self.vol);
        let mut h: f64 = self.grad.iter().zip(&self.drift).map(|(g, b)| g * b).sum();
        for r in 0..d {
            for c in 0..d {
                let cov: f64 = (0..l).map(|j| self.vol[r * l + j] * self.vol[c * l + j]).sum();
                h += 0.5 * self.hess[r * d + c] * cov;
            }
        }
        h + model.running_cost(k, x, a, env)
    }
}

fn check_model(model: &dyn Model, phi: &CandidateValue, mu: &MeasureCollection) -> Result<()> {
    if model.state_dim() != mu.dim() || phi.function.dim != mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.state_dim(),
            got: mu.dim(),
        });
    }
    Ok(())
}

/// `𝓗(u_k, t, π, φ) = ∫ [∂ₓδφ/δm(t,μ)(u_k,x)·b + ½∂ₓ²δφ/δm:σσᵀ + f] π^{u_k}(dx, da)`
/// with `μ = π₁` and the coefficient measure arguments `(π₁, π₂)`.
pub fn hamiltonian(
    model: &dyn Model,
    label: usize,
    t: f64,
    mu: &MeasureCollection,
    pi: &LiftedCoupling,
    phi: &CandidateValue,
) -> Result<f64> {
    if pi.marginal() != mu {
        return Err(Error::MarginalViolation { label });
    }
    if label >= mu.len() {
        return Err(invalid(format!("label index {label} outside the grid")));
    }
    check_model(model, phi, mu)?;
    let p = phi.function.prepare(t, mu)?;
    let nu = pi.action_law()?;
    let env = model.mean_field(mu, Some(&nu));
    Ok(coupling_hamiltonian(model, &p, label, pi, &env))
}

fn coupling_hamiltonian(model: &dyn Model, p: &Prepared, k: usize, pi: &LiftedCoupling, env: &MeanField) -> f64 {
    let mut s = AtomScratch::new(model.state_dim(), model.noise_dim());
    pi.entries(k)
        .map(|(x, a, w)| {
            s.load(p, k, x);
            w * s.integrand(model, k, x, a, env)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellmanResidual {
    /// `−∂ₜφ(t, μ) − inf_π ∫_U 𝓗 λ(du)` with the infimum over the search.
    pub residual: f64,
    pub time_derivative: f64,
    pub infimum: f64,
    pub grid_resolution: f64,
    /// Minimizing action per state atom, per label (flat).
    pub actions: Vec<Vec<f64>>,
}

/// Bellman residual at `(t, μ)`. Models whose coefficients ignore the action
/// law are minimized atom by atom; otherwise deterministic assignments of
/// base-grid actions to all atoms are enumerated jointly.
pub fn bellman_residual(
    model: &dyn Model,
    phi: &CandidateValue,
    t: f64,
    mu: &MeasureCollection,
    search: &ActionSearch,
) -> Result<BellmanResidual> {
    let q = model.action_space().dim();
    search.validate(q)?;
    check_model(model, phi, mu)?;
    let p = phi.function.prepare(t, mu)?;
    let weights = mu.grid().weights();
    let (infimum, actions) = if model.constants().action_law_independent {
        let env = model.mean_field(mu, None);
        let per_label: Vec<(f64, Vec<f64>)> = (0..mu.len())
            .into_par_iter()
            .map(|k| {
                let m = mu.measure(k);
                let mut s = AtomScratch::new(model.state_dim(), model.noise_dim());
                let mut total = 0.0;
                let mut acts = Vec::with_capacity(m.len() * q);
                for (x, w) in m.iter() {
                    s.load(&p, k, x);
                    let (v, a) = search.minimize(|a| s.integrand(model, k, x, a, &env));
                    total += w * v;
                    acts.extend(a);
                }
                (total, acts)
            })
            .collect();
        let inf = per_label.iter().zip(weights).map(|((v, _), w)| w * v).sum();
        (inf, per_label.into_iter().map(|(_, a)| a).collect())
    } else {
        joint_search(model, &p, mu, search)?
    };
    Ok(BellmanResidual {
        residual: -p.time_derivative - infimum,
        time_derivative: p.time_derivative,
        infimum,
        grid_resolution: if model.constants().action_law_independent {
            search.resolution()
        } else {
            ActionSearch {
                zoom_levels: 0,
                ..search.clone()
            }
            .resolution()
        },
        actions,
    })
}

fn joint_search(
    model: &dyn Model,
    p: &Prepared,
    mu: &MeasureCollection,
    search: &ActionSearch,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let q = model.action_space().dim();
    let grid = search.grid();
    let g = grid.len() / q;
    let atoms: Vec<usize> = mu.per_label().iter().map(|m| m.len()).collect();
    let slots: usize = atoms.iter().sum();
    let combinations = (g as f64).powi(slots as i32);
    if combinations > search.budget as f64 {
        return Err(Error::BudgetExceeded {
            combinations,
            budget: search.budget,
        });
    }
    let weights = mu.grid().weights();
    let total = combinations as usize;
    let evaluate = |mut code: usize| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut actions = Vec::with_capacity(atoms.len());
        for n in &atoms {
            let mut a = Vec::with_capacity(n * q);
            for _ in 0..*n {
                a.extend_from_slice(&grid[(code % g) * q..(code % g + 1) * q]);
                code /= g;
            }
            actions.push(a);
        }
        let pi = LiftedCoupling::attach(mu, q, actions.clone())?;
        let nu = pi.action_law()?;
        let env = model.mean_field(mu, Some(&nu));
        let v = (0..mu.len())
            .map(|k| weights[k] * coupling_hamiltonian(model, p, k, &pi, &env))
            .sum();
        Ok((v, actions))
    };
    let values: Vec<(f64, Vec<Vec<f64>>)> = (0..total)
        .into_par_iter()
        .map(evaluate)
        .collect::<Result<_>>()?;
    Ok(values
        .into_iter()
        .fold((f64::INFINITY, Vec::new()), |best, c| if c.0 < best.0 { c } else { best }))
}

/// `φ(T, μ) − ∫_U ∫ g(u, x, μ) μ^u(dx) λ(du)`.
pub fn terminal_residual(model: &dyn Model, phi: &CandidateValue, t_end: f64, mu: &MeasureCollection) -> Result<f64> {
    check_model(model, phi, mu)?;
    let v = phi.function.evaluate(t_end, mu)?;
    let env = model.mean_field(mu, None);
    let g: f64 = (0..mu.len())
        .map(|k| mu.grid().weight(k) * mu.measure(k).integrate(|x| model.terminal_cost(k, x, &env)))
        .sum();
    Ok(v - g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// `φ(t₀, μ₀)`.
    pub candidate_value: f64,
    pub cost: CostEstimate,
    /// `J − φ(t₀, μ₀)`.
    pub gap: f64,
    pub residual_times: Vec<f64>,
    pub bellman_residuals: Vec<f64>,
    pub terminal_residual: f64,
    pub grid_resolution: f64,
}

/// Simulate a Markov feedback and compare its cost with the candidate value;
/// Bellman residuals are evaluated along the realized flow at `checkpoints`
/// evenly spread recorded times before the horizon.
pub fn verify_policy(
    model: &dyn Model,
    phi: &CandidateValue,
    feedback: &Policy,
    init: &ParticleEnsemble,
    params: &SimParams,
    search: &ActionSearch,
    checkpoints: usize,
) -> Result<VerificationReport> {
    if !feedback.is_markov() {
        return Err(invalid("verification needs a Markov feedback policy"));
    }
    let result = simulate(model, feedback, init, params)?;
    let j = cost(&result);
    let candidate_value = phi.function.evaluate(params.t0, &init.collection())?;
    let flow = &result.flow;
    let inner = flow.len() - 1;
    let picks: Vec<usize> = if checkpoints == 0 || inner == 0 {
        Vec::new()
    } else {
        let mut v: Vec<usize> = (0..checkpoints).map(|i| i * inner / checkpoints).collect();
        v.dedup();
        v
    };
    let mut residual_times = Vec::with_capacity(picks.len());
    let mut bellman_residuals = Vec::with_capacity(picks.len());
    for i in picks {
        let t = flow.times()[i];
        residual_times.push(t);
        bellman_residuals.push(bellman_residual(model, phi, t, flow.snapshot(i), search)?.residual);
    }
    Ok(VerificationReport {
        candidate_value,
        cost: j,
        gap: j.value - candidate_value,
        residual_times,
        bellman_residuals,
        terminal_residual: terminal_residual(model, phi, params.t_end(), flow.terminal())?,
        grid_resolution: search.resolution(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{Component, Functional};
    use crate::dynamics::{ActionSpace, CostTerms, DriftTerms, PolynomialModel, PolynomialSpec};
    use crate::measure_space::{EmpiricalMeasure, Graphon, LabelGrid};

    fn model(spec: PolynomialSpec, grid: &LabelGrid) -> PolynomialModel {
        PolynomialModel::new(
            spec,
            grid,
            Graphon::constant(grid, 1.0).unwrap(),
            ActionSpace::cube(1, -3.0, 3.0).unwrap(),
        )
        .unwrap()
    }

    fn sample_mu(grid: &LabelGrid) -> MeasureCollection {
        MeasureCollection::new(
            grid.clone(),
            (0..grid.len())
                .map(|k| EmpiricalMeasure::uniform(1, vec![k as f64 - 0.5, 0.3, 1.1]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn zero_phi() -> CandidateValue {
        CandidateValue::new(TestFunction::new(1, Vec::new()), "zero")
    }

    #[test]
    fn unit_running_cost_gives_unit_hamiltonian() {
        let grid = LabelGrid::uniform(2, 1.0).unwrap();
        let m = model(
            PolynomialSpec {
                running: CostTerms {
                    constant: 1.0,
                    ..Default::default()
                },
                ..Default::default()
            },
            &grid,
        );
        let mu = sample_mu(&grid);
        let pi = LiftedCoupling::attach(&mu, 1, vec![vec![0.1, 2.0, -1.0]; 2]).unwrap();
        assert!((hamiltonian(&m, 1, 0.0, &mu, &pi, &zero_phi()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_candidate_with_action_drift() {
        let grid = LabelGrid::uniform(1, 1.0).unwrap();
        let m = model(
            PolynomialSpec {
                drift: DriftTerms {
                    action: 1.0,
                    ..Default::default()
                },
                ..Default::default()
            },
            &grid,
        );
        let mu = sample_mu(&grid);
        let phi = CandidateValue::new(
            TestFunction::single(
                1,
                Functional::Linear {
                    component: Component::coordinate(1, 0),
                },
            ),
            "mean",
        );
        let pi = LiftedCoupling::attach(&mu, 1, vec![vec![2.0; 3]]).unwrap();
        assert!((hamiltonian(&m, 0, 0.0, &mu, &pi, &phi).unwrap() - 2.0).abs() < 1e-15);
        let other = sample_mu(&LabelGrid::uniform(1, 2.0).unwrap());
        assert!(matches!(
            hamiltonian(&m, 0, 0.0, &other, &pi, &phi),
            Err(Error::MarginalViolation { .. })
        ));
    }

    #[test]
    fn residual_of_zero_candidate_and_cost_shift() {
        let grid = LabelGrid::uniform(2, 1.5).unwrap();
        let spec = PolynomialSpec {
            running: CostTerms {
                action_quadratic: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let m = model(spec, &grid);
        let mu = sample_mu(&grid);
        let search = ActionSearch::cube(1, -1.0, 1.0, 5, 0);
        let r = bellman_residual(&m, &zero_phi(), 0.0, &mu, &search).unwrap();
        assert_eq!(r.residual, 0.0);
        let shifted = bellman_residual(&m.with_running_shift(0.25), &zero_phi(), 0.0, &mu, &search).unwrap();
        assert!((shifted.residual - (r.residual - 0.25 * 1.5)).abs() < 1e-14);
        let empty = ActionSearch::cube(1, -1.0, 1.0, 0, 0);
        assert!(matches!(
            bellman_residual(&m, &zero_phi(), 0.0, &mu, &empty),
            Err(Error::EmptyActionGrid)
        ));
    }

    #[test]
    fn terminal_residual_examples() {
        let grid = LabelGrid::uniform(1, 1.0).unwrap();
        let m = model(PolynomialSpec::default(), &grid);
        let mu = MeasureCollection::dirac(&grid, &[0.4]).unwrap();
        assert_eq!(terminal_residual(&m, &zero_phi(), 1.0, &mu).unwrap(), 0.0);
        let m = model(
            PolynomialSpec {
                terminal: CostTerms {
                    linear: 1.0,
                    ..Default::default()
                },
                ..Default::default()
            },
            &grid,
        );
        let phi = CandidateValue::new(
            TestFunction::single(
                1,
                Functional::Linear {
                    component: Component::coordinate(1, 0),
                },
            ),
            "mean",
        );
        assert_eq!(terminal_residual(&m, &phi, 1.0, &mu).unwrap(), 0.0);
    }

    #[test]
    fn zoom_refines_a_smooth_minimum() {
        let s = ActionSearch::cube(1, -2.0, 2.0, 9, 6);
        let (v, a) = s.minimize(|a| (a[0] - 0.3337).powi(2));
        assert!((a[0] - 0.3337).abs() <= s.resolution());
        assert!(v < 1e-8 && s.resolution() < 2e-4);
    }

    #[test]
    fn action_law_dependent_models_use_joint_search() {
        let grid = LabelGrid::uniform(2, 1.0).unwrap();
        let spec = PolynomialSpec {
            drift: DriftTerms {
                neighborhood_action_mean: 1.0,
                ..Default::default()
            },
            running: CostTerms {
                action_quadratic: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let m = model(spec, &grid);
        let mu = MeasureCollection::new(
            grid.clone(),
            vec![EmpiricalMeasure::uniform(1, vec![0.0, 1.0]).unwrap(); 2],
        )
        .unwrap();
        let phi = CandidateValue::new(
            TestFunction::single(
                1,
                Functional::Linear {
                    component: Component::coordinate(1, 0),
                },
            ),
            "mean",
        );
        // H = ā + ½a² per atom: the joint infimum over {−1, 0, 1} plays −1 everywhere.
        let search = ActionSearch::cube(1, -1.0, 1.0, 3, 0);
        let r = bellman_residual(&m, &phi, 0.0, &mu, &search).unwrap();
        assert!((r.infimum + 0.5).abs() < 1e-12, "{}", r.infimum);
        let too_small = ActionSearch {
            budget: 10,
            ..search
        };
        assert!(matches!(
            bellman_residual(&m, &phi, 0.0, &mu, &too_small),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
