use crate::error::{invalid, Error, Result};
use crate::measure_space::{EmpiricalMeasure, MeasureCollection};

/// Per-label state–action couplings `π^u` on `ℝᵈ × A` whose first marginal
/// is a fixed state collection. Each entry points at a state atom of the
/// marginal and carries an action and a weight.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedCoupling {
    marginal: MeasureCollection,
    action_dim: usize,
    /// Per label: `(state atom index, weight)` and flat actions.
    entries: Vec<(Vec<(usize, f64)>, Vec<f64>)>,
}

impl LiftedCoupling {
    /// General coupling. Rejects entries whose weights do not reproduce the
    /// marginal atom weights.
    pub fn new(
        marginal: MeasureCollection,
        action_dim: usize,
        entries: Vec<(Vec<(usize, f64)>, Vec<f64>)>,
    ) -> Result<Self> {
        if action_dim == 0 {
            return Err(invalid("action dimension must be positive"));
        }
        if entries.len() != marginal.len() {
            return Err(Error::GridMismatch);
        }
        for (k, (idx, actions)) in entries.iter().enumerate() {
            let m = marginal.measure(k);
            if actions.len() != idx.len() * action_dim {
                return Err(invalid("one action per coupling entry expected"));
            }
            let mut mass = vec![0.0; m.len()];
            for &(i, w) in idx {
                if i >= m.len() || !(w >= 0.0) {
                    return Err(Error::MarginalViolation { label: k });
                }
                mass[i] += w;
            }
            if mass.iter().zip(m.weights()).any(|(a, b)| (a - b).abs() > 1e-12) {
                return Err(Error::MarginalViolation { label: k });
            }
        }
        Ok(Self {
            marginal,
            action_dim,
            entries,
        })
    }

    /// `π^u = μ^u ∘ (Id × â_u)⁻¹`: action `actions[k][i]` attached to atom `i`.
    pub fn attach(marginal: &MeasureCollection, action_dim: usize, actions: Vec<Vec<f64>>) -> Result<Self> {
        if actions.len() != marginal.len() {
            return Err(Error::GridMismatch);
        }
        let entries = actions
            .into_iter()
            .zip(marginal.per_label())
            .map(|(a, m)| ((0..m.len()).map(|i| (i, m.weight(i))).collect(), a))
            .collect();
        Self::new(marginal.clone(), action_dim, entries)
    }

    /// `θπ + (1 − θ)π'` for couplings with the same marginal.
    pub fn mix(&self, other: &Self, theta: f64) -> Result<Self> {
        if self.marginal != other.marginal || self.action_dim != other.action_dim {
            return Err(invalid("mixed couplings need the same marginal and action space"));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(invalid(format!("mixture weight {theta} outside [0,1]")));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|((ia, aa), (ib, ab))| {
                let idx = ia
                    .iter()
                    .map(|(i, w)| (*i, theta * w))
                    .chain(ib.iter().map(|(i, w)| (*i, (1.0 - theta) * w)))
                    .collect();
                let mut act = aa.clone();
                act.extend_from_slice(ab);
                (idx, act)
            })
            .collect();
        Self::new(self.marginal.clone(), self.action_dim, entries)
    }

    pub fn marginal(&self) -> &MeasureCollection {
        &self.marginal
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// `(state, action, weight)` entries of label `k`.
    pub fn entries(&self, k: usize) -> impl Iterator<Item = (&[f64], &[f64], f64)> + '_ {
        let (idx, actions) = &self.entries[k];
        let m = self.marginal.measure(k);
        let q = self.action_dim;
        idx.iter()
            .enumerate()
            .map(move |(e, (i, w))| (m.atom(*i), &actions[e * q..(e + 1) * q], *w))
    }

    /// Second marginal `π₂`.
    pub fn action_law(&self) -> Result<MeasureCollection> {
        let per_label = self
            .entries
            .iter()
            .map(|(idx, actions)| {
                EmpiricalMeasure::weighted(
                    self.action_dim,
                    actions.clone(),
                    idx.iter().map(|(_, w)| *w).collect(),
                )
            })
            .collect::<Result<_>>()?;
        MeasureCollection::new(self.marginal.grid().clone(), per_label)
    }
}
