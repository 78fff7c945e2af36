use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Finite weighted discretization of the label space `(U, λ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelGrid {
    labels: Vec<f64>,
    weights: Vec<f64>,
    total_mass: f64,
}

impl LabelGrid {
    pub fn new(labels: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(invalid("label grid needs at least one label"));
        }
        if labels.len() != weights.len() {
            return Err(invalid(format!(
                "{} labels but {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(invalid(format!("label weight {w} is not strictly positive")));
        }
        if labels.iter().any(|u| !u.is_finite()) {
            return Err(invalid("label values must be finite"));
        }
        let mut sorted = labels.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("labels must be distinct"));
        }
        let total_mass = weights.iter().sum();
        Ok(Self {
            labels,
            weights,
            total_mass,
        })
    }

    /// `k` labels `1/k, 2/k, ..., 1` with total mass `mass` spread evenly.
    pub fn uniform(k: usize, mass: f64) -> Result<Self> {
        if k == 0 {
            return Err(invalid("label grid needs at least one label"));
        }
        let labels = (1..=k).map(|i| i as f64 / k as f64).collect();
        Self::new(labels, vec![mass / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self, k: usize) -> f64 {
        self.labels[k]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// `λ(U)`.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }
}
