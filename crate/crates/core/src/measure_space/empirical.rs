use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Finitely supported probability measure on `ℝᵈ`.
///
/// Atoms are stored row-major in one flat buffer. `uniform` records that all
/// weights equal `1/n`, which enables the sorted-sample fast path in
/// one-dimensional transport.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
    uniform: bool,
}

const WEIGHT_SUM_TOL: f64 = 1e-9;

impl EmpiricalMeasure {
    /// Uniform weights `1/n` on the given atoms (flat, row-major).
    pub fn uniform(dim: usize, atoms: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if atoms.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: atoms.len() % dim,
            });
        }
        check_finite(&atoms)?;
        let n = atoms.len() / dim;
        Ok(Self {
            dim,
            atoms,
            weights: vec![1.0 / n as f64; n],
            uniform: true,
        })
    }

    pub fn weighted(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mut m = Self::uniform(dim, atoms)?;
        if weights.len() != m.len() {
            return Err(invalid(format!(
                "{} weights for {} atoms",
                weights.len(),
                m.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("atom weights must be finite and nonnegative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(invalid(format!("atom weights sum to {s}, not 1")));
        }
        m.weights = weights;
        m.uniform = false;
        Ok(m)
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::uniform(point.len(), point.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.atoms
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (x, w) in self.iter() {
            for (mj, xj) in m.iter_mut().zip(x) {
                *mj += w * xj;
            }
        }
        m
    }

    /// Raw second moment `∫|x|² dμ`, i.e. `W₂(μ, δ₀)²`.
    pub fn second_moment(&self) -> f64 {
        self.iter()
            .map(|(x, w)| w * x.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Per-coordinate raw second moments.
    pub fn coordinate_second_moments(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (x, w) in self.iter() {
            for (mj, xj) in m.iter_mut().zip(x) {
                *mj += w * xj * xj;
            }
        }
        m
    }

    /// Trace of the covariance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m.iter().map(|v| v * v).sum::<f64>()
    }

    /// `∫ φ dμ`.
    pub fn integrate(&self, mut phi: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * phi(x)).sum()
    }

    /// The mixture `(1-ε)·self + ε·other`.
    pub fn mix(&self, other: &Self, eps: f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if !(0.0..=1.0).contains(&eps) {
            return Err(invalid(format!("mixture weight {eps} outside [0,1]")));
        }
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        let weights = self
            .weights
            .iter()
            .map(|w| (1.0 - eps) * w)
            .chain(other.weights.iter().map(|w| eps * w))
            .collect();
        Ok(Self {
            dim: self.dim,
            atoms,
            weights,
            uniform: false,
        })
    }

    /// Apply `f` to every atom, keeping weights.
    pub fn map_atoms(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        let mut dim = None;
        for x in self.atoms.chunks_exact(self.dim) {
            let y = f(x);
            match dim {
                None => dim = Some(y.len()),
                Some(d) if d != y.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: y.len(),
                    })
                }
                _ => {}
            }
            atoms.extend(y);
        }
        check_finite(&atoms)?;
        Ok(Self {
            dim: dim.unwrap_or(self.dim),
            atoms,
            weights: self.weights.clone(),
            uniform: self.uniform,
        })
    }

    pub(crate) fn from_parts_unchecked(
        dim: usize,
        atoms: Vec<f64>,
        weights: Vec<f64>,
        uniform: bool,
    ) -> Self {
        debug_assert_eq!(atoms.len(), dim * weights.len());
        Self {
            dim,
            atoms,
            weights,
            uniform,
        }
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("atom coordinate {x}")));
    }
    Ok(())
}
