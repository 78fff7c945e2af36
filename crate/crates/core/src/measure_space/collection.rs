use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::empirical::EmpiricalMeasure;
use super::grid::LabelGrid;
use super::transport::{wasserstein2_with, TransportOptions};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, Domain};

/// One empirical measure per label: an element of `L²_λ(P₂(ℝᵈ))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureCollection {
    grid: LabelGrid,
    per_label: Vec<EmpiricalMeasure>,
}

impl MeasureCollection {
    pub fn new(grid: LabelGrid, per_label: Vec<EmpiricalMeasure>) -> Result<Self> {
        if per_label.len() != grid.len() {
            return Err(invalid(format!(
                "{} measures for {} labels",
                per_label.len(),
                grid.len()
            )));
        }
        let d = per_label[0].dim();
        if let Some(m) = per_label.iter().find(|m| m.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: m.dim(),
            });
        }
        Ok(Self { grid, per_label })
    }

    /// Every label carries `δ_point`.
    pub fn dirac(grid: &LabelGrid, point: &[f64]) -> Result<Self> {
        let m = EmpiricalMeasure::dirac(point)?;
        Self::new(grid.clone(), vec![m; grid.len()])
    }

    pub fn grid(&self) -> &LabelGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.per_label[0].dim()
    }

    pub fn len(&self) -> usize {
        self.per_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_label.is_empty()
    }

    pub fn measure(&self, k: usize) -> &EmpiricalMeasure {
        &self.per_label[k]
    }

    pub fn per_label(&self) -> &[EmpiricalMeasure] {
        &self.per_label
    }

    pub fn into_per_label(self) -> Vec<EmpiricalMeasure> {
        self.per_label
    }

    /// Flat `K×d` buffer of per-label means.
    pub fn label_means(&self) -> Vec<f64> {
        self.per_label.iter().flat_map(|m| m.mean()).collect()
    }

    /// `d(μ, δ₀) = (∫ W₂(μ^u, δ₀)² λ(du))^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.per_label
            .iter()
            .zip(self.grid.weights())
            .map(|(m, w)| w * m.second_moment())
            .sum::<f64>()
            .sqrt()
    }

    /// Per-label mixture `(1-ε)μ^u + ε ν^u`.
    pub fn mix(&self, other: &Self, eps: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let per_label = self
            .per_label
            .iter()
            .zip(&other.per_label)
            .map(|(a, b)| a.mix(b, eps))
            .collect::<Result<_>>()?;
        Self::new(self.grid.clone(), per_label)
    }

    pub fn moments(&self, order: MomentOrder) -> Moments {
        let per_label: Vec<Vec<f64>> = self
            .per_label
            .iter()
            .map(|m| match order {
                MomentOrder::First => m.mean(),
                MomentOrder::Second => m.coordinate_second_moments(),
            })
            .collect();
        let mut aggregate = vec![0.0; self.dim()];
        for (v, w) in per_label.iter().zip(self.grid.weights()) {
            for (a, x) in aggregate.iter_mut().zip(v) {
                *a += w * x;
            }
        }
        Moments {
            per_label,
            aggregate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentOrder {
    First,
    Second,
}

/// Per-label moment vectors and their λ-integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub per_label: Vec<Vec<f64>>,
    pub aggregate: Vec<f64>,
}

/// `d(μ, ν) = (∫ W₂(μ^u, ν^u)² λ(du))^{1/2}`.
pub fn collection_distance(mu: &MeasureCollection, nu: &MeasureCollection) -> Result<f64> {
    collection_distance_with(mu, nu, &TransportOptions::default())
}

pub fn collection_distance_with(
    mu: &MeasureCollection,
    nu: &MeasureCollection,
    opts: &TransportOptions,
) -> Result<f64> {
    if mu.grid != nu.grid {
        return Err(Error::GridMismatch);
    }
    let per_label: Vec<f64> = mu
        .per_label
        .par_iter()
        .zip(nu.per_label.par_iter())
        .map(|(a, b)| wasserstein2_with(a, b, opts).map(|v| v.distance))
        .collect::<Result<_>>()?;
    // Fixed-order reduction.
    let mut s = 0.0;
    for (d, w) in per_label.iter().zip(mu.grid.weights()) {
        s += w * d * d;
    }
    Ok(s.sqrt())
}

/// Initial law sampler `ξ^u = j(u, Z^u)`: `particles_per_label` draws per
/// label with `Z` from the label's counter-based stream.
pub fn sample_initial(
    quantile_map: impl Fn(usize, f64, f64) -> Vec<f64> + Sync,
    grid: &LabelGrid,
    particles_per_label: usize,
    seed: u64,
) -> Result<MeasureCollection> {
    let (states, _marks, dim) = draw_states(&quantile_map, grid, particles_per_label, seed)?;
    let n = particles_per_label;
    let per_label = (0..grid.len())
        .map(|k| EmpiricalMeasure::uniform(dim, states[k * n * dim..(k + 1) * n * dim].to_vec()))
        .collect::<Result<_>>()?;
    MeasureCollection::new(grid.clone(), per_label)
}

/// Shared by [`sample_initial`] and ensemble construction: returns flat
/// states, per-particle marks `Z`, and the state dimension.
pub(crate) fn draw_states(
    quantile_map: &(impl Fn(usize, f64, f64) -> Vec<f64> + Sync),
    grid: &LabelGrid,
    n: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    if n == 0 {
        return Err(invalid("particles_per_label must be at least 1"));
    }
    let marks: Vec<f64> = (0..grid.len() * n)
        .map(|p| rng::uniform(seed, Domain::Mark, rng::stream_id(p / n, p % n), 0, 0))
        .collect();
    let points: Vec<Vec<f64>> = marks
        .par_iter()
        .enumerate()
        .map(|(p, z)| quantile_map(p / n, grid.label(p / n), *z))
        .collect();
    let dim = points[0].len();
    if dim == 0 {
        return Err(invalid("quantile map returned an empty point"));
    }
    let mut states = Vec::with_capacity(points.len() * dim);
    for (p, x) in points.into_iter().enumerate() {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "quantile map output for label {} particle {}",
                p / n,
                p % n
            )));
        }
        states.extend(x);
    }
    Ok((states, marks, dim))
}

/// Standard normal quantile function `Φ⁻¹`.
pub fn standard_normal_quantile(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diracs(grid: &LabelGrid, pts: &[f64]) -> MeasureCollection {
        MeasureCollection::new(
            grid.clone(),
            pts.iter()
                .map(|p| EmpiricalMeasure::dirac(&[*p]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn distance_examples() {
        let one = LabelGrid::new(vec![0.0], vec![1.0]).unwrap();
        let a = diracs(&one, &[0.0]);
        let b = diracs(&one, &[2.0]);
        assert_eq!(collection_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(collection_distance(&a, &b).unwrap(), 2.0);

        let two = LabelGrid::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let a = diracs(&two, &[0.0, 0.0]);
        let b = diracs(&two, &[1.0, 3.0]);
        let d = collection_distance(&a, &b).unwrap();
        assert!((d - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let g1 = LabelGrid::uniform(2, 1.0).unwrap();
        let g2 = LabelGrid::uniform(2, 2.0).unwrap();
        let a = diracs(&g1, &[0.0, 0.0]);
        let b = diracs(&g2, &[0.0, 0.0]);
        assert!(matches!(collection_distance(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn sampling_examples() {
        let grid = LabelGrid::uniform(4, 1.0).unwrap();
        let zero = sample_initial(|_, _, _| vec![0.0], &grid, 10, 1).unwrap();
        let origin = MeasureCollection::dirac(&grid, &[0.0]).unwrap();
        assert_eq!(collection_distance(&zero, &origin).unwrap(), 0.0);

        let lab = sample_initial(|_, u, _| vec![u], &grid, 5, 1).unwrap();
        for k in 0..4 {
            assert!(lab.measure(k).atoms().iter().all(|x| *x == grid.label(k)));
        }

        let again = sample_initial(|_, _, z| vec![z], &grid, 7, 42).unwrap();
        let again2 = sample_initial(|_, _, z| vec![z], &grid, 7, 42).unwrap();
        assert_eq!(again, again2);

        assert!(sample_initial(|_, _, _| vec![f64::NAN], &grid, 3, 1).is_err());
        assert!(sample_initial(|_, _, _| vec![0.0], &grid, 0, 1).is_err());
    }

    #[test]
    fn gaussian_sampling_clt() {
        let grid = LabelGrid::uniform(3, 1.0).unwrap();
        let n = 100_000;
        let mu = sample_initial(|_, _, z| vec![standard_normal_quantile(z)], &grid, n, 9).unwrap();
        for m in mu.per_label() {
            assert!(m.mean()[0].abs() < 3.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn moments_match_naive_loops() {
        let grid = LabelGrid::new(vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        let mu = sample_initial(|k, _, z| vec![z + k as f64, 2.0 * z], &grid, 13, 5).unwrap();
        let first = mu.moments(MomentOrder::First);
        let second = mu.moments(MomentOrder::Second);
        let mut agg = [0.0; 2];
        for k in 0..2 {
            let m = mu.measure(k);
            for c in 0..2 {
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for i in 0..m.len() {
                    s1 += m.atom(i)[c] / m.len() as f64;
                    s2 += m.atom(i)[c] * m.atom(i)[c] / m.len() as f64;
                }
                assert!((first.per_label[k][c] - s1).abs() < 1e-14);
                assert!((second.per_label[k][c] - s2).abs() < 1e-14);
                agg[c] += grid.weight(k) * s1;
            }
        }
        for c in 0..2 {
            assert!((first.aggregate[c] - agg[c]).abs() < 1e-14);
        }
        let d = MeasureCollection::dirac(&grid, &[1.5, -2.0]).unwrap();
        assert_eq!(d.moments(MomentOrder::First).per_label[1], vec![1.5, -2.0]);
    }
}
