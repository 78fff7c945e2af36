use std::collections::HashSet;

use crate::error::{invalid, Error, Result};
use crate::measure_space::{draw_states, EmpiricalMeasure, LabelGrid, MeasureCollection};
use crate::rng::{self, Domain, StreamRng};

/// `N` particles per label: states, uniform marks `Z`, and noise stream ids.
///
/// Storage is flat and label-major: particle `i` of label `k` sits at
/// position `k·N + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    grid: LabelGrid,
    dim: usize,
    per_label: usize,
    states: Vec<f64>,
    marks: Vec<f64>,
    streams: Vec<u64>,
}

impl ParticleEnsemble {
    /// `ξ = j(u, Z)` with marks from the counter-based mark stream and
    /// stream ids `(label, index)`.
    pub fn from_quantile_map(
        quantile_map: impl Fn(usize, f64, f64) -> Vec<f64> + Sync,
        grid: &LabelGrid,
        per_label: usize,
        seed: u64,
    ) -> Result<Self> {
        let (states, marks, dim) = draw_states(&quantile_map, grid, per_label, seed)?;
        let streams = (0..grid.len() * per_label)
            .map(|p| rng::stream_id(p / per_label, p % per_label))
            .collect();
        Self::from_parts(grid.clone(), dim, per_label, states, marks, streams)
    }

    pub fn from_parts(
        grid: LabelGrid,
        dim: usize,
        per_label: usize,
        states: Vec<f64>,
        marks: Vec<f64>,
        streams: Vec<u64>,
    ) -> Result<Self> {
        let n = grid.len() * per_label;
        if dim == 0 || per_label == 0 {
            return Err(invalid("ensemble needs positive dimension and particle count"));
        }
        if states.len() != n * dim || marks.len() != n || streams.len() != n {
            return Err(invalid("ensemble buffers have inconsistent lengths"));
        }
        if let Some(x) = states.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("initial state {x}")));
        }
        if marks.iter().any(|z| !(*z > 0.0 && *z < 1.0)) {
            return Err(invalid("marks must lie in (0, 1)"));
        }
        let unique: HashSet<u64> = streams.iter().copied().collect();
        if unique.len() != n {
            return Err(invalid("noise stream ids must be unique"));
        }
        Ok(Self {
            grid,
            dim,
            per_label,
            states,
            marks,
            streams,
        })
    }

    pub fn grid(&self) -> &LabelGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn per_label(&self) -> usize {
        self.per_label
    }

    pub fn total(&self) -> usize {
        self.marks.len()
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn streams(&self) -> &[u64] {
        &self.streams
    }

    pub fn state(&self, p: usize) -> &[f64] {
        &self.states[p * self.dim..(p + 1) * self.dim]
    }

    pub fn label_states(&self, k: usize) -> &[f64] {
        let w = self.per_label * self.dim;
        &self.states[k * w..(k + 1) * w]
    }

    /// Same marks and streams, new states.
    pub fn with_states(&self, states: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            self.grid.clone(),
            self.dim,
            self.per_label,
            states,
            self.marks.clone(),
            self.streams.clone(),
        )
    }

    /// Apply `f(label, x)` to every state.
    pub fn map_states(&self, f: impl Fn(usize, &[f64]) -> Vec<f64>) -> Result<Self> {
        let mut out = Vec::with_capacity(self.states.len());
        for p in 0..self.total() {
            let y = f(p / self.per_label, self.state(p));
            if y.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: y.len(),
                });
            }
            out.extend(y);
        }
        self.with_states(out)
    }

    /// Empirical state collection (uniform weights).
    pub fn collection(&self) -> MeasureCollection {
        collection_from_flat(&self.grid, self.dim, self.per_label, &self.states)
    }

    /// `∫ E|ξ|² λ(du)` under the empirical law.
    pub fn second_moment(&self) -> f64 {
        self.collection().norm().powi(2)
    }

    /// Same noise streams (and hence a synchronous coupling).
    pub fn shares_streams_with(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.per_label == other.per_label
            && self.dim == other.dim
            && self.streams == other.streams
    }

    /// Within each label, permute the states while marks and noise streams
    /// stay in place. The per-label empirical law of `ξ` is unchanged.
    pub fn shuffle_states(&self, seed: u64) -> Self {
        let mut out = self.clone();
        for k in 0..self.grid.len() {
            let perm = StreamRng::new(seed, Domain::Shuffle, k as u64).permutation(self.per_label);
            for (i, &j) in perm.iter().enumerate() {
                let dst = (k * self.per_label + i) * self.dim;
                let src = (k * self.per_label + j) * self.dim;
                out.states[dst..dst + self.dim].copy_from_slice(&self.states[src..src + self.dim]);
            }
        }
        out
    }

    /// Within each label, permute whole particles `(ξ, Z, stream)`.
    pub fn shuffle_particles(&self, seed: u64) -> Self {
        let mut out = self.shuffle_states(seed);
        for k in 0..self.grid.len() {
            let perm = StreamRng::new(seed, Domain::Shuffle, k as u64).permutation(self.per_label);
            for (i, &j) in perm.iter().enumerate() {
                out.marks[k * self.per_label + i] = self.marks[k * self.per_label + j];
                out.streams[k * self.per_label + i] = self.streams[k * self.per_label + j];
            }
        }
        out
    }
}

pub(crate) fn collection_from_flat(
    grid: &LabelGrid,
    dim: usize,
    per_label: usize,
    flat: &[f64],
) -> MeasureCollection {
    let w = per_label * dim;
    let weights = vec![1.0 / per_label as f64; per_label];
    let per = (0..grid.len())
        .map(|k| {
            EmpiricalMeasure::from_parts_unchecked(
                dim,
                flat[k * w..(k + 1) * w].to_vec(),
                weights.clone(),
                true,
            )
        })
        .collect();
    MeasureCollection::new(grid.clone(), per).expect("grid-consistent by construction")
}
