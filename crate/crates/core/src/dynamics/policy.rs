use std::fmt;
use std::sync::Arc;

use super::model::MeanField;
use crate::error::{invalid, Result};

/// Markov feedback `a(u, t, x; μ)`. The environment carries the current
/// state-law collection; no action law is available at decision time.
pub trait FeedbackMap: Send + Sync {
    fn action(&self, label: usize, t: f64, x: &[f64], env: &MeanField, out: &mut [f64]);
}

impl<F> FeedbackMap for F
where
    F: Fn(usize, f64, &[f64], &MeanField, &mut [f64]) + Send + Sync,
{
    fn action(&self, label: usize, t: f64, x: &[f64], env: &MeanField, out: &mut [f64]) {
        self(label, t, x, env, out)
    }
}

/// Open-loop table: on time piece `p` a particle of label `k` with mark `Z`
/// plays level `⌊Z·L⌋` of `levels[k][p]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenLoopTable {
    dim: usize,
    starts: Vec<f64>,
    levels: Vec<Vec<Vec<f64>>>,
}

impl OpenLoopTable {
    /// `starts[p]` is the left end of piece `p`; `levels[k][p]` is a flat
    /// list of `q`-dimensional actions.
    pub fn new(dim: usize, starts: Vec<f64>, levels: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if dim == 0 || starts.is_empty() {
            return Err(invalid("open-loop table needs a dimension and at least one piece"));
        }
        if starts.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("open-loop piece starts must increase"));
        }
        for per_label in &levels {
            if per_label.len() != starts.len() {
                return Err(invalid("one level list per time piece expected"));
            }
            for l in per_label {
                if l.is_empty() || l.len() % dim != 0 {
                    return Err(invalid("open-loop levels must be nonempty multiples of q"));
                }
            }
        }
        Ok(Self {
            dim,
            starts,
            levels,
        })
    }

    fn piece(&self, t: f64) -> usize {
        piece_index(&self.starts[1..], t)
    }

    fn action(&self, label: usize, t: f64, z: f64, out: &mut [f64]) {
        let l = &self.levels[label][self.piece(t)];
        let count = l.len() / self.dim;
        let i = ((z * count as f64) as usize).min(count - 1);
        out.copy_from_slice(&l[i * self.dim..(i + 1) * self.dim]);
    }
}

/// Index of the piece containing `t` given interior breakpoints.
fn piece_index(breaks: &[f64], t: f64) -> usize {
    breaks
        .iter()
        .take_while(|b| t >= **b - 1e-9 * (1.0 + b.abs()))
        .count()
}

/// Control rule used by the simulator.
#[derive(Clone)]
pub enum Policy {
    Feedback(Arc<dyn FeedbackMap>),
    OpenLoop(Arc<OpenLoopTable>),
    /// `pieces[i]` acts on `[breaks[i-1], breaks[i])`.
    Piecewise {
        breaks: Vec<f64>,
        pieces: Vec<Policy>,
    },
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Feedback(_) => f.write_str("Feedback(..)"),
            Policy::OpenLoop(t) => f.debug_tuple("OpenLoop").field(t).finish(),
            Policy::Piecewise { breaks, pieces } => f
                .debug_struct("Piecewise")
                .field("breaks", breaks)
                .field("pieces", pieces)
                .finish(),
        }
    }
}

impl Policy {
    pub fn feedback(map: impl FeedbackMap + 'static) -> Self {
        Policy::Feedback(Arc::new(map))
    }

    /// The same action everywhere.
    pub fn constant(a: Vec<f64>) -> Self {
        Self::feedback(move |_: usize, _: f64, _: &[f64], _: &MeanField, out: &mut [f64]| {
            out.copy_from_slice(&a)
        })
    }

    /// Per-label constant actions, flat `K×q`.
    pub fn per_label_constant(q: usize, actions: Vec<f64>) -> Self {
        Self::feedback(move |k: usize, _: f64, _: &[f64], _: &MeanField, out: &mut [f64]| {
            out.copy_from_slice(&actions[k * q..(k + 1) * q])
        })
    }

    pub fn open_loop(table: OpenLoopTable) -> Self {
        Policy::OpenLoop(Arc::new(table))
    }

    pub fn piecewise(breaks: Vec<f64>, pieces: Vec<Policy>) -> Result<Self> {
        if pieces.len() != breaks.len() + 1 {
            return Err(invalid("piecewise policy needs one more piece than breaks"));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("piecewise breaks must increase"));
        }
        Ok(Policy::Piecewise { breaks, pieces })
    }

    pub fn is_markov(&self) -> bool {
        match self {
            Policy::Feedback(_) => true,
            Policy::OpenLoop(_) => false,
            Policy::Piecewise { pieces, .. } => pieces.iter().all(Policy::is_markov),
        }
    }

    /// Action of a particle of label `label` with state `x` and mark `z`.
    pub fn action(
        &self,
        label: usize,
        t: f64,
        x: &[f64],
        z: f64,
        env: &MeanField,
        out: &mut [f64],
    ) {
        match self {
            Policy::Feedback(m) => m.action(label, t, x, env, out),
            Policy::OpenLoop(table) => table.action(label, t, z, out),
            Policy::Piecewise { breaks, pieces } => {
                pieces[piece_index(breaks, t)].action(label, t, x, z, env, out)
            }
        }
    }
}
