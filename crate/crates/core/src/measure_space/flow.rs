use serde::{Deserialize, Serialize};

use super::collection::{collection_distance, MeasureCollection};
use crate::error::{invalid, Error, Result};

/// Time-indexed measure collections `s ↦ μ_s`.
///
/// A path-coupled flow keeps particle identity across snapshots: atom `i` of
/// label `u` at every time is the same trajectory, so the flow also encodes a
/// law on discrete paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureFlow {
    times: Vec<f64>,
    snapshots: Vec<MeasureCollection>,
    path_coupled: bool,
}

impl MeasureFlow {
    pub fn new(
        times: Vec<f64>,
        snapshots: Vec<MeasureCollection>,
        path_coupled: bool,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != snapshots.len() {
            return Err(invalid(format!(
                "{} times for {} snapshots",
                times.len(),
                snapshots.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::TimeGridMismatch(
                "time grid must be strictly increasing".into(),
            ));
        }
        let first = &snapshots[0];
        for s in &snapshots[1..] {
            if s.grid() != first.grid() {
                return Err(Error::GridMismatch);
            }
            if s.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    got: s.dim(),
                });
            }
            if path_coupled {
                for k in 0..first.len() {
                    if s.measure(k).len() != first.measure(k).len()
                        || s.measure(k).weights() != first.measure(k).weights()
                    {
                        return Err(invalid(
                            "path-coupled snapshots must share atom counts and weights",
                        ));
                    }
                }
            }
        }
        Ok(Self {
            times,
            snapshots,
            path_coupled,
        })
    }

    /// Constant-in-time extension of `initial` on `times`.
    pub fn time_constant(initial: &MeasureCollection, times: Vec<f64>) -> Result<Self> {
        let snapshots = vec![initial.clone(); times.len()];
        Self::new(times, snapshots, true)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[MeasureCollection] {
        &self.snapshots
    }

    pub fn snapshot(&self, k: usize) -> &MeasureCollection {
        &self.snapshots[k]
    }

    pub fn initial(&self) -> &MeasureCollection {
        &self.snapshots[0]
    }

    pub fn terminal(&self) -> &MeasureCollection {
        self.snapshots.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_path_coupled(&self) -> bool {
        self.path_coupled
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.times.len() != other.times.len()
            || self
                .times
                .iter()
                .zip(&other.times)
                .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
        {
            return Err(Error::TimeGridMismatch(
                "flows are recorded on different time grids".into(),
            ));
        }
        if self.initial().grid() != other.initial().grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// Path-space distance under the coupling that pairs equal particle indices,
/// with the sup norm over recorded times. An upper bound on the true
/// path-space `d(μ, ν)`.
pub fn path_distance(a: &MeasureFlow, b: &MeasureFlow) -> Result<f64> {
    a.check_compatible(b)?;
    if !(a.path_coupled && b.path_coupled) {
        return Err(invalid("path distance needs path-coupled flows"));
    }
    let grid = a.initial().grid();
    let dim = a.initial().dim();
    if b.initial().dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: b.initial().dim(),
        });
    }
    let mut total = 0.0;
    for k in 0..grid.len() {
        let ma = a.initial().measure(k);
        let mb = b.initial().measure(k);
        if ma.len() != mb.len() {
            return Err(invalid(format!(
                "label {k}: {} vs {} particles",
                ma.len(),
                mb.len()
            )));
        }
        let n = ma.len();
        let mut sup = vec![0.0f64; n];
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            let xa = sa.measure(k).atoms();
            let xb = sb.measure(k).atoms();
            for (i, s) in sup.iter_mut().enumerate() {
                let d2: f64 = xa[i * dim..(i + 1) * dim]
                    .iter()
                    .zip(&xb[i * dim..(i + 1) * dim])
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                *s = s.max(d2);
            }
        }
        let e: f64 = sup.iter().zip(ma.weights()).map(|(s, w)| s * w).sum();
        total += grid.weight(k) * e;
    }
    Ok(total.sqrt())
}

/// `max_s d(μ_s, ν_s)` over recorded times: a lower bound on the path-space
/// distance that needs no coupling.
pub fn marginal_sup_distance(a: &MeasureFlow, b: &MeasureFlow) -> Result<f64> {
    a.check_compatible(b)?;
    let mut best = 0.0f64;
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        best = best.max(collection_distance(sa, sb)?);
    }
    Ok(best)
}
