use serde::{Deserialize, Serialize};

use super::functional::TestFunction;
use crate::error::{invalid, Error, Result};
use crate::measure_space::MeasureCollection;
use crate::rng::{Domain, StreamRng};

/// Finite-difference check of the flat derivative along `μ + ε(ν − μ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateauxReport {
    pub epsilons: Vec<f64>,
    /// `[v(μ + ε(ν−μ)) − v(μ)] / ε`.
    pub finite_differences: Vec<f64>,
    /// `⟨δv/δm(μ), ν − μ⟩`.
    pub pairing: f64,
    /// `|finite difference − pairing|`.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log ε`; `None` when
    /// fewer than two errors are above round-off.
    pub slope: Option<f64>,
    pub max_error: f64,
}

pub fn gateaux_check(
    tf: &TestFunction,
    t: f64,
    mu: &MeasureCollection,
    nu: &MeasureCollection,
    epsilons: &[f64],
) -> Result<GateauxReport> {
    if mu.grid() != nu.grid() {
        return Err(Error::GridMismatch);
    }
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        return Err(invalid("epsilons must lie in (0, 1]"));
    }
    let base = tf.prepare(t, mu)?;
    let pairing = base.pairing(mu, nu);
    let mut finite_differences = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let v = tf.evaluate(t, &mu.mix(nu, eps)?)?;
        finite_differences.push((v - base.value) / eps);
    }
    let errors: Vec<f64> = finite_differences.iter().map(|f| (f - pairing).abs()).collect();
    let floor = 1e-13 * (1.0 + base.value.abs() + pairing.abs());
    let pts: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(&errors)
        .filter(|(_, e)| **e > floor)
        .map(|(x, e)| (x.ln(), e.ln()))
        .collect();
    let slope = (pts.len() >= 2).then(|| log_log_slope(&pts));
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(GateauxReport {
        epsilons: epsilons.to_vec(),
        finite_differences,
        pairing,
        errors,
        slope,
        max_error,
    })
}

/// Ordinary least-squares slope through `(x, y)` pairs.
pub fn log_log_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Sampled growth of the flat-derivative gradient and Hessian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthProbe {
    pub radii: Vec<f64>,
    /// Per radius: `max |∂ₓδv/δm| / (1 + |x| + d(μ, δ₀))`.
    pub gradient_ratio: Vec<f64>,
    /// Per radius: max Frobenius norm of `∂ₓ²δv/δm`.
    pub hessian_norm: Vec<f64>,
}

impl GrowthProbe {
    pub fn max_gradient_ratio(&self) -> f64 {
        self.gradient_ratio.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_hessian_norm(&self) -> f64 {
        self.hessian_norm.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluate the growth ratios at `samples` random directions per label and
/// radius.
pub fn growth_probe(
    tf: &TestFunction,
    t: f64,
    mu: &MeasureCollection,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<GrowthProbe> {
    let p = tf.prepare(t, mu)?;
    let d = tf.dim;
    let norm = mu.norm();
    let mut gradient_ratio = Vec::with_capacity(radii.len());
    let mut hessian_norm = Vec::with_capacity(radii.len());
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut h = vec![0.0; d * d];
    for (r_index, &r) in radii.iter().enumerate() {
        let (mut gr, mut hn) = (0.0f64, 0.0f64);
        for k in 0..mu.len() {
            let mut rng = StreamRng::new(seed, Domain::Probe, ((r_index as u64) << 32) | k as u64);
            for _ in 0..samples {
                x.iter_mut().for_each(|v| *v = rng.normal());
                let len = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                x.iter_mut().for_each(|v| *v *= r / len);
                g.iter_mut().for_each(|v| *v = 0.0);
                h.iter_mut().for_each(|v| *v = 0.0);
                p.add_gradient(k, &x, 1.0, &mut g);
                p.add_hessian(k, &x, 1.0, &mut h);
                let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                gr = gr.max(gn / (1.0 + r + norm));
                hn = hn.max(h.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        gradient_ratio.push(gr);
        hessian_norm.push(hn);
    }
    Ok(GrowthProbe {
        radii: radii.to_vec(),
        gradient_ratio,
        hessian_norm,
    })
}
